#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "scif/harness.hpp"
#include "scif/typecheck.hpp"

namespace scif::harness {

using namespace ast;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string source_dir() {
  if (const char* env = std::getenv("SCIF_HOME")) return env;
#ifdef SCIF_SOURCE_DIR
  return SCIF_SOURCE_DIR;
#else
  return ".";
#endif
}

std::vector<CdaEvent> detect_cda_events(const std::vector<rt::TraceEvent>& trace,
                                        const Label& target, const TrustEnv& trust) {
  std::vector<CdaEvent> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i];
    if (e.kind != "call" || !e.pc_env || !e.pc_ex) continue;
    if (!flows_to(*e.pc_env, target, trust) && flows_to(*e.pc_ex, target, trust))
      out.push_back({i, *e.pc_env, *e.pc_ex, target});
  }
  return out;
}

namespace {

TxExpectation expectation_from_json(const json& j) {
  TxExpectation e;
  if (j.contains("outcome")) e.outcome = j["outcome"].get<std::string>();
  if (j.contains("failure")) e.failure = j["failure"].get<std::string>();
  e.heap_unchanged = j.value("heap_unchanged", false);
  return e;
}

BigInt to_big(const json& j) {
  if (j.is_string()) return BigInt(j.get<std::string>());
  return BigInt(j.get<std::int64_t>());
}

const Type* storage_type(const ContractTable& ct, const std::string& type, const std::string& key,
                         std::vector<std::string>& keys) {
  auto open = key.find('[');
  std::string field = key.substr(0, open);
  const FieldDecl* f = find_field(ct, type, field);
  if (!f) return nullptr;
  const Type* t = &f->type;
  for (std::size_t i = open; i != std::string::npos && i < key.size();) {
    auto close = key.find(']', i);
    keys.push_back(key.substr(i + 1, close - i - 1));
    if (t->base != BaseKind::Mapping) return nullptr;
    t = t->elem.get();
    i = close + 1;
    if (i < key.size() && key[i] != '[') return nullptr;
  }
  return t;
}

std::string plain(rt::RValue v) {
  v.view.clear();
  return rt::to_string(v);
}

}  // namespace

Scenario scenario_from_json(const json& j, const std::string& base_dir) {
  Scenario s;
  s.name = j.at("name").get<std::string>();
  s.description = j.value("description", "");
  s.base_dir = base_dir;
  s.setup = j.at("setup");
  if (j.contains("mutations"))
    for (const auto& m : j["mutations"])
      s.mutations.emplace_back(m.at("contract").get<std::string>(),
                               m.at("mutation").get<std::string>());
  if (j.contains("expect_typecheck")) s.expect_typecheck = j["expect_typecheck"];
  for (const auto& t : j.at("transactions")) {
    TxSpec tx;
    tx.origin = t.at("origin").get<std::string>();
    tx.receiver = t.at("receiver").get<std::string>();
    tx.method = t.at("method").get<std::string>();
    if (t.contains("args")) tx.args = t["args"];
    if (t.contains("value")) tx.value = t["value"];
    if (t.contains("expect")) tx.expect = expectation_from_json(t["expect"]);
    if (t.contains("expect_unsafe")) tx.expect_unsafe = expectation_from_json(t["expect_unsafe"]);
    s.transactions.push_back(std::move(tx));
  }
  if (j.contains("predicates"))
    for (const auto& p : j["predicates"]) s.predicates.push_back(p);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  json j = json::parse(in);
  // Sources in scenario files are relative to the repository root.
  std::filesystem::path p(path);
  return scenario_from_json(j, p.parent_path().parent_path().string());
}

std::vector<Scenario> load_scenarios(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<Scenario> out;
  for (const auto& p : paths) out.push_back(load_scenario(p));
  return out;
}

std::vector<rt::RValue> call_args(const rt::ChainState& chain, const std::string& receiver,
                                  const std::string& method, const json& args) {
  auto it = chain.heap.contracts.find(receiver);
  if (it == chain.heap.contracts.end()) throw std::invalid_argument("no contract at " + receiver);
  const ContractTable& ct = *chain.table;
  if (!has_method(ct, it->second.type, method))
    throw std::invalid_argument("no method " + method + " in " + it->second.type);
  const MethodSig& sig = lookup_method(ct, it->second.type, method).method->sig;
  if (sig.params.size() != args.size())
    throw std::invalid_argument(method + " expects " + std::to_string(sig.params.size()) +
                                " argument(s)");
  std::vector<rt::RValue> out;
  for (std::size_t i = 0; i < args.size(); ++i)
    out.push_back(rt::value_from_json(sig.params[i].type, args[i]));
  return out;
}

ojson ScenarioReport::to_json() const {
  ojson j;
  j["scenario"] = name;
  j["pass"] = pass;
  j["diffs"] = diffs;
  ojson rs = ojson::array();
  for (const auto& r : receipts) rs.push_back(r.to_json());
  j["receipts"] = rs;
  j["cda_events"] = cda_events;
  return j;
}

ScenarioReport run_scenario(const Scenario& s, const ScenarioOptions& opts) {
  ScenarioReport rep;
  rep.name = s.name;
  auto diff = [&](std::string d) {
    rep.pass = false;
    rep.diffs.push_back(std::move(d));
  };

  rt::ChainState chain;
  tc::NodeContexts contexts;
  bool well_typed = false;
  try {
    chain = rt::chain_state_from_json(s.setup, s.base_dir);
    for (const auto& [contract, mutation] : s.mutations)
      chain.table = std::make_shared<const ContractTable>(
          mutate_table(*chain.table, contract, mutation));
    tc::Checker checker(*chain.table);
    checker.record_contexts(opts.typed_step);
    checker.check_program();
    const auto& diags = checker.diagnostics();
    contexts = checker.node_contexts();
    well_typed = diags.empty();
    if (s.expect_typecheck.is_string() && s.expect_typecheck == "ok") {
      if (!diags.empty()) diff("expected no diagnostics, got " + diags.front().to_text());
    } else if (s.expect_typecheck.is_object()) {
      const json& e = s.expect_typecheck;
      if (diags.empty()) {
        diff("expected a " + e.value("rule", std::string("?")) + " diagnostic, got none");
      } else {
        const Diagnostic& d = diags.front();
        std::string file = e.value("file", std::string());
        bool file_ok = file.empty() || (d.file.size() >= file.size() &&
                                        d.file.compare(d.file.size() - file.size(), file.size(),
                                                       file) == 0);
        if (!file_ok || d.rule != e.value("rule", d.rule) ||
            d.pos.line != e.value("line", d.pos.line) || d.pos.col != e.value("col", d.pos.col))
          diff("expected first diagnostic " + e.dump() + ", got " + d.to_text());
      }
    }
  } catch (const ParseError& e) {
    diff("setup: " + (e.diagnostics().empty() ? std::string("parse error")
                                                : e.diagnostics().front().to_text()));
    return rep;
  } catch (const std::exception& e) {
    diff(std::string("setup: ") + e.what());
    return rep;
  }

  rt::RunOptions ro;
  ro.sigcheck = opts.sigcheck;
  ro.atomic_fastpath = opts.atomic_fastpath;
  // Re-checking during evaluation only means something for a well-typed program.
  ro.typed_step = opts.typed_step && well_typed;
  ro.contexts = ro.typed_step ? &contexts : nullptr;

  std::vector<std::string> victims;
  for (const auto& [addr, c] : chain.heap.contracts)
    if (!chain.table->at(c.type).is_attacker) victims.push_back(addr);

  for (std::size_t i = 0; i < s.transactions.size(); ++i) {
    const TxSpec& tx = s.transactions[i];
    std::string tag = "tx " + std::to_string(i) + " (" + tx.method + ")";
    std::string pre = chain.heap.serialize();
    rep.pre_heaps.push_back(pre);
    rt::TransactionReceipt r;
    try {
      rt::CallRequest req{tx.origin, tx.receiver, tx.method,
                          call_args(chain, tx.receiver, tx.method, tx.args), to_big(tx.value)};
      r = rt::run_transaction(chain, req, ro);
    } catch (const rt::TypedStepError& e) {
      diff(tag + ": typed-step check failed: " + e.what());
      return rep;
    } catch (const std::exception& e) {
      diff(tag + ": " + e.what());
      return rep;
    }
    for (const auto& v : victims) {
      TrustEnv t = rt::store_env(r.post, v);
      rep.cda_events += detect_cda_events(r.trace, Label::atom(v), t).size();
    }
    const auto& expect = opts.sigcheck ? tx.expect : tx.expect_unsafe;
    if (expect) {
      std::string outcome = rt::to_string(r.outcome);
      if (expect->outcome && *expect->outcome != outcome)
        diff(tag + ": expected " + *expect->outcome + ", got " + outcome + " " +
             rt::to_string(r.value));
      if (expect->failure) {
        std::string got = r.value.kind == rt::RValue::Kind::Failure ? r.value.name : "(none)";
        if (got != *expect->failure)
          diff(tag + ": expected failure " + *expect->failure + ", got " + got);
      }
      if (expect->heap_unchanged && r.post.serialize() != pre)
        diff(tag + ": heap changed");
    }
    chain.heap = r.post;
    rep.receipts.push_back(std::move(r));
  }

  for (const auto& p : s.predicates) {
    std::string mode = p.value("mode", "safe");
    if (mode != "both" && (mode == "safe") != opts.sigcheck) continue;
    std::string kind = p.at("kind").get<std::string>();
    std::string what = kind + " " + p.dump();
    try {
      if (kind == "storage") {
        std::string addr = p.at("address");
        std::string key = p.at("key");
        const auto& c = chain.heap.contracts.at(addr);
        std::vector<std::string> keys;
        const Type* t = storage_type(*chain.table, c.type, key, keys);
        if (!t) throw std::invalid_argument("bad storage key " + key);
        auto it = c.storage.find(key);
        rt::RValue got = it == c.storage.end() ? rt::zero_value(*t) : it->second;
        rt::RValue want = rt::value_from_json(*t, p.at("equals"));
        if (plain(got) != plain(want)) diff(what + ": got " + plain(got));
      } else if (kind == "balance") {
        BigInt got = chain.heap.balance(p.at("address"));
        if (got != to_big(p.at("equals"))) diff(what + ": got " + got.str());
      } else if (kind == "product") {
        BigInt prod = 1;
        for (const auto& f : p.at("factors")) {
          const auto& c = chain.heap.contracts.at(f.at("address").get<std::string>());
          auto it = c.storage.find(f.at("key").get<std::string>());
          prod *= it == c.storage.end() ? BigInt(0) : it->second.integer;
        }
        if (prod != to_big(p.at("equals"))) diff(what + ": got " + prod.str());
      } else if (kind == "no_cda") {
        if (rep.cda_events != 0) diff(what + ": got " + std::to_string(rep.cda_events));
      } else if (kind == "cda_at_least") {
        if (rep.cda_events < p.at("count").get<std::size_t>())
          diff(what + ": got " + std::to_string(rep.cda_events));
      } else if (kind == "trace_contains" || kind == "trace_absent") {
        bool found = false;
        for (const auto& r : rep.receipts)
          for (const auto& e : r.trace)
            found |= e.kind == p.at("event").get<std::string>() &&
                     (!p.contains("callee") || e.callee == p["callee"].get<std::string>()) &&
                     (!p.contains("method") || e.method == p["method"].get<std::string>());
        if (found != (kind == "trace_contains")) diff(what);
      } else {
        diff("unknown predicate " + kind);
      }
    } catch (const std::exception& e) {
      diff(what + ": " + e.what());
    }
  }
  return rep;
}

std::vector<ScenarioReport> run_scenarios(const std::vector<Scenario>& ss,
                                          const ScenarioOptions& opts) {
  std::vector<ScenarioReport> out(ss.size());
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, ss.size()); ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < ss.size(); i = next++) out[i] = run_scenario(ss[i], opts);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace scif::harness
