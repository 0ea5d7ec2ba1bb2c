// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <array>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "scif/harness.hpp"
#include "scif/label.hpp"
#include "scif/syntax.hpp"
#include "scif/typecheck.hpp"
#include "support/label_gen.hpp"

using namespace scif;
using harness::Scenario;
using harness::ScenarioOptions;
using Outcome = rt::TransactionReceipt::Outcome;
using json = nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

std::string root(const std::string& rel) { return harness::source_dir() + "/" + rel; }

Scenario scenario(const std::string& name) { return harness::load_scenario(root("scenarios/" + name + ".json")); }

Diagnostics check(const ast::ContractTable& ct) {
  tc::Checker c(ct);
  c.check_program();
  return c.diagnostics();
}

ast::ContractTable corpus(std::initializer_list<const char*> files) {
  std::vector<std::string> paths;
  for (const char* f : files) paths.push_back(root(std::string("corpus/") + f));
  return load_files(paths);
}

std::string failure_name(const rt::TransactionReceipt& r) {
  return r.value.kind == rt::RValue::Kind::Failure ? r.value.name : "";
}

// Everything but the step count, which the fast path legitimately changes.
std::string receipt_key(const rt::TransactionReceipt& r) {
  json j = r.to_json(true);
  j.erase("steps");
  return j.dump() + r.post.serialize();
}

void lattice(Verdict& v) {
  auto labels = testing::enumerate_labels(3);
  auto envs = testing::enumerate_trust_envs(4);
  std::size_t mismatches = 0;
  for (const auto& t : envs)
    for (const auto& a : labels)
      for (const auto& b : labels)
        if (flows_to(a, b, t) != oracle_flows_to(a, b, t)) ++mismatches;
  v.detail << labels.size() << " labels x " << labels.size() << " x " << envs.size()
           << " hypothesis sets, " << mismatches << " mismatches";
  v.require(mismatches == 0, "mismatch");
}

void corpus_checks(Verdict& v) {
  const std::vector<std::pair<const char*, ast::ContractTable>> studies = {
      {"parity", corpus({"parity.scifc"})},
      {"dexible", corpus({"dexible.scifc"})},
      {"uniswap+token", corpus({"token.scifc", "uniswap.scifc"})},
      {"koet", corpus({"koet.scifc"})},
      {"towncrier", corpus({"towncrier.scifc"})},
  };
  for (const auto& [name, ct] : studies) {
    std::size_t n = check(ct).size();
    v.detail << name << "=" << n << " ";
    v.require(n == 0, name);
  }
}

void mutants(Verdict& v) {
  struct Golden {
    std::vector<const char*> files;
    const char* contract;
    const char* mutation;
    const char* rule;
    const char* file;
    int line;
    int col;
  };
  const std::vector<Golden> goldens = {
      {{"token.scifc", "uniswap.scifc"}, "Uniswap", "remove-lock", "Call", "uniswap.scifc", 16, 7},
      {{"parity.scifc"}, "WalletLibrary", "make-public:initOwner", "Assign", "parity.scifc", 7, 5},
      {{"hodl.scifc"}, "HODLWallet", "late-update:withdrawals", "Assign", "hodl.scifc", 20, 5},
  };
  for (const auto& g : goldens) {
    std::vector<std::string> paths;
    for (const char* f : g.files) paths.push_back(root(std::string("corpus/") + f));
    Diagnostics d = check(harness::mutate_table(load_files(paths), g.contract, g.mutation));
    bool ok = !d.empty() && d.front().rule == g.rule && d.front().file.ends_with(g.file) &&
              d.front().pos.line == g.line && d.front().pos.col == g.col;
    v.detail << g.mutation << "=" << (d.empty() ? "accepted" : d.front().rule + "@" + std::to_string(d.front().pos.line) + ":" + std::to_string(d.front().pos.col)) << " ";
    v.require(ok, g.mutation);
  }
}

BigInt slot_int(const rt::Heap& h, const std::string& addr, const std::string& key) {
  const auto& s = h.contracts.at(addr).storage;
  auto it = s.find(key);
  return it == s.end() ? BigInt(0) : it->second.integer;
}

void attacks(Verdict& v) {
  {
    auto s = scenario("dexible_atk_cast");
    auto r = harness::run_scenario(s);
    bool ok = r.pass && r.receipts.size() == 2 &&
              failure_name(r.receipts[0]) == rt::failures::kDispatchMismatch &&
              r.receipts[0].post.serialize() == r.pre_heaps[0] &&
              r.receipts[1].outcome == Outcome::Committed;
    v.detail << "dexible=" << (ok ? "ok" : "bad") << " ";
    v.require(ok, "dexible");
  }
  {
    auto r = harness::run_scenario(scenario("koet_failing_send"));
    bool ok = r.pass && r.receipts.size() == 1 && r.receipts[0].outcome == Outcome::Reverted &&
              r.receipts[0].post.serialize() == r.pre_heaps[0];
    v.detail << "koet=" << (ok ? "ok" : "bad") << " ";
    v.require(ok, "koet");
  }
  {
    auto s = scenario("towncrier_failing_callback");
    auto r = harness::run_scenario(s);
    bool ok = r.pass && r.receipts.size() == 2 && r.receipts[1].outcome == Outcome::Committed;
    if (ok) {
      rt::ChainState pre = rt::chain_state_from_json(s.setup, s.base_dir);
      const rt::Heap& post = r.receipts[1].post;
      ok = post.balance("@operator") == pre.heap.balance("@operator") + 5 &&
           post.contracts.at("@tc").storage.at("delivered[0]").boolean &&
           slot_int(post, "@cb", "got") == slot_int(pre.heap, "@cb", "got");
    }
    v.detail << "towncrier=" << (ok ? "ok" : "bad") << " ";
    v.require(ok, "towncrier");
  }
  {
    auto s = scenario("uniswap_reentrancy");
    auto r = harness::run_scenario(s);
    bool ok = r.pass && r.receipts.size() == 1;
    if (ok) {
      rt::ChainState pre = rt::chain_state_from_json(s.setup, s.base_dir);
      const rt::Heap& post = r.receipts[0].post;
      auto product = [](const rt::Heap& h) {
        return slot_int(h, "@tokx", "balances[@uniswap]") * slot_int(h, "@toky", "balances[@uniswap]");
      };
      bool denied = false;
      for (const auto& e : r.receipts[0].trace)
        denied |= e.kind == "lock_bypass_denied" && e.callee == "@uniswap";
      ok = denied && product(pre.heap) == product(post);
      v.detail << "uniswap product " << product(pre.heap).str() << "->" << product(post).str();
    }
    v.require(ok, "uniswap");
  }
}

void sweep(Verdict& v) {
  auto start = std::chrono::steady_clock::now();
  harness::SweepResult safe = harness::cda_sweep(0, 1000);
  ScenarioOptions unsafe;
  unsafe.sigcheck = false;
  auto dex = harness::run_scenario(scenario("dexible_atk_cast"), unsafe);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.detail << safe.programs << " attackers, " << safe.transactions << " transactions, "
           << safe.cda_events << " CDA events; unsafe dexible " << dex.cda_events << " event(s); "
           << std::fixed << std::setprecision(1) << secs << " s";
  v.require(safe.programs == 1000 && safe.cda_events == 0, "safe sweep");
  v.require(dex.cda_events >= 1, "unsafe dexible");
  v.require(secs < 300, "time");
}

void soundness(Verdict& v) {
  constexpr std::size_t kPrograms = 100;
  std::size_t runs = 0;
  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < kPrograms; ++seed) {
    auto p = harness::gen_well_typed(seed);
    auto table = std::make_shared<const ast::ContractTable>(parse_program(p.source, "gen.scifc"));
    rt::ChainState chain = rt::chain_state_from_json(p.setup, table);
    tc::Checker ck(*table);
    ck.record_contexts(true);
    ck.check_program();
    bool oversize = false;
    for (const auto& [name, c] : table->contracts)
      for (const auto& m : c.methods)
        if (m.body && harness::node_count(*m.body) > 30) oversize = true;
    if (!ck.diagnostics().empty() || oversize) {
      ++bad;
      continue;
    }
    auto contexts = ck.node_contexts();
    rt::RunOptions ro;
    ro.typed_step = true;
    ro.contexts = &contexts;
    for (const auto& c : p.calls) {
      ++runs;
      try {
        rt::CallRequest req{c.origin, c.receiver, c.method,
                            harness::call_args(chain, c.receiver, c.method, c.args), 0};
        auto r = rt::run_transaction(chain, req, ro);
        std::string f = failure_name(r);
        if (f == rt::failures::kStuck || rt::failures::is_security_check(f)) ++bad;
        chain.heap = r.post;
      } catch (const std::exception&) {
        ++bad;
      }
    }
  }
  v.detail << kPrograms << " programs, " << runs << " transactions under per-step checking, " << bad
           << " stuck or rejected";
  v.require(bad == 0, "bad runs");
}

// A random nest of atomic blocks over three fields. Returns the source of the
// body and updates `model` with the state an independent reading expects.
std::string nest(std::mt19937_64& rng, int depth, std::array<int, 3>& model, bool& failed) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  std::string pad(static_cast<std::size_t>(4 + 2 * depth), ' ');
  std::string out;
  int items = 1 + pick(4);
  for (int i = 0; i < items; ++i) {
    if (depth < 3 && pick(3) == 0) {
      std::array<int, 3> saved = model;
      bool inner_failed = false;
      std::string body = nest(rng, depth + 1, model, inner_failed);
      if (inner_failed) model = saved;
      out += pad + "atomic {\n" + body + pad + "} rescue f" + std::to_string(depth) + " {}\n";
    } else {
      int field = pick(3);
      int value = 10 + pick(90);
      model[static_cast<std::size_t>(field)] = value;
      out += pad + "x" + std::to_string(field) + " = " + std::to_string(value) + ";\n";
    }
  }
  failed = depth > 0 && pick(2) == 0;
  if (failed) out += pad + "fail ()\n";
  return out;
}

void rollback(Verdict& v) {
  // Machine level: random heap edits under nested snapshots.
  std::mt19937_64 rng(2024);
  rt::ChainState chain = rt::chain_state_from_json(
      json{{"version", 1}, {"sources", json::array()}, {"users", {{"@u", 10}}},
           {"contracts", {{"@r", {{"type", "R"}, {"storage", {{"x0", 1}, {"x1", 2}, {"x2", 3}}}}}}}},
      std::make_shared<const ast::ContractTable>(
          parse_program("contract R {\n  uint x0;\n  uint x1;\n  uint x2;\n}\n", "r.scifc")));
  std::size_t machine_bad = 0;
  for (int round = 0; round < 1000; ++round) {
    rt::Machine m(chain, {});
    int levels = 1 + static_cast<int>(rng() % 4);
    std::vector<std::pair<int, std::string>> marks;
    for (int l = 0; l < levels; ++l) {
      marks.emplace_back(m.snapshot(), m.heap().serialize());
      int edits = 1 + static_cast<int>(rng() % 3);
      for (int e = 0; e < edits; ++e) {
        auto& st = m.heap().contracts.at("@r").storage;
        st["x" + std::to_string(rng() % 3)] = rt::RValue::of_int(static_cast<long>(rng() % 1000));
        m.heap().balances["@acct" + std::to_string(rng() % 3)] = static_cast<long>(rng() % 1000);
      }
    }
    // Unwind innermost first, sometimes committing a level instead.
    while (!marks.empty()) {
      auto [id, bytes] = marks.back();
      marks.pop_back();
      if (!marks.empty() && rng() % 3 == 0) {
        m.discard(id);
        continue;
      }
      m.rollback(id);
      if (m.heap().serialize() != bytes) ++machine_bad;
    }
    if (m.heap().serialize() != chain.heap.serialize() || m.live_snapshots() != 0) ++machine_bad;
  }

  // Program level: nested atomic blocks against the model.
  std::size_t program_bad = 0;
  for (int round = 0; round < 1000; ++round) {
    std::array<int, 3> model = {1, 2, 3};
    bool failed = false;
    std::string body = nest(rng, 0, model, failed);
    std::string src = "contract R {\n  uint x0;\n  uint x1;\n  uint x2;\n"
                      "  @public void go{any -> this}() {\n" + body + "  }\n}\n";
    rt::ChainState c = chain;
    c.table = std::make_shared<const ast::ContractTable>(parse_program(src, "r.scifc"));
    rt::RunOptions ro;
    ro.atomic_fastpath = round % 2 == 0;
    auto r = rt::run_transaction(c, {"@u", "@r", "go", {}, 0}, ro);
    rt::Heap expected = chain.heap;
    for (std::size_t i = 0; i < 3; ++i)
      expected.contracts.at("@r").storage["x" + std::to_string(i)] = rt::RValue::of_int(model[i]);
    if (r.outcome != Outcome::Committed || r.post.serialize() != expected.serialize()) ++program_bad;
  }
  v.detail << "1000 nested snapshot cases, " << machine_bad << " mismatches; 1000 nested atomic programs, "
           << program_bad << " mismatches";
  v.require(machine_bad == 0, "machine");
  v.require(program_bad == 0, "programs");
}

void fastpath(Verdict& v) {
  ScenarioOptions slow;
  slow.atomic_fastpath = false;
  std::size_t compared = 0;
  std::size_t differing = 0;
  for (const auto& s : harness::load_scenarios(root("scenarios"))) {
    if (!(s.expect_typecheck.is_string() && s.expect_typecheck == "ok")) continue;
    auto fast = harness::run_scenario(s);
    auto plain = harness::run_scenario(s, slow);
    bool same = fast.receipts.size() == plain.receipts.size();
    for (std::size_t i = 0; same && i < fast.receipts.size(); ++i)
      same = receipt_key(fast.receipts[i]) == receipt_key(plain.receipts[i]);
    ++compared;
    if (!same) {
      ++differing;
      v.detail << s.name << " differs; ";
    }
  }
  v.detail << compared << " well-typed scenarios, " << differing << " differing";
  v.require(compared > 0 && differing == 0, "receipts");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria = {
      {"lattice matches the oracle exhaustively", lattice},
      {"case studies type-check", corpus_checks},
      {"mutants rejected at the golden position", mutants},
      {"attack scenarios", attacks},
      {"CDA sweep", sweep},
      {"well-typed programs run cleanly", soundness},
      {"rollback exactness", rollback},
      {"atomic fast path equivalence", fastpath},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [title, run] : criteria) {
    ++n;
    Verdict v;
    auto start = std::chrono::steady_clock::now();
    try {
      run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", n, title, v.detail.str().c_str(), secs);
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures ? 1 : 0;
}
