#include <fstream>
#include <random>
#include <sstream>

#include "scif/harness.hpp"

namespace scif::harness {

namespace {

const std::vector<std::string>& corpus_files() {
  static const std::vector<std::string> files = {
      "corpus/token.scifc",  "corpus/uniswap.scifc",   "corpus/dexible.scifc",
      "corpus/koet.scifc",   "corpus/towncrier.scifc", "corpus/parity.scifc",
      "corpus/hodl.scifc"};
  return files;
}

const std::vector<SourceFile>& corpus_sources() {
  static const std::vector<SourceFile> sources = [] {
    std::vector<SourceFile> out;
    for (const auto& f : corpus_files()) {
      std::ifstream in(source_dir() + "/" + f);
      if (!in) throw std::runtime_error("cannot read " + f);
      std::stringstream ss;
      ss << in.rdbuf();
      out.push_back({f, ss.str()});
    }
    return out;
  }();
  return sources;
}

class ActionGen {
 public:
  explicit ActionGen(std::uint64_t seed) : rng_(seed) {}

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
  std::string amount() { return std::to_string(1 + pick(60)); }

  // One attack step as an expression.
  std::string action() {
    std::string n = amount();
    switch (pick(18)) {
      case 0: return "atk_cast(@dexible as Dexible).swap(this, atk_cast(@tokx as IExchange), " + n + ")";
      case 1: return "atk_cast(@dexible as Dexible).swap(@alice, atk_cast(@router as IExchange), " + n + ")";
      case 2: return "atk_cast(@tokx as Token).transfer(@alice, this, " + n + ")";
      case 3: return "atk_cast(@tokx as Token).transferFrom(@alice, this, " + n + ")";
      case 4: return "atk_cast(@uniswap as Uniswap).sellXForY(" + n + ")";
      case 5: return "atk_cast(@uniswap as Uniswap).sellYForX(" + n + ")";
      case 6: return "atk_cast(@koet as KoET).claimThrone()";
      case 7: return "atk_cast(@tc as TownCrier).deliver(0, " + n + ")";
      case 8: return "atk_cast(@tc as TownCrier).request(this)";
      case 9: return "atk_cast(@wallet as Wallet).initOwner(this)";
      case 10: return "atk_cast(@wallet as Wallet).withdraw(" + n + ")";
      case 11: return "atk_cast(@hodl as HODLWallet).withdrawTo(this, " + n + ")";
      case 12: return "((Token) @tokx).transfer(this, @bob, " + n + ")";
      case 13: return "((IExchange) @tokx).transfer(@dexible, this, " + n + ")";
      case 14: return "atk_cast(@tokx as IExchange).transfer(@dexible, this, " + n + ")";
      case 15: return "atk_cast(@toky as Token).approve(@uniswap, " + n + ")";
      case 16: return "send(@koet, " + n + ")";
      default: return "ignore_locks { lock (this) { " + action() + " } }";
    }
  }

  // Actions separated by `;`, some wrapped so a failure does not end the run.
  std::string block(std::size_t count, bool first_dexible) {
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
      std::string a = i == 0 && first_dexible
                          ? "atk_cast(@dexible as Dexible).swap(this, atk_cast(@tokx as IExchange), 100)"
                          : action();
      if (coin(0.6)) a = "atomic { " + a + " } rescue f {}";
      out += "    " + a + ";\n";
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

std::string hook(const std::string& sig, const std::string& body) {
  return "  @public void " + sig + " {\n    if (depth < 2) {\n      depth = depth + 1;\n" + body +
         "    } else {}\n  }\n";
}

}  // namespace

AttackerProgram gen_attacker(std::uint64_t seed) {
  ActionGen g(seed);
  static const std::vector<std::string> ifaces = {"", "ITokenSender", "ITokenReceiver",
                                                  "ITCCallback"};
  AttackerProgram p;
  p.name = "Attacker" + std::to_string(seed);
  p.implements = ifaces[seed == 0 ? 0 : g.pick(ifaces.size())];

  std::string src = "attacker contract " + p.name;
  if (!p.implements.empty()) src += " extends " + p.implements;
  src += " {\n  uint depth;\n\n";
  src += "  @public void go{any}() {\n    depth = 0;\n" + g.block(1 + g.pick(4), seed == 0) +
         "  }\n";
  if (p.implements == "ITokenSender")
    src += hook("tokensToSend{any}(address to, uint amount)", g.block(1 + g.pick(2), false));
  if (p.implements == "ITokenReceiver")
    src += hook("tokensReceived{any}(address from, uint amount)", g.block(1 + g.pick(2), false));
  if (p.implements == "ITCCallback")
    src += hook("deliverData{any}(uint id, uint data)", g.block(1 + g.pick(2), false));
  src += hook("receive{any}()", g.block(1 + g.pick(2), false));
  src += "}\n";
  p.source = std::move(src);
  return p;
}

rt::ChainState sweep_world(const AttackerProgram* attacker) {
  nlohmann::json setup = {
      {"version", 1},
      {"sources", nlohmann::json::array()},
      {"users", {{"@alice", 1000}, {"@bob", 1000}, {"@mallory", 1000}, {"@operator", 0}}},
      {"contracts",
       {{"@tokx",
         {{"type", "Token"},
          {"storage",
           {{"balances", {{"@alice", 200}, {"@dexible", 500}, {"@uniswap", 1000}, {"@atk", 50}}},
            {"allowances", {{"@alice", {{"@uniswap", 1000}}}, {"@atk", {{"@uniswap", 1000}}}}}}}}},
        {"@toky",
         {{"type", "Token"},
          {"storage",
           {{"balances", {{"@alice", 200}, {"@uniswap", 1000}, {"@atk", 50}}},
            {"allowances", {{"@alice", {{"@uniswap", 1000}}}, {"@atk", {{"@uniswap", 1000}}}}}}}}},
        {"@uniswap",
         {{"type", "Uniswap"},
          {"storage",
           {{"tokenX", "@tokx"}, {"tokenY", "@toky"}, {"reserveX", 1000}, {"reserveY", 1000}}}}},
        {"@dexible", {{"type", "Dexible"}}},
        {"@router", {{"type", "Router"}}},
        {"@koet", {{"type", "KoET"}, {"balance", 10}, {"storage", {{"king", "@atk"}, {"price", 10}}}}},
        {"@tc", {{"type", "TownCrier"}, {"storage", {{"fee", 5}}}}},
        {"@wallet", {{"type", "Wallet"}, {"balance", 100}, {"storage", {{"owner", "@alice"}}}}},
        {"@hodl",
         {{"type", "HODLWallet"},
          {"balance", 100},
          {"storage", {{"limit", 2}, {"balances", {{"@atk", 20}, {"@alice", 50}}}}}}}}}};
  std::vector<SourceFile> sources = corpus_sources();
  if (attacker) sources.push_back({attacker->name + ".scifc", attacker->source});
  rt::ChainState chain = rt::chain_state_from_json(
      setup, std::make_shared<const ast::ContractTable>(parse_sources(sources)));
  for (const auto& f : corpus_files()) chain.sources.push_back(f);
  if (attacker) rt::deploy(chain, "@atk", attacker->name);
  return chain;
}

SweepResult cda_sweep(std::uint64_t first_seed, std::size_t count, bool sigcheck) {
  SweepResult res;
  rt::RunOptions ro;
  ro.sigcheck = sigcheck;
  ro.budget = 200'000;
  for (std::uint64_t seed = first_seed; seed < first_seed + count; ++seed) {
    AttackerProgram atk = gen_attacker(seed);
    rt::ChainState chain = sweep_world(&atk);
    ++res.programs;

    std::vector<std::string> victims;
    for (const auto& [addr, c] : chain.heap.contracts)
      if (!chain.table->at(c.type).is_attacker) victims.push_back(addr);

    auto run = [&](const std::string& origin, const std::string& receiver,
                   const std::string& method, const nlohmann::json& args, int value) {
      rt::CallRequest req{origin, receiver, method, call_args(chain, receiver, method, args),
                          value};
      rt::TransactionReceipt r = rt::run_transaction(chain, req, ro);
      ++res.transactions;
      ++res.outcomes[r.value.kind == rt::RValue::Kind::Failure ? r.value.name
                                                               : rt::to_string(r.outcome)];
      for (const auto& v : victims) {
        auto events = detect_cda_events(r.trace, Label::atom(v), rt::store_env(r.post, v));
        res.cda_events += events.size();
        for (const auto& e : events)
          if (res.examples.size() < 10)
            res.examples.push_back("seed " + std::to_string(seed) + " " + method + ": " +
                                   r.trace[e.index].to_json().dump() + " at " + v);
      }
      chain.heap = r.post;
    };

    run("@mallory", "@atk", "go", nlohmann::json::array(), 0);
    run("@alice", "@tc", "request", {"@atk"}, 5);
    run("@operator", "@tc", "deliver", {0, 7}, 0);
    run("@bob", "@koet", "claimThrone", nlohmann::json::array(), 20);
    run("@alice", "@tokx", "transfer", {"@alice", "@atk", 10}, 0);
    run("@alice", "@uniswap", "sellXForY", {10}, 0);
    run("@alice", "@dexible", "swap", {"@alice", "@router", 5}, 0);
    run("@mallory", "@atk", "go", nlohmann::json::array(), 0);
  }
  return res;
}

}  // namespace scif::harness
