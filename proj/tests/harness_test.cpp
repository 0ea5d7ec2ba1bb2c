#include <doctest.h>

#include <fstream>
#include <sstream>

#include "scif/harness.hpp"
#include "scif/syntax.hpp"
#include "scif/typecheck.hpp"

using namespace scif;
using namespace scif::harness;

namespace {

std::vector<Scenario> corpus_scenarios() {
  return load_scenarios(std::string(SCIF_SOURCE_DIR) + "/scenarios");
}

rt::TraceEvent call_event(const Label& env, const Label& ex) {
  rt::TraceEvent e;
  e.kind = "call";
  e.pc_env = env;
  e.pc_ex = ex;
  return e;
}

}  // namespace

TEST_CASE("every scenario passes with the signature check on") {
  for (const auto& r : run_scenarios(corpus_scenarios())) {
    CAPTURE(r.name);
    for (const auto& d : r.diffs) MESSAGE(d);
    CHECK(r.pass);
  }
}

TEST_CASE("every scenario passes without the atomic fast path") {
  ScenarioOptions opts;
  opts.atomic_fastpath = false;
  for (const auto& r : run_scenarios(corpus_scenarios(), opts)) {
    CAPTURE(r.name);
    for (const auto& d : r.diffs) MESSAGE(d);
    CHECK(r.pass);
  }
}

TEST_CASE("unsafe expectations hold with the signature check off") {
  ScenarioOptions opts;
  opts.sigcheck = false;
  for (const auto& r : run_scenarios(corpus_scenarios(), opts)) {
    CAPTURE(r.name);
    for (const auto& d : r.diffs) MESSAGE(d);
    CHECK(r.pass);
    if (r.name == "dexible_atk_cast") CHECK(r.cda_events >= 1);
  }
}

TEST_CASE("parallel runs match sequential runs") {
  auto ss = corpus_scenarios();
  auto par = run_scenarios(ss);
  REQUIRE(par.size() == ss.size());
  for (std::size_t i = 0; i < ss.size(); ++i) {
    auto seq = run_scenario(ss[i]);
    CHECK(par[i].name == ss[i].name);
    CHECK(par[i].to_json().dump() == seq.to_json().dump());
  }
}

TEST_CASE("CDA detection follows the definition") {
  Label atk = Label::atom("@atk");
  Label victim = Label::atom("@v");
  std::vector<rt::TraceEvent> forged = {call_event(atk, victim)};
  CHECK(detect_cda_events(forged, victim).size() == 1);
  // Nothing is more trusted than required by `any`.
  CHECK(detect_cda_events(forged, Label::any()).empty());
  // A victim that trusts the environment sees no confusion.
  TrustEnv t;
  t.add(Principal{"@atk"}, Principal{"@v"});
  CHECK(detect_cda_events(forged, victim, t).empty());
  std::vector<rt::TraceEvent> honest = {call_event(victim, victim), call_event(atk, atk)};
  CHECK(detect_cda_events(honest, victim).empty());
}

TEST_CASE("an honest swap raises no CDA event") {
  auto s = load_scenario(std::string(SCIF_SOURCE_DIR) + "/scenarios/dexible_atk_cast.json");
  s.transactions.erase(s.transactions.begin());
  s.predicates.clear();
  auto r = run_scenario(s);
  REQUIRE(r.receipts.size() == 1);
  CHECK(r.receipts[0].outcome == rt::TransactionReceipt::Outcome::Committed);
  CHECK(r.cda_events == 0);
}

TEST_CASE("attacker generation is seed-deterministic") {
  for (std::uint64_t seed : {0u, 1u, 17u, 999u}) {
    CHECK(gen_attacker(seed).source == gen_attacker(seed).source);
    CHECK(gen_attacker(seed).name == gen_attacker(seed).name);
  }
  CHECK(gen_attacker(1).source != gen_attacker(2).source);
}

TEST_CASE("seed 0 opens with the token-as-router cast") {
  std::string src = gen_attacker(0).source;
  CHECK(src.find("atk_cast(@dexible as Dexible).swap(this, atk_cast(@tokx as IExchange)") !=
        std::string::npos);
}

TEST_CASE("generated attackers parse, and would fail the checker") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    AttackerProgram a = gen_attacker(seed);
    rt::ChainState world = sweep_world(&a);
    CHECK(world.table->at(a.name).is_attacker);
    CHECK(world.heap.contracts.count("@atk") == 1);

    // The same code as an ordinary contract is rejected.
    std::string plain = a.source.substr(std::string("attacker ").size());
    std::vector<SourceFile> files;
    for (const char* f : {"token.scifc", "uniswap.scifc", "dexible.scifc", "koet.scifc",
                          "towncrier.scifc", "parity.scifc", "hodl.scifc"}) {
      std::ifstream in(std::string(SCIF_SOURCE_DIR) + "/corpus/" + f);
      std::stringstream ss;
      ss << in.rdbuf();
      files.push_back({f, ss.str()});
    }
    files.push_back({"atk.scifc", plain});
    ast::ContractTable ct = parse_sources(files);
    tc::Checker c(ct);
    c.check_program();
    CHECK_FALSE(c.diagnostics().empty());
  }
}

TEST_CASE("the victim world type-checks") {
  rt::ChainState world = sweep_world(nullptr);
  tc::Checker c(*world.table);
  c.check_program();
  CHECK(c.diagnostics().empty());
}

TEST_CASE("a short sweep finds no CDA event, and finds some without the check") {
  SweepResult safe = cda_sweep(0, 50);
  CHECK(safe.programs == 50);
  CHECK(safe.cda_events == 0);
  CHECK(safe.outcomes.count(rt::failures::kDispatchMismatch) == 1);
  SweepResult unsafe = cda_sweep(0, 50, false);
  CHECK(unsafe.cda_events >= 1);
}
