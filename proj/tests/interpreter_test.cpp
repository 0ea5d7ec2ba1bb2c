#include <doctest.h>

#include <random>

#include "scif/harness.hpp"
#include "scif/interpreter.hpp"
#include "scif/syntax.hpp"

using namespace scif;
using rt::RValue;
using Outcome = rt::TransactionReceipt::Outcome;
using json = nlohmann::json;

namespace {

rt::ChainState world(const std::string& src, const json& contracts, const json& users = {{"@u", 1000}}) {
  json setup = {{"version", 1}, {"sources", json::array()}, {"users", users}, {"contracts", contracts}};
  return rt::chain_state_from_json(setup, std::make_shared<const ast::ContractTable>(
                                              parse_program(src, "t.scifc")));
}

rt::TransactionReceipt call(const rt::ChainState& chain, const std::string& receiver,
                            const std::string& method, const json& args = json::array(),
                            int value = 0, rt::RunOptions opts = {}, const std::string& origin = "@u") {
  rt::CallRequest req{origin, receiver, method, harness::call_args(chain, receiver, method, args), value};
  return rt::run_transaction(chain, req, opts);
}

const RValue& slot(const rt::Heap& h, const std::string& c, const std::string& key) {
  return h.contracts.at(c).storage.at(key);
}

// Random edits of every heap component.
void scramble(rt::Heap& h, std::mt19937_64& rng) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  int edits = 1 + static_cast<int>(pick(4));
  for (int i = 0; i < edits; ++i) {
    switch (pick(5)) {
      case 0: {
        auto it = std::next(h.contracts.begin(), static_cast<long>(pick(h.contracts.size())));
        it->second.storage["k" + std::to_string(pick(5))] = RValue::of_int(static_cast<long>(pick(100)));
        break;
      }
      case 1: h.balances["@acct" + std::to_string(pick(4))] = static_cast<long>(pick(1000)); break;
      case 2: h.refs[h.next_ref++] = RValue::of_bool(pick(2)); break;
      case 3: {
        rt::ContractState c;
        c.type = "C";
        c.trust.insert("@t" + std::to_string(pick(3)));
        h.contracts["@C#" + std::to_string(h.next_new++)] = c;
        break;
      }
      default: {
        auto it = std::next(h.contracts.begin(), static_cast<long>(pick(h.contracts.size())));
        it->second.trust.insert("@p" + std::to_string(pick(3)));
      }
    }
  }
}

const char* kCounter =
    "contract C {\n"
    "  exception Oops(uint n);\n"
    "  uint n;\n"
    "  @public void bump{any -> this}() {\n    n = n + 1;\n  }\n"
    "  @public void nested{any -> this}() {\n"
    "    n = 1;\n"
    "    atomic {\n"
    "      n = 2;\n"
    "      atomic {\n        n = 3;\n        fail ()\n      } rescue f {}\n"
    "      assert n == 2;\n"
    "      n = 4;\n"
    "      fail ()\n"
    "    } rescue g {}\n"
    "    assert n == 1;\n"
    "  }\n"
    "  @public uint{this} divide{any -> this}(uint{any} d) {\n"
    "    let e = endorse(d, any -> this);\n    return 10 / e;\n  }\n"
    "  @public void raise{any -> this}() throws Oops{this} {\n    n = 7;\n    throw Oops(1);\n  }\n"
    "  @public void catchIt{any -> this}() {\n"
    "    try {\n      n = 8;\n      throw Oops(2);\n    } catch Oops(k) {\n      n = n + k;\n    }\n"
    "  }\n"
    "  @public void spin{any -> this}() {\n    this.spin();\n  }\n"
    "  @public void pay{any -> this}(address{any} to) {\n"
    "    let t = endorse(to, any -> this);\n    send(t, 50);\n  }\n"
    "  @public void spawn{any -> this}() {\n    let b = new Box(5);\n  }\n"
    "}\n"
    "contract Box {\n  uint v;\n}\n";

}  // namespace

TEST_CASE("snapshot, mutate and roll back restores the heap byte for byte") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  std::mt19937_64 rng(7);
  for (int round = 0; round < 1000; ++round) {
    rt::Machine m(chain, {});
    scramble(m.heap(), rng);
    std::string outer = m.heap().serialize();
    int a = m.snapshot();
    scramble(m.heap(), rng);
    std::string inner = m.heap().serialize();
    int b = m.snapshot();
    scramble(m.heap(), rng);
    if (round % 2 == 0) {
      m.rollback(b);
      CHECK(m.heap().serialize() == inner);
      CHECK(m.live_snapshots() == 1);
    } else {
      m.discard(b);
    }
    m.rollback(a);
    REQUIRE(m.heap().serialize() == outer);
    CHECK(m.live_snapshots() == 0);
  }
}

TEST_CASE("nested atomic blocks restore their own entry state") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  auto r = call(chain, "@c", "nested");
  CHECK(r.outcome == Outcome::Committed);
  CHECK(slot(r.post, "@c", "n").integer == 1);
}

TEST_CASE("a failure reverts the whole transaction") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  auto r = call(chain, "@c", "divide", {0});
  CHECK(r.outcome == Outcome::Reverted);
  CHECK(r.value.name == rt::failures::kDivisionByZero);
  CHECK(r.post.serialize() == chain.heap.serialize());
  CHECK(call(chain, "@c", "divide", {3}).value.integer == 3);
}

TEST_CASE("an uncaught exception commits its effects") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  auto r = call(chain, "@c", "raise");
  CHECK(r.outcome == Outcome::UncaughtException);
  CHECK(r.value.kind == RValue::Kind::Exn);
  CHECK(slot(r.post, "@c", "n").integer == 7);

  auto caught = call(chain, "@c", "catchIt");
  CHECK(caught.outcome == Outcome::Committed);
  CHECK(slot(caught.post, "@c", "n").integer == 10);
}

TEST_CASE("the step budget ends runaway recursion") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  rt::RunOptions opts;
  opts.budget = 5000;
  auto r = call(chain, "@c", "spin", json::array(), 0, opts);
  CHECK(r.outcome == Outcome::Reverted);
  CHECK(r.value.name == rt::failures::kBudget);
}

TEST_CASE("sends move native balance and fail when short") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}, {"balance", 60}}}});
  auto r = call(chain, "@c", "pay", {"@u"});
  CHECK(r.outcome == Outcome::Committed);
  CHECK(r.post.balance("@u") == 1050);
  CHECK(r.post.balance("@c") == 10);
  chain.heap = r.post;
  auto short_r = call(chain, "@c", "pay", {"@u"});
  CHECK(short_r.value.name == rt::failures::kInsufficientFunds);
}

TEST_CASE("new contracts get fresh addresses") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  auto r = call(chain, "@c", "spawn");
  REQUIRE(r.outcome == Outcome::Committed);
  REQUIRE(r.post.contracts.count("@Box#0") == 1);
  CHECK(r.post.contracts.at("@Box#0").trust.count("@c") == 1);
  CHECK(slot(r.post, "@Box#0", "v").integer == 5);
  CHECK(r.post.next_new == 1);
}

TEST_CASE("transactions are deterministic") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  auto a = call(chain, "@c", "nested");
  auto b = call(chain, "@c", "nested");
  CHECK(a.to_json(true).dump() == b.to_json(true).dump());
  CHECK(a.post.serialize() == b.post.serialize());
}

TEST_CASE("locks form a multiset released innermost first") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}}}});
  rt::Machine m(chain, {});
  Label l = Label::atom("@c");
  m.acquire_lock(l, "@c");
  m.acquire_lock(l, "@c");
  CHECK(m.locks().size() == 2);
  m.release_lock(l, "@c");
  CHECK(m.locks().size() == 1);
  m.release_lock(l, "@c");
  CHECK(m.locks().empty());
  CHECK_THROWS_AS(m.release_lock(l, "@c"), std::logic_error);
}

TEST_CASE("only locks held by the callee gate its entries") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}, {"trust", {"@friend"}}}},
                                          {"@d", {{"type", "C"}}}});
  std::vector<rt::HeldLock> locks = {{Label::atom("@c"), "@c"}};
  CHECK_FALSE(rt::bypass_locks(chain.heap, locks, "@c", Label::atom("@mallory")));
  CHECK(rt::bypass_locks(chain.heap, locks, "@c", Label::atom("@c")));
  CHECK(rt::bypass_locks(chain.heap, locks, "@c", Label::atom("@friend")));
  CHECK(rt::bypass_locks(chain.heap, locks, "@d", Label::atom("@mallory")));
}

TEST_CASE("trust stores answer runtime flow queries") {
  rt::ChainState chain = world(kCounter, {{"@c", {{"type", "C"}, {"trust", {"@friend"}}}}});
  CHECK(rt::runtime_trusts(chain.heap, "@c", Label::atom("@friend"), Label::atom("@c")));
  CHECK_FALSE(rt::runtime_trusts(chain.heap, "@c", Label::atom("@other"), Label::atom("@c")));
  CHECK(rt::runtime_trusts(chain.heap, "@c", Label::atom("@c"), Label::any()));
}

TEST_CASE("chain state survives a save and load") {
  rt::ChainState chain = rt::load_chain_state(std::string(SCIF_SOURCE_DIR) + "/states/koet.json");
  auto r = call(chain, "@koet", "claimThrone", json::array(), 20, {}, "@alice");
  REQUIRE(r.outcome == Outcome::Committed);
  chain.heap = r.post;
  json saved = json::parse(rt::chain_state_to_json(chain).dump());
  rt::ChainState back = rt::chain_state_from_json(saved, chain.table);
  CHECK(back.heap.serialize() == chain.heap.serialize());
  CHECK(back.users == chain.users);
}

TEST_CASE("typed stepping accepts the honest corpus transactions") {
  harness::ScenarioOptions opts;
  opts.typed_step = true;
  for (const char* name : {"koet_honest", "parity_init_owner", "towncrier_failing_callback",
                           "uniswap_reentrancy", "hodl_reentrancy"}) {
    CAPTURE(name);
    auto s = harness::load_scenario(std::string(SCIF_SOURCE_DIR) + "/scenarios/" + name + ".json");
    auto rep = harness::run_scenario(s, opts);
    for (const auto& d : rep.diffs) MESSAGE(d);
    CHECK(rep.pass);
  }
}
