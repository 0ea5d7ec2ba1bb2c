#include <doctest.h>

#include "scif/label.hpp"
#include "support/label_gen.hpp"

using namespace scif;
using scif::testing::enumerate_labels;
using scif::testing::enumerate_trust_envs;
using scif::testing::random_label;
using scif::testing::random_trust;

namespace {

Label A = Label::atom("A");
Label B = Label::atom("B");
Label C = Label::atom("C");

TrustEnv hyp(std::initializer_list<std::pair<const char*, const char*>> edges) {
  TrustEnv t;
  for (auto [a, b] : edges) t.add(Principal{a}, Principal{b});
  return t;
}

}  // namespace

TEST_CASE("resolve_this substitutes the enclosing contract") {
  Principal self{"@A"};
  CHECK(resolve_this(Label::this_label(), self) == Label::atom(self));
  CHECK(resolve_this(Label::any(), self) == Label::any());
  CHECK(resolve_this(Label::meet_of(Label::this_label(), B), self) ==
        Label::meet_of(Label::atom(self), B));
}

TEST_CASE("normalize applies distributivity and absorption") {
  CHECK(canonical_string(Label::meet_of(A, Label::join_of(B, C))) == "A /\\ B \\/ A /\\ C");
  CHECK(normalize(Label::join_of(A, Label::meet_of(A, B))) == A);
  CHECK(normalize(Label::any()) == Label::any());
  CHECK_THROWS_AS(normalize(Label::this_label()), LabelError);
}

TEST_CASE("flows_to examples") {
  CHECK(flows_to(Label::meet_of(A, B), A));
  CHECK(flows_to(A, Label::any()));
  CHECK(flows_to(Label::join_of(A, B), B, hyp({{"A", "B"}})));
  CHECK_FALSE(flows_to(A, B));
  CHECK_FALSE(flows_to(Label::any(), A));
  CHECK(flows_to(Label::meet_of(A, B), Label::meet_of(B, A)));
  CHECK_THROWS_AS(flows_to(Label::this_label(), A), LabelError);
}

TEST_CASE("oracle agrees on the worked examples") {
  CHECK(oracle_flows_to(Label::meet_of(A, B), A));
  CHECK(oracle_flows_to(A, Label::any()));
  CHECK(oracle_flows_to(Label::join_of(A, B), B, hyp({{"A", "B"}})));
  CHECK_FALSE(oracle_flows_to(A, B));
  CHECK_FALSE(oracle_flows_to(Label::any(), A));
  CHECK(oracle_flows_to(Label::meet_of(A, B), Label::meet_of(B, A)));
}

TEST_CASE("oracle rejects more than 16 atoms") {
  Label big = Label::atom("p0");
  for (int i = 1; i < 17; ++i) big = Label::join_of(big, Label::atom("p" + std::to_string(i)));
  CHECK_THROWS_AS(oracle_flows_to(big, A), LabelError);
}

TEST_CASE("join and meet") {
  CHECK(join(A, Label::any()) == Label::any());
  CHECK(meet(A, A) == A);
  CHECK(canonical_string(join(A, B)) == "A \\/ B");
  CHECK(canonical_string(meet(B, A)) == "A /\\ B");
}

TEST_CASE("hypotheses chain through atoms absent from both labels") {
  TrustEnv t = hyp({{"A", "X"}, {"X", "B"}});
  CHECK(flows_to(A, B, t));
  CHECK(oracle_flows_to(A, B, t));
}

TEST_CASE("fast path and generic path agree beyond 64 atoms") {
  Label wide = Label::atom("q0");
  for (int i = 1; i < 70; ++i) wide = Label::meet_of(wide, Label::atom("q" + std::to_string(i)));
  CHECK(flows_to(wide, Label::atom("q42")));
  CHECK_FALSE(flows_to(Label::atom("q42"), wide));
}

TEST_CASE("flows_to matches the oracle on all height-2 labels and hypothesis sets") {
  auto labels = enumerate_labels(2);
  auto envs = enumerate_trust_envs(2);
  std::size_t mismatches = 0;
  for (const auto& t : envs)
    for (const auto& l1 : labels)
      for (const auto& l2 : labels)
        if (flows_to(l1, l2, t) != oracle_flows_to(l1, l2, t)) ++mismatches;
  CHECK(mismatches == 0);
}

TEST_CASE("lattice laws on random labels") {
  std::mt19937_64 rng(7);
  const std::vector<Principal> atoms = {{"A"}, {"B"}, {"C"}, {"D"}};
  for (int i = 0; i < 2000; ++i) {
    Label x = random_label(rng, 3, atoms);
    Label y = random_label(rng, 3, atoms);
    Label z = random_label(rng, 3, atoms);
    TrustEnv t = random_trust(rng, 3, atoms);
    TrustEnv bigger = t;
    bigger.add(atoms[static_cast<std::size_t>(i) % 4], atoms[static_cast<std::size_t>(i + 1) % 4]);

    CHECK(flows_to(x, x, t));
    if (flows_to(x, y, t) && flows_to(y, z, t)) CHECK(flows_to(x, z, t));
    if (flows_to(x, y, t)) CHECK(flows_to(x, y, bigger));
    CHECK(normalize(join(x, y)) == normalize(join(y, x)));
    CHECK(normalize(meet(x, y)) == normalize(meet(y, x)));
    CHECK(normalize(join(x, join(y, z))) == normalize(join(join(x, y), z)));
    CHECK(normalize(meet(x, meet(y, z))) == normalize(meet(meet(x, y), z)));
    CHECK(normalize(join(x, meet(x, y))) == normalize(x));
    CHECK(normalize(meet(x, join(x, y))) == normalize(x));
    CHECK(flows_to(x, y) == (normalize(join(x, y)) == normalize(y)));
    CHECK(normalize(normalize(x)) == normalize(x));
    CHECK(flows_to(x, y, t) == oracle_flows_to(x, y, t));
    CHECK(flows_to(x, y, t) == flows_to(normalize(x), normalize(y), t));
  }
}

TEST_CASE("parse_label round trip") {
  Label l = parse_label("(A \\/ B) /\\ this \\/ any");
  CHECK(to_string(l) == "(A \\/ B) /\\ this \\/ any");
  CHECK(parse_label("@x /\\ y") == Label::meet_of(Label::atom("@x"), Label::atom("y")));
  CHECK_THROWS_AS(parse_label("A \\/"), LabelError);
  CHECK(canonical_string(parse_label("this /\\ (A \\/ this)")) == "this");
}
