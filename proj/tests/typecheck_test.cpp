#include <doctest.h>

#include "scif/harness.hpp"
#include "scif/syntax.hpp"
#include "scif/typecheck.hpp"

using namespace scif;

namespace {

std::string corpus_path(const std::string& f) { return std::string(SCIF_SOURCE_DIR) + "/corpus/" + f; }

Diagnostics check_table(const ast::ContractTable& ct) {
  tc::Checker c(ct);
  c.check_program();
  return c.diagnostics();
}

Diagnostics check_files(std::initializer_list<const char*> files) {
  std::vector<std::string> paths;
  for (const char* f : files) paths.push_back(corpus_path(f));
  return check_table(load_files(paths));
}

Diagnostics check_src(const std::string& src) { return check_table(parse_program(src, "t.scifc")); }

std::string first_rule(const std::string& src) {
  Diagnostics d = check_src(src);
  return d.empty() ? "" : d.front().rule;
}

struct Golden {
  std::vector<const char*> files;
  const char* contract;
  const char* mutation;
  const char* rule;
  const char* file;
  int line;
  int col;
};

}  // namespace

TEST_CASE("case studies type-check without diagnostics") {
  CHECK(check_files({"parity.scifc"}).empty());
  CHECK(check_files({"dexible.scifc"}).empty());
  CHECK(check_files({"token.scifc", "uniswap.scifc"}).empty());
  CHECK(check_files({"koet.scifc"}).empty());
  CHECK(check_files({"towncrier.scifc"}).empty());
  CHECK(check_files({"hodl.scifc"}).empty());
}

TEST_CASE("historical mutants are rejected at the vulnerable statement") {
  const std::vector<Golden> goldens = {
      {{"token.scifc", "uniswap.scifc"}, "Uniswap", "remove-lock", "Call", "uniswap.scifc", 16, 7},
      {{"parity.scifc"}, "WalletLibrary", "make-public:initOwner", "Assign", "parity.scifc", 7, 5},
      {{"hodl.scifc"}, "HODLWallet", "late-update:withdrawals", "Assign", "hodl.scifc", 20, 5},
  };
  for (const auto& g : goldens) {
    CAPTURE(g.mutation);
    std::vector<std::string> paths;
    for (const char* f : g.files) paths.push_back(corpus_path(f));
    ast::ContractTable ct = harness::mutate_table(load_files(paths), g.contract, g.mutation);
    Diagnostics d = check_table(ct);
    REQUIRE_FALSE(d.empty());
    CHECK(d.front().rule == g.rule);
    CHECK(d.front().file.ends_with(g.file));
    CHECK(d.front().pos.line == g.line);
    CHECK(d.front().pos.col == g.col);
  }
}

TEST_CASE("swallowing failed sends still type-checks") {
  ast::ContractTable ct =
      harness::mutate_table(load_files({corpus_path("koet.scifc")}), "KoET", "swallow-failure");
  CHECK(check_table(ct).empty());
}

TEST_CASE("identity mutation leaves the contract unchanged") {
  ast::ContractTable ct = load_files({corpus_path("koet.scifc")});
  CHECK(print_program(harness::mutate_table(ct, "KoET", "identity")) == print_program(ct));
  CHECK_THROWS_AS(harness::mutate_table(ct, "KoET", "shuffle"), std::invalid_argument);
  CHECK_THROWS_AS(harness::mutate_table(ct, "KoET", "remove-lock"), std::invalid_argument);
}

TEST_CASE("writes need a trusted pc") {
  CHECK(first_rule("contract C {\n  uint f;\n  @public void set{any}(uint x) {\n    f = x;\n  }\n}\n") ==
        "Assign");
  CHECK(first_rule("contract C {\n  uint f;\n"
                   "  @public void set{sender -> this}(uint x) {\n"
                   "    let y = endorse(x, sender -> this);\n    f = y;\n  }\n}\n")
            .empty());
  // Control dependence on an untrusted value taints the branch.
  CHECK(first_rule("contract C {\n  uint f;\n"
                   "  @public void set{sender -> this}(bool b) {\n"
                   "    if (b) { f = 1; } else {}\n  }\n}\n") == "Assign");
}

TEST_CASE("endorsement is limited by the pc") {
  CHECK(first_rule("contract C {\n  uint f;\n  @public void set{any}(uint x) {\n"
                   "    let y = endorse(x, any -> this);\n  }\n}\n") == "Endorse");
}

TEST_CASE("calls check the callee's external pc") {
  CHECK(first_rule("contract D {\n  @public void g{this}() {}\n}\n"
                   "contract C {\n  D d;\n  @public void f{any}() {\n    d.g();\n  }\n}\n") ==
        "Call");
}

TEST_CASE("state written after an untrusted call needs a lock") {
  std::string unlocked =
      "contract D {\n  @public void g{any}() {}\n}\n"
      "contract C {\n  uint n;\n  D d;\n"
      "  @public void f{sender -> this}() {\n    d.g();\n    n = 1;\n  }\n}\n";
  std::string locked =
      "contract D {\n  @public void g{any}() {}\n}\n"
      "contract C {\n  uint n;\n  D d;\n"
      "  @public void f{sender -> this}() {\n    lock (this) { d.g(); }\n    n = 1;\n  }\n}\n";
  CHECK(first_rule(unlocked) == "Assign");
  CHECK(first_rule(locked).empty());
}

TEST_CASE("attacker-only constructs are rejected in checked code") {
  CHECK(first_rule("contract C {\n  @public void f{any}() {}\n"
                   "  void g() {\n    atk_cast(@x as C).f();\n  }\n}\n") == "AttackCast");
  CHECK(first_rule("contract C {\n  void g() {\n    ignore_locks { 1 };\n  }\n}\n") ==
        "IgnoreLocks");
}

TEST_CASE("attacker contracts are not checked") {
  CHECK(check_src("attacker contract A {\n  uint f;\n  @public void go{any}(uint x) {\n"
                  "    f = x;\n  }\n}\n")
            .empty());
}

TEST_CASE("exceptions must be declared at a label the pc reaches") {
  std::string undeclared =
      "contract C {\n  exception E();\n  void f() {\n    throw E();\n  }\n}\n";
  CHECK(first_rule(undeclared) == "MethodOk");
  std::string declared =
      "contract C {\n  exception E();\n  void f() throws E {\n    throw E();\n  }\n}\n";
  CHECK(first_rule(declared).empty());
}

TEST_CASE("exceptions may not escape an atomic block") {
  CHECK(first_rule("contract C {\n  exception E();\n  void f() throws E {\n"
                   "    atomic { throw E(); } rescue x {}\n  }\n}\n") == "AtomicRescue");
}

TEST_CASE("overrides keep the signature") {
  CHECK(first_rule("contract B {\n  @public void f{any}() {}\n}\n"
                   "contract C extends B {\n  @public void f{this}() {}\n}\n") == "CanOverride");
  CHECK(first_rule("interface I {\n  @public void f{any}();\n}\n"
                   "contract C extends I {}\n") == "ClassOk");
}

TEST_CASE("dependent keys must name a fixed principal") {
  std::string src =
      "contract C {\n  mapping(address o => uint{o}) m;\n"
      "  @public void f{sender}(address a) {\n    m[a] = 1;\n  }\n}\n";
  CHECK(first_rule(src) == "MapIndex");
}

TEST_CASE("sends spend the contract's own balance only at its integrity") {
  CHECK(first_rule("contract C {\n  @public void f{any}(address a) {\n    send(a, 1);\n  }\n}\n") ==
        "Send");
}

TEST_CASE("checking is deterministic") {
  std::string src = "contract C {\n  uint f;\n  @public void set{any}(uint x) {\n    f = x;\n  }\n}\n";
  Diagnostics a = check_src(src);
  Diagnostics b = check_src(src);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_text() == b[i].to_text());
}

TEST_CASE("generated programs type-check and respect the size bound") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    harness::GeneratedProgram p = harness::gen_well_typed(seed);
    ast::ContractTable ct = parse_program(p.source, "gen.scifc");
    CHECK(check_table(ct).empty());
    for (const auto& [name, c] : ct.contracts)
      for (const auto& m : c.methods)
        if (m.body) CHECK(harness::node_count(*m.body) <= 30);
  }
}
