#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <cstdio>
#include <sys/wait.h>

#include "json.hpp"

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result scifc(const std::string& args) {
  std::string cmd = std::string(SCIFC_BIN) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string src(const std::string& rel) { return std::string(SCIF_SOURCE_DIR) + "/" + rel; }

std::string write_file(const std::string& name, const std::string& text) {
  std::ofstream(name) << text;
  return name;
}

const char* kLoose =
    "contract C {\n"
    "  exception Oops(uint n);\n"
    "  uint f;\n"
    "  @public void set{any}(uint x) {\n    f = x;\n  }\n"
    "  @public void raise{any -> this}() throws Oops{this} {\n    throw Oops(1);\n  }\n"
    "}\n";

}  // namespace

TEST_CASE("check exits 0 on the corpus and 1 on a type error") {
  CHECK(scifc("check " + src("corpus/token.scifc") + " " + src("corpus/uniswap.scifc")).code == 0);
  CHECK(scifc("check").code == 0);
  auto bad = scifc("--format machine check " + write_file("cli_loose.scifc", kLoose));
  CHECK(bad.code == 1);
  auto line = nlohmann::json::parse(bad.out.substr(0, bad.out.find('\n')));
  CHECK(line["rule"] == "Assign");
  CHECK(line["line"] == 5);
  CHECK(line["col"] == 5);
}

TEST_CASE("run maps outcomes to exit codes") {
  std::string state = "--state " + src("states/koet.json");
  auto ok = scifc("run " + state + " --origin @alice --call '@koet.claimThrone()' --value 20");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("Committed") != std::string::npos);
  auto reverted = scifc("run " + state + " --origin @alice --call '@koet.claimThrone()' --value 1");
  CHECK(reverted.code == 2);
  CHECK(reverted.out.find("Fail") != std::string::npos);
  std::string code = std::filesystem::absolute(write_file("cli_loose.scifc", kLoose)).string();
  std::string raise = write_file(
      "cli_raise.json",
      nlohmann::json{{"version", 1}, {"sources", {code}}, {"users", {{"@u", 10}}},
                     {"contracts", {{"@c", {{"type", "C"}}}}}}
          .dump());
  auto uncaught = scifc("run --state " + raise + " --origin @u --call '@c.raise()'");
  CHECK(uncaught.code == 3);
}

TEST_CASE("run writes the trace as JSON lines") {
  std::string trace = "cli_test_trace.jsonl";
  auto r = scifc("run --state " + src("states/koet.json") +
                 " --origin @alice --call '@koet.claimThrone()' --value 20 --trace-out " + trace);
  REQUIRE(r.code == 0);
  std::ifstream in(trace);
  std::string line;
  int calls = 0;
  while (std::getline(in, line)) calls += nlohmann::json::parse(line)["kind"] == "call";
  CHECK(calls == 1);
}

TEST_CASE("lattice queries") {
  CHECK(scifc("lattice 'A /\\ B => A'").out == "true\n");
  CHECK(scifc("lattice 'A => B given A=>B'").out == "true\n");
  CHECK(scifc("lattice 'A \\/ B => B given A=>B'").out == "true\n");
  CHECK(scifc("lattice 'A => B'").out == "false\n");
  CHECK(scifc("lattice 'A =>'").code == 64);
}

TEST_CASE("scenarios verb filters and reports") {
  auto koet = scifc("scenarios --filter koet_failing");
  CHECK(koet.code == 0);
  CHECK(koet.out.find("1/1 scenarios passed") != std::string::npos);
  auto none = scifc("scenarios --filter no-such-scenario");
  CHECK(none.code == 0);
  CHECK(none.out.find("no scenario matches") != std::string::npos);
}

TEST_CASE("usage errors exit 64") {
  CHECK(scifc("").code == 64);
  CHECK(scifc("frobnicate").code == 64);
  CHECK(scifc("check --bogus").code == 64);
  // The signature-check switch exists only for the scenario runner.
  CHECK(scifc("run --unsafe-no-sigcheck --state x --origin @a --call '@b.c()'").code == 64);
  CHECK(scifc("--format yaml check").code == 64);
}

TEST_CASE("machine output is one record per line") {
  auto r = scifc("--format machine scenarios --filter koet");
  std::stringstream ss(r.out);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    CHECK(nlohmann::json::accept(line));
    ++n;
  }
  CHECK(n == 3);
}
