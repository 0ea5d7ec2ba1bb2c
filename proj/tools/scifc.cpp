// Command-line front end: check, run, lattice, scenarios.
//
// Exit codes: 0 ok, 1 type or parse error, 2 reverted, 3 uncaught
// exception, 64 usage or input error.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "CLI11.hpp"
#include "scif/harness.hpp"
#include "scif/label.hpp"
#include "scif/syntax.hpp"
#include "scif/typecheck.hpp"

namespace {

using namespace scif;
using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kTypeError = 1;
constexpr int kReverted = 2;
constexpr int kUncaught = 3;
constexpr int kUsage = 64;

enum class Format { Text, Machine };

struct Style {
  bool on = false;
  std::string red(const std::string& s) const { return on ? "\033[31m" + s + "\033[0m" : s; }
  std::string green(const std::string& s) const { return on ? "\033[32m" + s + "\033[0m" : s; }
  std::string bold(const std::string& s) const { return on ? "\033[1m" + s + "\033[0m" : s; }
};

Style style_from_env() {
  const char* v = std::getenv("SCIFC_COLOR");
  std::string s = v ? v : "";
  if (s == "1" || s == "always" || s == "on") return {true};
  if (s == "0" || s == "never" || s == "off") return {false};
  return {isatty(STDOUT_FILENO) != 0};
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void print_diagnostics(const Diagnostics& ds, Format fmt, const Style& st) {
  for (const auto& d : ds) {
    if (fmt == Format::Machine) {
      std::cout << d.to_json_line() << "\n";
    } else {
      std::cout << st.red(d.to_text()) << "\n";
    }
  }
}

int cmd_check(const std::vector<std::string>& paths, Format fmt, const Style& st) {
  if (paths.empty()) return kOk;
  ast::ContractTable ct;
  try {
    ct = load_files(paths);
  } catch (const ParseError& e) {
    print_diagnostics(e.diagnostics(), fmt, st);
    return kTypeError;
  }
  tc::Checker checker(ct);
  checker.check_program();
  print_diagnostics(checker.diagnostics(), fmt, st);
  if (fmt == Format::Text && checker.diagnostics().empty())
    std::cout << st.green("ok") << ": " << ct.contracts.size() << " contract(s)\n";
  return checker.diagnostics().empty() ? kOk : kTypeError;
}

// `@receiver.method(arg, ...)` with integer, boolean and @address literals.
struct ParsedCall {
  std::string receiver;
  std::string method;
  json args = json::array();
};

ParsedCall parse_call(const std::string& text) {
  static const std::regex shape(R"(\s*(@[A-Za-z0-9_#]+)\.([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, shape))
    throw UsageError("--call expects @receiver.method(args), got `" + text + "`");
  ParsedCall c{m[1], m[2]};
  std::string rest = m[3];
  std::stringstream ss(rest);
  std::string arg;
  static const std::regex number(R"(-?[0-9]+)");
  while (std::getline(ss, arg, ',')) {
    arg = std::regex_replace(arg, std::regex(R"(^\s+|\s+$)"), "");
    if (arg.empty()) {
      if (rest.find_first_not_of(" \t") == std::string::npos) break;
      throw UsageError("empty argument in --call");
    }
    if (arg == "true" || arg == "false") c.args.push_back(arg == "true");
    else if (arg[0] == '@') c.args.push_back(arg);
    else if (std::regex_match(arg, number)) c.args.push_back(json{{"int", arg}});
    else throw UsageError("cannot read argument `" + arg + "`");
  }
  return c;
}

struct RunFlags {
  std::string state;
  std::string state_out;
  std::string origin;
  std::string call;
  std::string value = "0";
  std::string trace_out;
  bool no_fastpath = false;
  bool typed_step = false;
};

int cmd_run(const RunFlags& f, Format fmt, const Style& st) {
  rt::ChainState chain;
  try {
    chain = rt::load_chain_state(f.state);
  } catch (const ParseError& e) {
    print_diagnostics(e.diagnostics(), fmt, st);
    return kTypeError;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  ParsedCall pc = parse_call(f.call);

  tc::Checker checker(*chain.table);
  checker.record_contexts(f.typed_step);
  checker.check_program();
  if (f.typed_step && !checker.diagnostics().empty()) {
    print_diagnostics(checker.diagnostics(), fmt, st);
    return kTypeError;
  }
  tc::NodeContexts contexts = checker.node_contexts();

  rt::RunOptions ro;
  ro.atomic_fastpath = !f.no_fastpath;
  ro.typed_step = f.typed_step;
  ro.contexts = f.typed_step ? &contexts : nullptr;

  rt::TransactionReceipt r;
  try {
    rt::CallRequest req{f.origin, pc.receiver, pc.method,
                        harness::call_args(chain, pc.receiver, pc.method, pc.args),
                        BigInt(f.value)};
    r = rt::run_transaction(chain, req, ro);
  } catch (const rt::TypedStepError& e) {
    std::cerr << st.red("typed-step check failed: ") << e.what() << "\n";
    return kTypeError;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  if (!f.trace_out.empty()) {
    std::ofstream out(f.trace_out);
    if (!out) throw UsageError("cannot write " + f.trace_out);
    for (const auto& e : r.trace) out << e.to_json().dump() << "\n";
  }
  if (!f.state_out.empty()) {
    chain.heap = r.post;
    // Sources are stored relative to the file that names them.
    namespace fs = std::filesystem;
    fs::path in_dir = fs::absolute(f.state).parent_path();
    fs::path out_dir = fs::absolute(f.state_out).parent_path();
    for (auto& src : chain.sources)
      src = fs::relative(fs::weakly_canonical(in_dir / src), out_dir).string();
    std::ofstream out(f.state_out);
    if (!out) throw UsageError("cannot write " + f.state_out);
    out << rt::chain_state_to_json(chain).dump(2) << "\n";
  }

  if (fmt == Format::Machine) {
    std::cout << r.to_json().dump() << "\n";
  } else {
    std::string outcome = rt::to_string(r.outcome);
    std::cout << (r.outcome == rt::TransactionReceipt::Outcome::Committed ? st.green(outcome)
                                                                           : st.red(outcome))
              << ": " << rt::to_string(r.value) << " (" << r.steps << " steps)\n";
  }
  switch (r.outcome) {
    case rt::TransactionReceipt::Outcome::Committed: return kOk;
    case rt::TransactionReceipt::Outcome::Reverted: return kReverted;
    case rt::TransactionReceipt::Outcome::UncaughtException: return kUncaught;
  }
  return kOk;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

int cmd_lattice(const std::vector<std::string>& words, Format fmt, const Style& st) {
  std::string q;
  for (const auto& w : words) q += (q.empty() ? "" : " ") + w;
  std::string hyps;
  static const std::regex given(R"(\s+given\s+)");
  std::smatch m;
  if (std::regex_search(q, m, given)) {
    hyps = m.suffix();
    q = m.prefix();
  }
  auto arrow = q.find("=>");
  if (arrow == std::string::npos) throw UsageError("expected `L1 => L2 [given a=>b, ...]`");
  Label lhs, rhs;
  TrustEnv env;
  bool holds = false;
  try {
    lhs = parse_label(trim(q.substr(0, arrow)));
    rhs = parse_label(trim(q.substr(arrow + 2)));
    std::stringstream ss(hyps);
    std::string h;
    while (std::getline(ss, h, ',')) {
      auto a = h.find("=>");
      if (a == std::string::npos) throw UsageError("hypothesis `" + trim(h) + "` needs `=>`");
      std::string from = trim(h.substr(0, a));
      std::string to = trim(h.substr(a + 2));
      if (from.empty() || to.empty() || from.find_first_of(" ()\\/") != std::string::npos ||
          to.find_first_of(" ()\\/") != std::string::npos)
        throw UsageError("hypotheses relate two atoms, got `" + trim(h) + "`");
      env.add(Principal{from}, Principal{to});
    }
    holds = flows_to(lhs, rhs, env);
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (fmt == Format::Machine) {
    std::cout << json{{"from", canonical_string(lhs)},
                      {"to", canonical_string(rhs)},
                      {"flows", holds}}
                     .dump()
              << "\n";
  } else {
    std::cout << (holds ? st.green("true") : st.red("false")) << "\n";
  }
  return kOk;
}

struct ScenarioFlags {
  std::string dir;
  std::string filter;
  bool unsafe_no_sigcheck = false;
  bool no_fastpath = false;
  bool typed_step = false;
};

int cmd_scenarios(const ScenarioFlags& f, Format fmt, const Style& st) {
  std::string dir = f.dir.empty() ? harness::source_dir() + "/scenarios" : f.dir;
  std::vector<harness::Scenario> all;
  try {
    all = harness::load_scenarios(dir);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  std::vector<harness::Scenario> picked;
  for (auto& s : all)
    if (s.name.find(f.filter) != std::string::npos) picked.push_back(std::move(s));
  if (picked.empty()) {
    if (fmt == Format::Text) std::cout << "no scenario matches `" << f.filter << "`\n";
    return kOk;
  }
  harness::ScenarioOptions opts;
  opts.sigcheck = !f.unsafe_no_sigcheck;
  opts.atomic_fastpath = !f.no_fastpath;
  opts.typed_step = f.typed_step;
  auto reports = harness::run_scenarios(picked, opts);
  std::size_t passed = 0;
  for (const auto& r : reports) {
    passed += r.pass;
    if (fmt == Format::Machine) {
      std::cout << r.to_json().dump() << "\n";
      continue;
    }
    std::cout << (r.pass ? st.green("PASS") : st.red("FAIL")) << " " << r.name;
    if (r.cda_events) std::cout << " (" << r.cda_events << " CDA event(s))";
    std::cout << "\n";
    for (const auto& d : r.diffs) std::cout << "    " << d << "\n";
  }
  if (fmt == Format::Text)
    std::cout << st.bold(std::to_string(passed) + "/" + std::to_string(reports.size()) +
                         " scenarios passed")
              << (f.unsafe_no_sigcheck ? " (signature check disabled)" : "") << "\n";
  return passed == reports.size() ? kOk : kTypeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checker and interpreter for integrity-labeled contracts.\n"
               "Exit codes: 0 ok, 1 type error or failing scenario, 2 reverted,\n"
               "3 uncaught exception, 64 usage error."};
  app.require_subcommand(1);
  std::string format = "text";
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"text", "machine"}));

  std::vector<std::string> check_paths;
  auto* check = app.add_subcommand("check", "Type-check source files");
  check->add_option("paths", check_paths, "Source files (.scifc)");

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Execute one transaction against a chain state");
  run->add_option("--state", rf.state, "Chain-state file")->required();
  run->add_option("--origin", rf.origin, "Originating account, e.g. @alice")->required();
  run->add_option("--call", rf.call, "Call, e.g. '@koet.claimThrone()'")->required();
  run->add_option("--value", rf.value, "Native value sent with the call");
  run->add_option("--trace-out", rf.trace_out, "Write the trace as JSON lines");
  run->add_option("--state-out", rf.state_out, "Write the post-state");
  run->add_flag("--no-atomic-fastpath", rf.no_fastpath, "Disable the atomic fast path");
  run->add_flag("--typed-step", rf.typed_step, "Re-check typing at every step");

  std::vector<std::string> query;
  auto* lattice = app.add_subcommand("lattice", "Decide `L1 => L2 [given a=>b, ...]`");
  lattice->add_option("query", query, "Query text")->required();

  ScenarioFlags sf;
  auto* scen = app.add_subcommand("scenarios", "Run the scenario corpus");
  scen->add_option("--dir", sf.dir, "Scenario directory");
  scen->add_option("--filter", sf.filter, "Substring of scenario names");
  scen->add_flag("--unsafe-no-sigcheck", sf.unsafe_no_sigcheck,
                 "Disable the dispatch signature check (attack demonstration only)");
  scen->add_flag("--no-atomic-fastpath", sf.no_fastpath, "Disable the atomic fast path");
  scen->add_flag("--typed-step", sf.typed_step, "Re-check typing at every step");

  for (auto* sub : {check, run, lattice, scen}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "scifc: " << e.what() << "\n";
    return kUsage;
  }

  Format fmt = format == "machine" ? Format::Machine : Format::Text;
  Style st = fmt == Format::Text ? style_from_env() : Style{false};
  try {
    if (*check) return cmd_check(check_paths, fmt, st);
    if (*run) return cmd_run(rf, fmt, st);
    if (*lattice) return cmd_lattice(query, fmt, st);
    if (*scen) return cmd_scenarios(sf, fmt, st);
  } catch (const std::exception& e) {
    std::cerr << "scifc: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
