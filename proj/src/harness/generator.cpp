#include <random>

#include "scif/harness.hpp"
#include "scif/typecheck.hpp"

namespace scif::harness {

using namespace ast;

std::size_t node_count(const Expr& e) {
  std::size_t n = 1;
  for (const auto& k : e.kids) n += node_count(*k);
  for (const auto& h : e.handlers) n += node_count(*h.body);
  return n;
}

namespace {

constexpr std::size_t kMaxNodes = 30;

// Emits source text for one contract family. Statements draw from the whole
// surface language; the checker decides which programs survive.
class ProgramGen {
 public:
  explicit ProgramGen(std::uint64_t seed) : rng_(seed) {}

  std::string program(std::size_t entries, std::size_t helpers) {
    helpers_ = helpers;
    std::string out =
        "contract GenHelper {\n"
        "  uint{any} hits;\n\n"
        "  @public uint{any} note{any}(uint{any} x) {\n"
        "    hits = hits + x;\n"
        "    return hits;\n"
        "  }\n\n"
        "  @public void ping{any}() {}\n"
        "}\n\n"
        "contract Gen {\n"
        "  exception Oops(uint code);\n\n"
        "  uint a;\n  uint b;\n  bool flag;\n"
        "  mapping(address => uint) m;\n"
        "  GenHelper helper;\n";
    for (std::size_t i = 0; i < helpers; ++i) {
      scopes_ = {{"p"}};
      in_entry_ = false;
      out += "\n  uint g" + std::to_string(i) + "(uint p) {\n" + stmts(1 + pick(2), 2) +
             "    return " + int_expr(2) + ";\n  }\n";
    }
    for (std::size_t i = 0; i < entries; ++i) {
      scopes_ = {{"x", "y"}};
      in_entry_ = true;
      out += "\n  @public uint{this} e" + std::to_string(i) +
             "{sender -> this; this}(uint p, uint q) throws Oops{this} {\n"
             "    let x = endorse(p, sender -> this);\n"
             "    let y = endorse(q, sender -> this);\n" +
             stmts(1 + pick(4), 2) + "    return " + int_expr(2) + ";\n  }\n";
    }
    out += "}\n";
    return out;
  }

  std::size_t pick(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

 private:
  std::string fresh() {
    std::string v = "v" + std::to_string(next_var_++);
    scopes_.back().push_back(v);
    return v;
  }

  std::string var() {
    std::vector<std::string> all;
    for (const auto& s : scopes_) all.insert(all.end(), s.begin(), s.end());
    return all[pick(all.size())];
  }

  std::string int_expr(int depth) {
    std::size_t k = depth <= 0 ? pick(5) : pick(9);
    switch (k) {
      case 0: return std::to_string(pick(10));
      case 1:
      case 2: return var();
      case 3: return pick(2) ? "a" : "b";
      case 4: return "m[sender]";
      default: {
        static const char* ops[] = {"+", "-", "*", "/"};
        return "(" + int_expr(depth - 1) + " " + ops[k - 5] + " " + int_expr(depth - 1) + ")";
      }
    }
  }

  std::string bool_expr() {
    switch (pick(5)) {
      case 0: return "flag";
      case 1: return "!flag";
      case 2: return int_expr(1) + " == " + int_expr(0);
      default: return int_expr(1) + " < " + int_expr(1);
    }
  }

  std::string block(std::size_t n, int depth) {
    scopes_.emplace_back();
    std::string body = stmts(n, depth);
    scopes_.pop_back();
    return body;
  }

  std::string stmts(std::size_t n, int depth) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += "    " + stmt(depth) + "\n";
    return out;
  }

  std::string stmt(int depth) {
    std::size_t k = depth <= 0 ? pick(5) : pick(15);
    switch (k) {
      case 0: {
        std::string e = int_expr(1);
        return "let " + fresh() + " = " + e + ";";
      }
      case 1: return std::string(pick(2) ? "a" : "b") + " = " + int_expr(1) + ";";
      case 2: return "m[sender] = " + int_expr(1) + ";";
      case 3: return "flag = " + bool_expr() + ";";
      case 4: return "assert " + bool_expr() + ";";
      case 5:
        return "if (" + bool_expr() + ") {\n" + block(1 + pick(2), depth - 1) + "    } else {\n" +
               block(pick(2), depth - 1) + "    }";
      case 6:
        return "atomic {\n" + block(1 + pick(2), depth - 1) + "    } rescue f {\n" +
               block(pick(2), depth - 1) + "    }";
      case 7:
        if (!in_entry_) return stmt(0);
        return "try {\n" + block(1 + pick(2), depth - 1) + "    } catch Oops(c) {\n" +
               block(pick(2), depth - 1) + "    }";
      case 8:
        if (!in_entry_) return stmt(0);
        return "if (" + bool_expr() + ") {\n    throw Oops(" + int_expr(0) + ");\n    } else {}";
      case 9: return "lock (this) {\n    helper.note(" + int_expr(0) + ");\n    }";
      case 10: {
        std::string e = int_expr(0);
        return "let " + fresh() + " = endorse(helper.note(" + e + "), any -> this);";
      }
      case 11: return "helper.ping();";
      case 12: return "send(sender, " + std::to_string(pick(3)) + ");";
      case 13: {
        if (!in_entry_ || helpers_ == 0) return stmt(0);
        std::string e = int_expr(0);
        return "let " + fresh() + " = g" + std::to_string(pick(helpers_)) + "(" + e + ");";
      }
      default: return "b = (a / " + int_expr(0) + ");";
    }
  }

  std::mt19937_64 rng_;
  std::vector<std::vector<std::string>> scopes_;
  std::size_t next_var_ = 0;
  std::size_t helpers_ = 0;
  bool in_entry_ = false;
};

bool small_enough(const ContractTable& ct) {
  for (const auto& [name, c] : ct.contracts)
    for (const auto& m : c.methods)
      if (m.body && node_count(*m.body) > kMaxNodes) return false;
  return true;
}

}  // namespace

GeneratedProgram gen_well_typed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::uint64_t attempt = 0;; ++attempt) {
    ProgramGen g(rng());
    std::size_t entries = 1 + g.pick(3);
    std::string src = g.program(entries, g.pick(3));
    ContractTable ct;
    try {
      ct = parse_program(src, "gen.scifc");
    } catch (const ParseError&) {
      continue;
    }
    if (!small_enough(ct)) continue;
    tc::Checker checker(ct);
    checker.check_program();
    if (!checker.diagnostics().empty()) continue;

    GeneratedProgram p;
    p.source = std::move(src);
    p.attempts = attempt + 1;
    p.setup = {{"version", 1},
               {"sources", nlohmann::json::array()},
               {"users", {{"@user", 1000}}},
               {"contracts",
                {{"@gen", {{"type", "Gen"}, {"balance", 100}, {"storage", {{"helper", "@helper"}}}}},
                 {"@helper", {{"type", "GenHelper"}}}}}};
    for (std::size_t i = 0; i < entries; ++i) {
      TxSpec tx;
      tx.origin = "@user";
      tx.receiver = "@gen";
      tx.method = "e" + std::to_string(i);
      tx.args = {g.pick(10), g.pick(10)};
      p.calls.push_back(std::move(tx));
    }
    return p;
  }
}

}  // namespace scif::harness
