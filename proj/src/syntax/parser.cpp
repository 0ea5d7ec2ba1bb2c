#include <fstream>
#include <set>
#include <sstream>

#include "lexer.hpp"
#include "scif/syntax.hpp"

namespace scif {

using namespace ast;
using detail::Tok;
using detail::Token;

namespace {

// An expression lowered to administrative normal form: a sequence of
// temporaries followed by one core expression whose operands are values.
struct Lowered {
  std::vector<std::pair<std::string, ExprPtr>> binds;
  ExprPtr last;
  Pos pos;
};

ExprPtr fold(const std::vector<std::pair<std::string, ExprPtr>>& binds,
             ExprPtr tail) {
  for (auto it = binds.rbegin(); it != binds.rend(); ++it)
    tail = make_let(it->first, it->second, tail, it->second->pos);
  return tail;
}

ExprPtr append_tail(const ExprPtr& chain, ExprPtr t) {
  if (chain->kind == Expr::Kind::Let) {
    Expr e = *chain;
    e.kids[1] = append_tail(chain->kids[1], std::move(t));
    return make(std::move(e));
  }
  if (chain->kind == Expr::Kind::Val &&
      chain->vals[0].kind == Value::Kind::Unit)
    return t;
  return make_let("_", chain, std::move(t), chain->pos);
}

const std::set<std::string> kCompoundStarts = {"if", "atomic", "try", "lock",
                                               "ignore_locks"};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::string file,
         const std::set<std::string>& exceptions,
         const std::set<std::string>& contracts)
      : toks_(std::move(toks)),
        file_(std::move(file)),
        exceptions_(exceptions),
        contracts_(contracts) {}

  std::vector<ContractDecl> parse_file() {
    std::vector<ContractDecl> out;
    while (!at_end()) out.push_back(parse_contract());
    return out;
  }

 private:
  // ---- token plumbing ----
  const Token& peek(std::size_t k = 0) const {
    return toks_[std::min(p_ + k, toks_.size() - 1)];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  bool is(std::string_view text, std::size_t k = 0) const {
    const Token& t = peek(k);
    return (t.kind == Tok::Punct || t.kind == Tok::Ident || t.kind == Tok::Addr) &&
           t.text == text;
  }
  bool accept(std::string_view text) {
    if (!is(text)) return false;
    ++p_;
    return true;
  }
  const Token& next() {
    const Token& t = peek();
    if (p_ < toks_.size() - 1) ++p_;
    return t;
  }
  [[noreturn]] void fail_at(Pos pos, const std::string& msg) const {
    Diagnostic d;
    d.file = file_;
    d.pos = pos;
    d.rule = "Syntax";
    d.message = msg;
    throw ParseError({d});
  }
  [[noreturn]] void fail_here(const std::string& msg) const {
    std::string got = at_end() ? "end of input" : "`" + peek().text + "`";
    fail_at(peek().pos, msg + ", found " + got);
  }
  const Token& expect(std::string_view text) {
    if (!is(text)) fail_here("expected `" + std::string(text) + "`");
    return next();
  }
  std::string expect_ident(const char* what) {
    if (peek().kind != Tok::Ident) fail_here(std::string("expected ") + what);
    return next().text;
  }

  // ---- scopes ----
  void push_scope() { scopes_.emplace_back(); }
  void pop_scope() { scopes_.pop_back(); }
  void bind(const std::string& name) {
    if (name != "_") scopes_.back().insert(name);
  }
  bool bound(const std::string& name) const {
    for (const auto& s : scopes_)
      if (s.count(name)) return true;
    return false;
  }
  std::string fresh() { return "$t" + std::to_string(++temps_); }

  // ---- labels ----
  Label parse_label() {
    Label l = parse_label_meet();
    while (accept("\\/")) l = Label::join_of(l, parse_label_meet());
    return l;
  }
  Label parse_label_meet() {
    Label l = parse_label_atom();
    while (accept("/\\")) l = Label::meet_of(l, parse_label_atom());
    return l;
  }
  Label parse_label_atom() {
    if (accept("(")) {
      Label l = parse_label();
      expect(")");
      return l;
    }
    const Token& t = peek();
    if (t.kind == Tok::Ident || t.kind == Tok::Addr) {
      next();
      if (t.text == "any") return Label::any();
      if (t.text == "this") return Label::this_label();
      return Label::atom(t.text);
    }
    fail_here("expected a label");
  }
  // `{L}` suffix; returns nullopt if absent.
  // After `throws E`, a brace opens a label only when it closes before any
  // statement punctuation and is followed by `;`, `,` or the method body.
  bool throws_label_ahead() const {
    if (!is("{")) return false;
    for (std::size_t i = p_ + 1; i < toks_.size(); ++i) {
      const std::string& t = toks_[i].text;
      if (t == ";" || t == "=" || t == "{" || t == "(") return false;
      if (t == "}") {
        if (i + 1 >= toks_.size()) return false;
        const std::string& after = toks_[i + 1].text;
        return after == ";" || after == "," || after == "{";
      }
    }
    return false;
  }

  std::optional<Label> parse_label_suffix() {
    if (!is("{")) return std::nullopt;
    next();
    Label l = parse_label();
    expect("}");
    return l;
  }

  // ---- types ----
  Type parse_type(bool allow_void = false) {
    Pos pos = peek().pos;
    std::string word = expect_ident("a type");
    Type t;
    if (word == "void") {
      if (!allow_void) fail_at(pos, "`void` is only allowed as a return type");
      t.base = BaseKind::Unit;
      return t;
    }
    if (word == "unit") {
      t.base = BaseKind::Unit;
    } else if (word == "bool") {
      t.base = BaseKind::Bool;
    } else if (word == "uint") {
      t.base = BaseKind::Int;
    } else if (word == "address") {
      t.base = BaseKind::Address;
    } else if (word == "ref") {
      expect("(");
      t.base = BaseKind::Ref;
      t.elem = std::make_shared<const Type>(parse_type());
      expect(")");
    } else if (word == "mapping") {
      expect("(");
      t.base = BaseKind::Mapping;
      std::string kb = expect_ident("a mapping key type");
      if (kb == "address") {
        t.key_base = BaseKind::Address;
      } else if (kb == "uint") {
        t.key_base = BaseKind::Int;
      } else {
        fail_at(pos, "mapping keys must be `address` or `uint`");
      }
      if (peek().kind == Tok::Ident) {
        if (t.key_base != BaseKind::Address)
          fail_at(peek().pos, "only address-keyed mappings may name their key");
        t.key_var = next().text;
      }
      expect("=>");
      t.elem = std::make_shared<const Type>(parse_type());
      expect(")");
    } else {
      t.base = BaseKind::Contract;
      t.name = word;
    }
    if (auto l = parse_label_suffix()) {
      t.label = *l;
      t.label_explicit = true;
    }
    return t;
  }

  static Type default_labels(Type t, const Label& dflt) {
    if (!t.label_explicit) t.label = dflt;
    if (t.elem) t.elem = std::make_shared<const Type>(default_labels(*t.elem, dflt));
    return t;
  }

  // ---- declarations ----
  ContractDecl parse_contract() {
    ContractDecl c;
    c.pos = peek().pos;
    c.source = file_;
    if (accept("attacker")) c.is_attacker = true;
    if (accept("interface")) {
      c.is_interface = true;
    } else {
      expect("contract");
    }
    c.name = expect_ident("a contract name");
    if (accept("extends")) c.superclass = expect_ident("a superclass name");
    expect("{");
    while (!accept("}")) {
      if (at_end()) fail_here("expected `}` closing contract " + c.name);
      parse_member(c);
    }
    return c;
  }

  void parse_member(ContractDecl& c) {
    if (accept("trust")) {
      do {
        if (peek().kind != Tok::Addr) fail_here("expected an @address");
        c.declared_trust.push_back(next().text);
      } while (accept(","));
      expect(";");
      return;
    }
    if (is("exception")) {
      ExceptionDecl ex;
      ex.pos = next().pos;
      ex.owner = c.name;
      ex.name = expect_ident("an exception name");
      expect("(");
      if (!is(")")) {
        do {
          Param p;
          p.pos = peek().pos;
          p.type = default_labels(parse_type(), Label::any());
          p.name = expect_ident("a field name");
          ex.fields.push_back(std::move(p));
        } while (accept(","));
      }
      expect(")");
      expect(";");
      c.exceptions.push_back(std::move(ex));
      return;
    }
    Pos pos = peek().pos;
    bool is_public = false;
    if (peek().kind == Tok::Addr) {
      if (peek().text != "@public") fail_here("unknown modifier");
      next();
      is_public = true;
    }
    Type t = parse_type(/*allow_void=*/true);
    std::string name = expect_ident("a member name");
    if (!is_public && accept(";")) {
      if (t.base == BaseKind::Unit && !t.label_explicit)
        fail_at(pos, "fields cannot have type void");
      c.fields.push_back({name, default_labels(t, Label::this_label()), pos});
      return;
    }
    c.methods.push_back(parse_method(c, pos, is_public, t, name));
  }

  MethodDecl parse_method(const ContractDecl& c, Pos pos, bool is_public,
                          Type ret, std::string name) {
    MethodSig sig;
    sig.pos = pos;
    sig.name = std::move(name);
    sig.is_public = is_public;
    if (is_public) sig.pc_ex = Label::atom("sender");
    if (accept("{")) {
      sig.pc_ex = parse_label();
      sig.pc_ex_explicit = true;
      sig.pc_in = sig.pc_ex;
      if (accept("->")) {
        sig.pc_in = parse_label();
        sig.pc_in_explicit = true;
      }
      sig.lock = sig.pc_in;
      if (accept(";")) {
        sig.lock = parse_label();
        sig.lock_explicit = true;
      }
      expect("}");
    } else if (!is_public) {
      sig.pc_ex = Label::this_label();
    }
    if (!sig.pc_ex_explicit) {
      // `@public` without labels: callable by anyone, runs as the contract.
      sig.pc_in = Label::this_label();
      sig.lock = Label::this_label();
    }
    sig.ret = default_labels(std::move(ret), sig.pc_ex);
    expect("(");
    if (!is(")")) {
      do {
        Param p;
        p.pos = peek().pos;
        p.is_final = accept("final");
        p.type = default_labels(parse_type(), sig.pc_ex);
        p.name = expect_ident("a parameter name");
        sig.params.push_back(std::move(p));
      } while (accept(","));
    }
    expect(")");
    if (accept("throws")) {
      do {
        ThrowsDecl td;
        td.exception = expect_ident("an exception name");
        if (auto l = throws_label_ahead() ? parse_label_suffix() : std::nullopt) {
          td.label = *l;
          td.label_explicit = true;
        } else {
          td.label = sig.pc_ex;
        }
        sig.throws.push_back(std::move(td));
      } while (accept(","));
    }
    MethodDecl md;
    md.sig = std::move(sig);
    if (accept(";")) {
      if (!c.is_interface)
        fail_at(pos, "method " + md.sig.name + " of contract " + c.name +
                         " needs a body");
      return md;
    }
    md.body = parse_method_body(md.sig);
    return md;
  }

  bool body_assigns_result() const {
    int depth = 0;
    for (std::size_t k = p_; k < toks_.size(); ++k) {
      const Token& t = toks_[k];
      if (t.kind == Tok::Punct && t.text == "{") ++depth;
      if (t.kind == Tok::Punct && t.text == "}" && --depth == 0) return false;
      if (t.kind == Tok::Ident && t.text == "result" && k + 1 < toks_.size() &&
          toks_[k + 1].kind == Tok::Punct && toks_[k + 1].text == "=")
        return true;
    }
    return false;
  }

  ExprPtr parse_method_body(const MethodSig& sig) {
    temps_ = 0;
    scopes_.clear();
    push_scope();
    for (const auto& p : sig.params) bind(p.name);
    bool uses_result = body_assigns_result();
    Pos body_pos = peek().pos;
    if (uses_result) {
      if (sig.ret.base != BaseKind::Bool && sig.ret.base != BaseKind::Int)
        fail_at(body_pos, "`result` assignment needs a bool or uint return type");
      bind("result");
    }
    ExprPtr body = parse_block(/*tail=*/true);
    if (uses_result) {
      Expr init;
      init.kind = Expr::Kind::Ref;
      init.pos = body_pos;
      init.type = sig.ret;
      init.vals.push_back(sig.ret.base == BaseKind::Bool
                              ? Value::of_bool(false, body_pos)
                              : Value::of_int(0, body_pos));
      Expr rd;
      rd.kind = Expr::Kind::Deref;
      rd.pos = body_pos;
      rd.vals.push_back(Value::var("result", body_pos));
      body = make_let("result", make(std::move(init)),
                      append_tail(body, make(std::move(rd))), body_pos);
    }
    pop_scope();
    return body;
  }

  // ---- statements ----
  ExprPtr parse_block(bool tail) {
    Pos pos = expect("{").pos;
    push_scope();
    std::vector<std::pair<std::string, ExprPtr>> binds;
    ExprPtr value;
    while (!accept("}")) {
      if (at_end()) fail_here("expected `}`");
      if (value) fail_here("expected `}` after the block's value");
      parse_statement(binds, value, tail);
    }
    pop_scope();
    if (!value) value = make_val(Value::unit(pos));
    return fold(binds, value);
  }

  void parse_statement(std::vector<std::pair<std::string, ExprPtr>>& binds,
                       ExprPtr& value, bool tail) {
    Pos pos = peek().pos;
    auto append = [&](Lowered l) {
      for (auto& b : l.binds) binds.push_back(std::move(b));
      return l.last;
    };
    if (accept("let")) {
      std::string x = expect_ident("a binder");
      expect("=");
      Lowered rhs = is_compound_start() ? parse_compound(false) : parse_expr();
      ExprPtr e = append(std::move(rhs));
      expect(";");
      binds.emplace_back(x, e);
      bind(x);
      return;
    }
    if (accept("return")) {
      if (!tail) fail_at(pos, "`return` is only supported in tail position");
      ++returns_;
      Lowered l = parse_expr();
      expect(";");
      if (!is("}")) fail_at(pos, "`return` must be the last statement of a block");
      value = append(std::move(l));
      return;
    }
    if (accept("throw")) {
      Lowered l = parse_expr();
      Value v = to_value(l);
      Expr e;
      e.kind = Expr::Kind::Throw;
      e.pos = pos;
      e.vals.push_back(v);
      l.last = make(std::move(e));
      finish_simple(binds, value, append(std::move(l)));
      return;
    }
    if (accept("fail")) {
      Lowered l;
      Value v = Value::unit(pos);
      if (!is(";") && !is("}")) {
        l = parse_expr();
        v = to_value(l);
      }
      Expr e;
      e.kind = Expr::Kind::Fail;
      e.pos = pos;
      e.vals.push_back(v);
      l.last = make(std::move(e));
      finish_simple(binds, value, append(std::move(l)));
      return;
    }
    if (accept("assert")) {
      Lowered l = parse_expr();
      Value c = to_value(l);
      Expr f;
      f.kind = Expr::Kind::Fail;
      f.pos = pos;
      f.vals.push_back(Value::unit(pos));
      Expr e;
      e.kind = Expr::Kind::If;
      e.pos = pos;
      e.vals.push_back(c);
      e.kids = {make_val(Value::unit(pos)), make(std::move(f))};
      l.last = make(std::move(e));
      expect(";");
      binds.emplace_back("_", append(std::move(l)));
      return;
    }
    if (is_compound_start()) {
      int returns_before = returns_;
      Lowered l = parse_compound(tail);
      bool explicit_stmt = accept(";");
      ExprPtr e = append(std::move(l));
      if (!explicit_stmt && is("}")) {
        value = e;
      } else {
        if (returns_ != returns_before)
          fail_at(pos, "`return` is only supported in tail position");
        binds.emplace_back("_", e);
      }
      return;
    }
    Lowered lhs = parse_expr();
    if (is("=") || is(":=")) {
      Lowered w = parse_assignment(std::move(lhs));
      finish_simple(binds, value, append(std::move(w)));
      return;
    }
    finish_simple(binds, value, append(std::move(lhs)));
  }

  // A simple statement ends with `;`, or is the block's value if `}` follows.
  void finish_simple(std::vector<std::pair<std::string, ExprPtr>>& binds,
                     ExprPtr& value, ExprPtr e) {
    if (accept(";")) {
      binds.emplace_back("_", std::move(e));
    } else if (is("}")) {
      value = std::move(e);
    } else {
      fail_here("expected `;`");
    }
  }

  Lowered parse_assignment(Lowered lhs) {
    Pos pos = lhs.pos;
    bool ref_assign = next().text == ":=";
    Lowered out;
    out.pos = pos;
    Expr e;
    e.pos = pos;
    if (ref_assign) {
      Value target = to_value(lhs);
      out.binds = std::move(lhs.binds);
      Lowered rhs = parse_expr();
      Value v = to_value(rhs);
      for (auto& b : rhs.binds) out.binds.push_back(std::move(b));
      e.kind = Expr::Kind::AssignRef;
      e.vals = {target, v};
      out.last = make(std::move(e));
      return out;
    }
    const Expr& target = *lhs.last;
    if (target.kind == Expr::Kind::Val && target.vals[0].kind == Value::Kind::Var &&
        target.vals[0].name == "result") {
      e.kind = Expr::Kind::AssignRef;
      e.vals = {target.vals[0]};
    } else if (target.kind == Expr::Kind::FieldRead) {
      e.kind = Expr::Kind::FieldWrite;
      e.name = target.name;
    } else if (target.kind == Expr::Kind::MapRead) {
      e.kind = Expr::Kind::MapWrite;
      e.name = target.name;
      e.keys = target.keys;
    } else {
      fail_at(pos, "left side of `=` must be a field, a mapping entry or `result`");
    }
    out.binds = std::move(lhs.binds);
    Lowered rhs = parse_expr();
    Value v = to_value(rhs);
    for (auto& b : rhs.binds) out.binds.push_back(std::move(b));
    e.vals.push_back(v);
    out.last = make(std::move(e));
    return out;
  }

  bool is_compound_start() const {
    return is("{") ||
           (peek().kind == Tok::Ident && kCompoundStarts.count(peek().text));
  }

  Lowered parse_compound(bool tail) {
    Pos pos = peek().pos;
    Lowered out;
    out.pos = pos;
    if (is("{")) {
      out.last = parse_block(tail);
      return out;
    }
    Expr e;
    e.pos = pos;
    std::string kw = next().text;
    if (kw == "if") {
      expect("(");
      Lowered c = parse_expr();
      if (is("\\/") || is("/\\"))
        fail_here("compound labels are not allowed in a dynamic trust check");
      Value a = to_value(c);
      out.binds = std::move(c.binds);
      if (accept("=>")) {
        Lowered rhs = parse_expr();
        if (is("\\/") || is("/\\"))
          fail_here("compound labels are not allowed in a dynamic trust check");
        Value b = to_value(rhs);
        for (auto& bd : rhs.binds) out.binds.push_back(std::move(bd));
        e.kind = Expr::Kind::IfTrust;
        e.vals = {a, b};
      } else {
        e.kind = Expr::Kind::If;
        e.vals = {a};
      }
      expect(")");
      ExprPtr then_branch = parse_block(tail);
      ExprPtr else_branch;
      if (accept("else")) {
        if (is("if")) {
          Lowered nested = parse_compound(tail);
          else_branch = fold(nested.binds, nested.last);
        } else {
          else_branch = parse_block(tail);
        }
      } else {
        else_branch = make_val(Value::unit(pos));
      }
      e.kids = {then_branch, else_branch};
    } else if (kw == "lock") {
      expect("(");
      e.kind = Expr::Kind::Lock;
      e.from = parse_label();
      expect(")");
      e.kids = {parse_block(tail)};
    } else if (kw == "ignore_locks") {
      e.kind = Expr::Kind::IgnoreLocks;
      e.kids = {parse_block(tail)};
    } else if (kw == "atomic") {
      e.kind = Expr::Kind::Atomic;
      ExprPtr body = parse_block(false);
      expect("rescue");
      e.binder = expect_ident("a failure binder");
      push_scope();
      bind(e.binder);
      ExprPtr rescue = parse_block(tail);
      pop_scope();
      e.kids = {body, rescue};
    } else if (kw == "try") {
      e.kind = Expr::Kind::Try;
      e.kids = {parse_block(false)};
      while (is("catch")) {
        Handler h;
        h.pos = next().pos;
        h.exception = expect_ident("an exception name");
        if (accept("(")) {
          if (!is(")")) {
            do {
              h.vars.push_back(expect_ident("a binder"));
            } while (accept(","));
          }
          expect(")");
        }
        push_scope();
        for (const auto& v : h.vars) bind(v);
        h.body = parse_block(tail);
        pop_scope();
        e.handlers.push_back(std::move(h));
      }
      if (e.handlers.empty()) fail_here("expected `catch`");
    } else {
      fail_at(pos, "unexpected `" + kw + "`");
    }
    out.last = make(std::move(e));
    return out;
  }

  // ---- expressions ----
  Value to_value(Lowered& l) {
    if (l.last->kind == Expr::Kind::Val) return l.last->vals[0];
    std::string t = fresh();
    l.binds.emplace_back(t, l.last);
    l.last = make_val(Value::var(t, l.pos));
    return l.last->vals[0];
  }

  Lowered binop(Lowered lhs, const std::string& op, Lowered rhs) {
    Value a = to_value(lhs);
    Value b = to_value(rhs);
    for (auto& bd : rhs.binds) lhs.binds.push_back(std::move(bd));
    Expr e;
    e.kind = Expr::Kind::BinOp;
    e.pos = lhs.pos;
    e.name = op;
    e.vals = {a, b};
    lhs.last = make(std::move(e));
    return lhs;
  }

  Lowered parse_expr() { return parse_or(); }

  Lowered parse_or() {
    Lowered l = parse_and();
    while (is("||")) {
      next();
      l = binop(std::move(l), "||", parse_and());
    }
    return l;
  }
  Lowered parse_and() {
    Lowered l = parse_eq();
    while (is("&&")) {
      next();
      l = binop(std::move(l), "&&", parse_eq());
    }
    return l;
  }
  Lowered parse_eq() {
    Lowered l = parse_rel();
    while (is("==") || is("!=")) {
      std::string op = next().text;
      l = binop(std::move(l), op, parse_rel());
    }
    return l;
  }
  Lowered parse_rel() {
    Lowered l = parse_add();
    while (is("<") || is("<=") || is(">") || is(">=")) {
      std::string op = next().text;
      l = binop(std::move(l), op, parse_add());
    }
    return l;
  }
  Lowered parse_add() {
    Lowered l = parse_mul();
    while (is("+") || is("-")) {
      std::string op = next().text;
      l = binop(std::move(l), op, parse_mul());
    }
    return l;
  }
  Lowered parse_mul() {
    Lowered l = parse_unary();
    while (is("*") || is("/") || is("%")) {
      std::string op = next().text;
      l = binop(std::move(l), op, parse_unary());
    }
    return l;
  }
  Lowered parse_unary() {
    if (is("!") || is("-")) {
      Pos pos = peek().pos;
      std::string op = next().text;
      Lowered l = parse_unary();
      Value v = to_value(l);
      Expr e;
      e.kind = Expr::Kind::UnOp;
      e.pos = pos;
      e.name = op;
      e.vals = {v};
      l.last = make(std::move(e));
      l.pos = pos;
      return l;
    }
    return parse_postfix();
  }

  Lowered parse_postfix() {
    Lowered cur = parse_primary();
    for (;;) {
      if (is(".")) {
        next();
        Pos mpos = peek().pos;
        std::string member = expect_ident("a member name");
        if (is("(")) {
          Value recv = to_value(cur);
          std::vector<Value> args = parse_args(cur);
          Expr e;
          e.kind = Expr::Kind::Call;
          e.pos = cur.pos;
          e.name = member;
          e.vals.push_back(recv);
          for (auto& a : args) e.vals.push_back(std::move(a));
          cur.last = make(std::move(e));
          continue;
        }
        if (cur.last->kind != Expr::Kind::Val ||
            cur.last->vals[0].kind != Value::Kind::This)
          fail_at(mpos, "only fields of `this` can be accessed directly");
        Expr e;
        e.kind = Expr::Kind::FieldRead;
        e.pos = cur.pos;
        e.name = member;
        cur.last = make(std::move(e));
        continue;
      }
      if (is("[")) {
        Pos ipos = next().pos;
        if (cur.last->kind != Expr::Kind::FieldRead &&
            cur.last->kind != Expr::Kind::MapRead)
          fail_at(ipos, "only mapping fields can be indexed");
        Expr e = *cur.last;
        Lowered k = parse_expr();
        Value kv = to_value(k);
        for (auto& b : k.binds) cur.binds.push_back(std::move(b));
        expect("]");
        e.kind = Expr::Kind::MapRead;
        e.id = 0;
        e.keys.push_back(kv);
        cur.last = make(std::move(e));
        continue;
      }
      return cur;
    }
  }

  // Parses `(a, b, ...)`, appending argument temporaries to `into`.
  std::vector<Value> parse_args(Lowered& into) {
    expect("(");
    std::vector<Value> out;
    if (!is(")")) {
      do {
        Lowered a = parse_expr();
        Value v = to_value(a);
        for (auto& b : a.binds) into.binds.push_back(std::move(b));
        out.push_back(std::move(v));
      } while (accept(","));
    }
    expect(")");
    return out;
  }

  bool starts_primary(std::size_t k) const {
    const Token& t = peek(k);
    if (t.kind == Tok::Ident || t.kind == Tok::Int || t.kind == Tok::Addr)
      return true;
    return t.kind == Tok::Punct && t.text == "(";
  }

  Lowered value_expr(Value v, Pos pos) {
    Lowered l;
    l.pos = pos;
    l.last = make_val(std::move(v));
    return l;
  }

  Lowered single(Expr e) {
    Lowered l;
    l.pos = e.pos;
    l.last = make(std::move(e));
    return l;
  }

  Lowered parse_primary() {
    const Token& t = peek();
    Pos pos = t.pos;
    if (t.kind == Tok::Int) {
      next();
      return value_expr(Value::of_int(BigInt(t.text), pos), pos);
    }
    if (t.kind == Tok::Addr) {
      if (t.text == "@public") fail_here("unexpected modifier");
      next();
      return value_expr(Value::addr(t.text, pos), pos);
    }
    if (is("(")) {
      if (is(")", 1)) {
        next();
        next();
        return value_expr(Value::unit(pos), pos);
      }
      if (peek(1).kind == Tok::Ident && contracts_.count(peek(1).text) &&
          is(")", 2) && starts_primary(3)) {
        next();
        std::string c = next().text;
        next();
        Lowered operand = parse_unary();
        Value v = to_value(operand);
        Expr e;
        e.kind = Expr::Kind::Cast;
        e.pos = pos;
        e.name = c;
        e.vals = {v};
        operand.last = make(std::move(e));
        operand.pos = pos;
        return operand;
      }
      next();
      Lowered inner = parse_expr();
      expect(")");
      inner.pos = pos;
      return inner;
    }
    if (t.kind != Tok::Ident) fail_here("expected an expression");
    std::string word = t.text;
    next();
    if (word == "true" || word == "false")
      return value_expr(Value::of_bool(word == "true", pos), pos);
    if (word == "this") return value_expr(Value::of_kind(Value::Kind::This, pos), pos);
    if (word == "sender")
      return value_expr(Value::of_kind(Value::Kind::Sender, pos), pos);
    if (word == "callvalue")
      return value_expr(Value::of_kind(Value::Kind::CallValue, pos), pos);
    if (word == "new") {
      Lowered out;
      out.pos = pos;
      Expr e;
      e.kind = Expr::Kind::New;
      e.pos = pos;
      e.name = expect_ident("a contract name");
      e.vals = parse_args(out);
      out.last = make(std::move(e));
      return out;
    }
    if (word == "ref") {
      expect("(");
      Lowered out = parse_expr();
      Value v = to_value(out);
      expect(":");
      Expr e;
      e.kind = Expr::Kind::Ref;
      e.pos = pos;
      e.type = default_labels(parse_type(), Label::this_label());
      expect(")");
      e.vals = {v};
      out.last = make(std::move(e));
      out.pos = pos;
      return out;
    }
    if (word == "deref" || word == "send") {
      Lowered out;
      out.pos = pos;
      Expr e;
      e.kind = word == "deref" ? Expr::Kind::Deref : Expr::Kind::Send;
      e.pos = pos;
      e.vals = parse_args(out);
      std::size_t arity = word == "deref" ? 1 : 2;
      if (e.vals.size() != arity)
        fail_at(pos, "`" + word + "` takes " + std::to_string(arity) +
                         " argument(s)");
      out.last = make(std::move(e));
      return out;
    }
    if (word == "endorse") {
      expect("(");
      Lowered out = parse_expr();
      Value v = to_value(out);
      expect(",");
      Expr e;
      e.kind = Expr::Kind::Endorse;
      e.pos = pos;
      e.from = parse_label();
      expect("->");
      e.to = parse_label();
      expect(")");
      e.vals = {v};
      out.last = make(std::move(e));
      out.pos = pos;
      return out;
    }
    if (word == "atk_cast") {
      expect("(");
      Lowered out = parse_expr();
      Value v = to_value(out);
      expect("as");
      Value cast = Value::of_kind(Value::Kind::AtkCast, pos);
      cast.name = expect_ident("a contract name");
      cast.args = {v};
      expect(")");
      out.last = make_val(std::move(cast));
      out.pos = pos;
      return out;
    }
    if (is("(")) {
      Lowered out;
      out.pos = pos;
      if (exceptions_.count(word)) {
        Value ex = Value::of_kind(Value::Kind::Exn, pos);
        ex.name = word;
        ex.args = parse_args(out);
        out.last = make_val(std::move(ex));
        return out;
      }
      Expr e;
      e.kind = Expr::Kind::Call;
      e.pos = pos;
      e.name = word;
      e.vals.push_back(Value::of_kind(Value::Kind::This, pos));
      for (auto& a : parse_args(out)) e.vals.push_back(std::move(a));
      out.last = make(std::move(e));
      return out;
    }
    if (bound(word)) return value_expr(Value::var(word, pos), pos);
    if (exceptions_.count(word)) {
      Value ex = Value::of_kind(Value::Kind::Exn, pos);
      ex.name = word;
      return value_expr(std::move(ex), pos);
    }
    Expr e;
    e.kind = Expr::Kind::FieldRead;
    e.pos = pos;
    e.name = word;
    return single(std::move(e));
  }

  std::vector<Token> toks_;
  std::size_t p_ = 0;
  std::string file_;
  const std::set<std::string>& exceptions_;
  const std::set<std::string>& contracts_;
  std::vector<std::set<std::string>> scopes_;
  int temps_ = 0;
  int returns_ = 0;
};

void scan_names(const std::vector<Token>& toks, std::set<std::string>& exceptions,
                std::set<std::string>& contracts) {
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (toks[i].kind != Tok::Ident || toks[i + 1].kind != Tok::Ident) continue;
    if (toks[i].text == "exception") exceptions.insert(toks[i + 1].text);
    if (toks[i].text == "contract" || toks[i].text == "interface")
      contracts.insert(toks[i + 1].text);
  }
}

Diagnostic decl_error(const ContractDecl& c, Pos pos, std::string msg) {
  Diagnostic d;
  d.file = c.source;
  d.pos = pos;
  d.rule = "Declaration";
  d.message = std::move(msg);
  return d;
}

void validate(const ContractTable& ct, Diagnostics& out) {
  for (const auto& name : ct.order) {
    const ContractDecl& c = ct.at(name);
    std::set<std::string> seen_chain{name};
    for (auto s = c.superclass; s; s = ct.at(*s).superclass) {
      if (!ct.has(*s)) {
        out.push_back(decl_error(c, c.pos, "unknown superclass " + *s));
        break;
      }
      if (!seen_chain.insert(*s).second) {
        out.push_back(decl_error(c, c.pos, "inheritance cycle through " + *s));
        break;
      }
    }
    std::set<std::string> methods;
    for (const auto& m : c.methods)
      if (!methods.insert(m.sig.name).second)
        out.push_back(decl_error(c, m.sig.pos, "duplicate method " + m.sig.name));
    std::set<std::string> own_fields;
    for (const auto& f : c.fields)
      if (!own_fields.insert(f.name).second)
        out.push_back(decl_error(c, f.pos, "duplicate field " + f.name));
  }
}

}  // namespace

ast::ContractTable parse_sources(const std::vector<SourceFile>& files) {
  std::vector<std::vector<Token>> lexed;
  std::set<std::string> exceptions;
  std::set<std::string> contracts;
  for (const auto& f : files) {
    lexed.push_back(detail::lex(f.text, f.name));
    scan_names(lexed.back(), exceptions, contracts);
  }
  ContractTable ct;
  Diagnostics diags;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Parser p(lexed[i], files[i].name, exceptions, contracts);
    for (auto& c : p.parse_file()) {
      if (ct.has(c.name)) {
        diags.push_back(decl_error(c, c.pos, "duplicate contract " + c.name));
        continue;
      }
      for (const auto& ex : c.exceptions) {
        if (!ct.exceptions.emplace(ex.name, ex).second)
          diags.push_back(decl_error(c, ex.pos, "duplicate exception " + ex.name));
      }
      ct.order.push_back(c.name);
      std::string name = c.name;
      ct.contracts.emplace(name, std::move(c));
    }
  }
  if (diags.empty()) validate(ct, diags);
  if (!diags.empty()) throw ParseError(std::move(diags));
  return ct;
}

ast::ContractTable parse_program(std::string_view source, const std::string& file) {
  return parse_sources({{file, std::string(source)}});
}

ast::ContractTable load_files(const std::vector<std::string>& paths) {
  std::vector<SourceFile> files;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) {
      Diagnostic d;
      d.file = path;
      d.rule = "Io";
      d.message = "cannot read file";
      throw ParseError({d});
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    files.push_back({path, ss.str()});
  }
  return parse_sources(files);
}

}  // namespace scif
