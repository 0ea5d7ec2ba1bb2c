#include <functional>
#include <stdexcept>

#include "scif/harness.hpp"

namespace scif::harness {

using namespace ast;

namespace {

using Rewrite = std::function<ExprPtr(const ExprPtr&)>;

// Post-order rewrite: children first, then `f` may replace the node.
ExprPtr rewrite(const ExprPtr& e, const Rewrite& f) {
  Expr copy = *e;
  bool changed = false;
  for (auto& k : copy.kids) {
    ExprPtr r = rewrite(k, f);
    changed |= r != k;
    k = r;
  }
  for (auto& h : copy.handlers) {
    ExprPtr r = rewrite(h.body, f);
    changed |= r != h.body;
    h.body = r;
  }
  ExprPtr node = changed ? make(std::move(copy)) : e;
  ExprPtr out = f(node);
  return out ? out : node;
}

void rewrite_bodies(ContractDecl& c, const Rewrite& f) {
  for (auto& m : c.methods)
    if (m.body) m.body = rewrite(m.body, f);
}

Type relabel(Type t, const Label& l) {
  if (!t.label_explicit) t.label = l;
  if (t.elem) t.elem = std::make_shared<const Type>(relabel(*t.elem, l));
  return t;
}

struct Stmt {
  std::string binder;
  ExprPtr expr;
  Pos pos;
};

std::pair<std::vector<Stmt>, ExprPtr> flatten(const ExprPtr& e) {
  std::vector<Stmt> out;
  ExprPtr cur = e;
  while (cur->kind == Expr::Kind::Let) {
    out.push_back({cur->binder, cur->kids[0], cur->pos});
    cur = cur->kids[1];
  }
  return {out, cur};
}

ExprPtr rebuild(const std::vector<Stmt>& stmts, ExprPtr tail) {
  for (auto it = stmts.rbegin(); it != stmts.rend(); ++it)
    tail = make_let(it->binder, it->expr, tail, it->pos);
  return tail;
}

bool writes(const Expr& e, const std::string& field) {
  return (e.kind == Expr::Kind::FieldWrite || e.kind == Expr::Kind::MapWrite) &&
         e.name == field;
}

bool is_external(const Expr& e) {
  return e.kind == Expr::Kind::Call || e.kind == Expr::Kind::Send;
}

// Moves the write to `field`, with the temporaries computing its operands,
// behind the next external call of the same statement sequence.
ExprPtr late_update(const ExprPtr& body, const std::string& field, bool& applied) {
  auto [stmts, tail] = flatten(body);
  for (std::size_t i = 0; i < stmts.size(); ++i) {
    if (!writes(*stmts[i].expr, field)) continue;
    std::size_t first = i;
    while (first > 0 && stmts[first - 1].binder.rfind("$t", 0) == 0) --first;
    std::vector<Stmt> moved(stmts.begin() + static_cast<long>(first),
                            stmts.begin() + static_cast<long>(i) + 1);
    std::vector<Stmt> rest(stmts.begin(), stmts.begin() + static_cast<long>(first));
    std::size_t j = i + 1;
    for (; j < stmts.size(); ++j) {
      rest.push_back(stmts[j]);
      if (is_external(*stmts[j].expr)) break;
    }
    if (j < stmts.size()) {
      rest.insert(rest.end(), moved.begin(), moved.end());
      rest.insert(rest.end(), stmts.begin() + static_cast<long>(j) + 1, stmts.end());
      applied = true;
      return rebuild(rest, tail);
    }
    if (is_external(*tail)) {
      // The call is the tail: it becomes a statement and the write the tail.
      rest.push_back({"_", tail, tail->pos});
      Stmt last = moved.back();
      moved.pop_back();
      rest.insert(rest.end(), moved.begin(), moved.end());
      applied = true;
      return rebuild(rest, last.expr);
    }
    return body;
  }
  return body;
}

}  // namespace

ContractDecl mutate_corpus(const ContractDecl& c, const std::string& mutation) {
  ContractDecl out = c;
  auto colon = mutation.find(':');
  std::string kind = mutation.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : mutation.substr(colon + 1);

  if (kind == "identity") return out;

  if (kind == "remove-lock") {
    bool applied = false;
    rewrite_bodies(out, [&](const ExprPtr& e) -> ExprPtr {
      if (e->kind != Expr::Kind::Lock) return nullptr;
      applied = true;
      return e->kids[0];
    });
    if (!applied) throw std::invalid_argument(c.name + " has no lock to remove");
    return out;
  }

  if (kind == "make-public") {
    for (auto& m : out.methods) {
      if (m.sig.name != arg) continue;
      MethodSig& s = m.sig;
      s.is_public = true;
      if (!s.pc_ex_explicit) {
        s.pc_ex = Label::atom("sender");
        s.pc_in = Label::this_label();
        s.lock = Label::this_label();
      }
      s.ret = relabel(s.ret, s.pc_ex);
      for (auto& p : s.params) p.type = relabel(p.type, s.pc_ex);
      for (auto& t : s.throws)
        if (!t.label_explicit) t.label = s.pc_ex;
      return out;
    }
    throw std::invalid_argument("no method " + arg + " in " + c.name);
  }

  if (kind == "late-update") {
    bool applied = false;
    for (auto& m : out.methods)
      if (m.body && !applied) m.body = late_update(m.body, arg, applied);
    if (!applied) throw std::invalid_argument("no update of " + arg + " precedes a call in " + c.name);
    return out;
  }

  if (kind == "swallow-failure") {
    bool applied = false;
    rewrite_bodies(out, [&](const ExprPtr& e) -> ExprPtr {
      if (e->kind != Expr::Kind::Send) return nullptr;
      applied = true;
      Expr a;
      a.kind = Expr::Kind::Atomic;
      a.pos = e->pos;
      a.binder = "f";
      a.kids = {e, make_val(Value::unit(e->pos))};
      return make(std::move(a));
    });
    if (!applied) throw std::invalid_argument(c.name + " sends nothing");
    return out;
  }

  throw std::invalid_argument("unknown mutation " + mutation);
}

ContractTable mutate_table(const ContractTable& ct, const std::string& contract,
                           const std::string& mutation) {
  ContractTable out = ct;
  out.contracts.at(contract) = mutate_corpus(ct.at(contract), mutation);
  return out;
}

}  // namespace scif::harness
