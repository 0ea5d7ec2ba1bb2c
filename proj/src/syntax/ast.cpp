#include "scif/ast.hpp"

#include <atomic>
#include <stdexcept>

namespace scif {

std::string to_string(const Pos& p) {
  return std::to_string(p.line) + ":" + std::to_string(p.col);
}

namespace ast {

int next_node_id() {
  static std::atomic<int> counter{0};
  return ++counter;
}

ExprPtr make(Expr e) {
  if (e.id == 0) e.id = next_node_id();
  return std::make_shared<const Expr>(std::move(e));
}

ExprPtr make_val(Value v) {
  Expr e;
  e.kind = Expr::Kind::Val;
  e.pos = v.pos;
  e.vals.push_back(std::move(v));
  return make(std::move(e));
}

ExprPtr make_let(std::string binder, ExprPtr first, ExprPtr rest, Pos pos) {
  Expr e;
  e.kind = Expr::Kind::Let;
  e.pos = pos;
  e.binder = std::move(binder);
  e.kids = {std::move(first), std::move(rest)};
  return make(std::move(e));
}

const MethodDecl* ContractDecl::find_method(const std::string& m) const {
  for (const auto& md : methods)
    if (md.sig.name == m) return &md;
  return nullptr;
}

const ContractDecl& ContractTable::at(const std::string& c) const {
  auto it = contracts.find(c);
  if (it == contracts.end()) throw std::out_of_range("unknown contract " + c);
  return it->second;
}

std::string base_name(BaseKind b) {
  switch (b) {
    case BaseKind::Unit: return "unit";
    case BaseKind::Bool: return "bool";
    case BaseKind::Int: return "uint";
    case BaseKind::Address: return "address";
    case BaseKind::Ref: return "ref";
    case BaseKind::Contract: return "contract";
    case BaseKind::Exception: return "exception";
    case BaseKind::Mapping: return "mapping";
    case BaseKind::Failure: return "failure";
    case BaseKind::Never: return "never";
  }
  return "?";
}

}  // namespace ast
}  // namespace scif
