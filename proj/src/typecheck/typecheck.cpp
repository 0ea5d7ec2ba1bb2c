#include "scif/typecheck.hpp"

#include <set>

#include "scif/syntax.hpp"

namespace scif::tc {

using namespace ast;

namespace {

// Stands for a callee label atom that the call site cannot name (for example
// a non-final argument). Nothing flows to it.
const Principal kUnknown{"%unknown"};

Type resolve_type(const Type& t) {
  Type out = t;
  out.label = resolve(t.label);
  if (t.elem) out.elem = std::make_shared<const Type>(resolve_type(*t.elem));
  return out;
}

Type substitute_type(const Type& t, const std::map<Principal, Label>& rho) {
  Type out = t;
  out.label = substitute(t.label, rho);
  if (t.elem) {
    auto inner = rho;
    // A mapping's key variable is bound by the mapping type itself.
    if (t.key_var) inner.erase(Principal{*t.key_var});
    out.elem = std::make_shared<const Type>(substitute_type(*t.elem, inner));
  }
  return out;
}

std::optional<Label> sjoin(const std::optional<Label>& a, const std::optional<Label>& b) {
  if (!a) return b;
  if (!b) return a;
  return join(*a, *b);
}

Label unknown_to_any(const Label& l) {
  return normalize(substitute(l, {{kUnknown, Label::any()}}));
}

PathMap single(const CheckContext& ctx) {
  return {{PathKey::normal(), {ctx.pc, ctx.lock}}};
}

PathMap with_failure(const CheckContext& ctx) {
  return {{PathKey::normal(), {ctx.pc, ctx.lock}},
          {PathKey::failure(), {ctx.pc, ctx.lock}}};
}

bool is_addressish(const Type& t) {
  return t.base == BaseKind::Address || t.base == BaseKind::Contract;
}

VType never() { return VType::constant(BaseKind::Never); }

}  // namespace

Label resolve(const Label& l) { return resolve_this(l, kSelf); }

std::string to_string(const PathKey& k) {
  switch (k.kind) {
    case PathKey::Kind::Normal: return "n";
    case PathKey::Kind::Failure: return "fl";
    case PathKey::Kind::Exception: return k.exception;
  }
  return "?";
}

std::string to_string(const VType& t) {
  Type shape = t.shape;
  std::string s = print_type(shape.with_label(Label::any()));
  s = s.substr(0, s.rfind('{'));
  return s + "{" + (t.label ? to_string(*t.label) : std::string("const")) + "}";
}

PathMap psi_join(const PathMap& a, const PathMap& b) {
  PathMap out = a;
  for (const auto& [k, v] : b) {
    auto it = out.find(k);
    if (it == out.end()) {
      out.emplace(k, v);
    } else {
      it->second.pc = join(it->second.pc, v.pc);
      it->second.lock = join(it->second.lock, v.lock);
    }
  }
  return out;
}

bool check_protection(const TrustEnv& t, const Label& l, const Type& tau) {
  return flows_to(l, tau.label, t);
}

namespace {

bool base_sub(const ContractTable& ct, const Type& sub, const Type& super) {
  if (sub.base == BaseKind::Never) return true;
  if (sub.base == BaseKind::Contract && super.base == BaseKind::Address) return true;
  if (sub.base != super.base) return false;
  switch (sub.base) {
    case BaseKind::Contract:
      return is_subclass(ct, sub.name, super.name);
    case BaseKind::Exception:
      return sub.name == super.name;
    case BaseKind::Ref:
      return base_sub(ct, *sub.elem, *super.elem) && base_sub(ct, *super.elem, *sub.elem) &&
             equivalent(sub.elem->label, super.elem->label);
    case BaseKind::Mapping:
      return false;
    default:
      return true;
  }
}

}  // namespace

// Variance: shapes by subclassing, labels by flows-to.
bool check_subtype(const ContractTable& ct, const TrustEnv& t, const VType& sub,
                   const VType& super) {
  if (!base_sub(ct, sub.shape, super.shape)) return false;
  if (!sub.label) return true;
  if (!super.label) return false;
  return flows_to(*sub.label, *super.label, t);
}

void Checker::error(const CheckContext& ctx, Pos pos, const std::string& rule,
                    std::string message, std::vector<Label> labels) {
  (void)ctx;
  Diagnostic d;
  d.file = file_;
  d.pos = pos;
  d.rule = rule;
  d.message = std::move(message);
  for (const auto& l : labels) d.labels.push_back(to_string(l));
  diags_.push_back(std::move(d));
}

bool Checker::flows(const CheckContext& ctx, const Label& from, const Label& to) const {
  return flows_to(from, to, ctx.trust);
}

bool Checker::flows(const CheckContext& ctx, const std::optional<Label>& from,
                    const Label& to) const {
  return !from || flows_to(*from, to, ctx.trust);
}

std::optional<Principal> Checker::atom_of(const CheckContext& ctx, const Value& v) const {
  switch (v.kind) {
    case Value::Kind::This: return kSelf;
    case Value::Kind::Sender: return kSender;
    case Value::Kind::Addr: return Principal{v.name};
    case Value::Kind::Var: {
      auto it = ctx.gamma.find(v.name);
      if (it != ctx.gamma.end() && it->second.atomable) return Principal{v.name};
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

bool Checker::base_compatible(const Type& sub, const Type& super) const {
  return base_sub(ct_, sub, super);
}

std::optional<VType> Checker::join_types(const VType& a, const VType& b) const {
  if (a.shape.base == BaseKind::Never) return b;
  if (b.shape.base == BaseKind::Never) return a;
  VType out;
  if (base_sub(ct_, a.shape, b.shape)) {
    out.shape = b.shape;
  } else if (base_sub(ct_, b.shape, a.shape)) {
    out.shape = a.shape;
  } else {
    return std::nullopt;
  }
  out.label = sjoin(a.label, b.label);
  return out;
}

CheckContext Checker::method_context(const std::string& contract,
                                     const MethodSig& sig) const {
  CheckContext ctx;
  ctx.ct = &ct_;
  ctx.self = contract;
  ctx.pc = resolve(sig.pc_in);
  ctx.lock = resolve(sig.lock);
  for (const auto& p : sig.params) {
    Type t = resolve_type(p.type);
    bool atomable = p.is_final && is_addressish(t);
    ctx.gamma[p.name] = {VType::of(t), atomable};
  }
  for (auto td : sig.throws) {
    td.label = resolve(td.label);
    ctx.declared_throws.push_back(td);
  }
  return ctx;
}

// Value typing: Var, Unit, True/False, Addr, AtkCast and exception values.
VType Checker::check_value(const CheckContext& ctx, const Value& v) {
  switch (v.kind) {
    case Value::Kind::Var: {
      auto it = ctx.gamma.find(v.name);
      if (it == ctx.gamma.end()) {
        error(ctx, v.pos, "Var", "unbound variable " + v.name);
        return never();
      }
      return it->second.type;
    }
    case Value::Kind::Unit: return VType::constant(BaseKind::Unit);
    case Value::Kind::Bool: return VType::constant(BaseKind::Bool);
    case Value::Kind::Int: return VType::constant(BaseKind::Int);
    case Value::Kind::Addr: {
      auto it = ctx.heap.find(v.name);
      if (it != ctx.heap.end()) return VType::of(it->second);
      return VType::constant(BaseKind::Address);
    }
    case Value::Kind::This:
      return VType::of(Type::contract(ctx.self, Label::atom(kSelf)));
    case Value::Kind::Sender:
      return VType::of(Type::simple(BaseKind::Address, Label::atom(kSelf)));
    case Value::Kind::CallValue:
      return VType::of(Type::simple(BaseKind::Int, Label::atom(kSender)));
    case Value::Kind::Exn: {
      auto it = ct_.exceptions.find(v.name);
      VType out = VType::constant(BaseKind::Exception);
      out.shape.name = v.name;
      if (it == ct_.exceptions.end()) {
        error(ctx, v.pos, "ExnValue", "unknown exception " + v.name);
        return out;
      }
      const auto& fields = it->second.fields;
      if (fields.size() != v.args.size()) {
        error(ctx, v.pos, "ExnValue",
              "exception " + v.name + " expects " + std::to_string(fields.size()) +
                  " argument(s)");
        return out;
      }
      for (std::size_t i = 0; i < fields.size(); ++i) {
        VType a = check_value(ctx, v.args[i]);
        VType f = VType::of(resolve_type(fields[i].type));
        if (!check_subtype(ct_, ctx.trust, a, f))
          error(ctx, v.args[i].pos, "ExnValue",
                "argument " + std::to_string(i + 1) + " of " + v.name + " has type " +
                    to_string(a) + ", expected " + to_string(f));
        out.label = sjoin(out.label, a.label);
      }
      return out;
    }
    // AttackCast: attacker-only; reported, then typed as a plain cast.
    case Value::Kind::AtkCast: {
      error(ctx, v.pos, "AttackCast", "atk_cast is only available to attacker code");
      VType inner = check_value(ctx, v.args[0]);
      VType out = VType::of(Type::contract(v.name, inner.label_or_any()));
      out.label = inner.label;
      return out;
    }
  }
  return never();
}

ExprResult Checker::check_expr(const CheckContext& ctx, const Expr& e) {
  if (record_) nodes_[e.id] = ctx;
  switch (e.kind) {
    // Val: a value terminates normally at the current pc and lock.
    case Expr::Kind::Val:
      return {check_value(ctx, e.vals[0]), single(ctx)};

    // Throw: only the exception path.
    case Expr::Kind::Throw: {
      VType v = check_value(ctx, e.vals[0]);
      if (v.shape.base != BaseKind::Exception) {
        error(ctx, e.pos, "Throw", "only exception values can be thrown");
        return {never(), {}};
      }
      return {never(), {{PathKey::exn(v.shape.name), {ctx.pc, ctx.lock}}}};
    }

    // Fail: only the failure path.
    case Expr::Kind::Fail:
      check_value(ctx, e.vals[0]);
      return {never(), {{PathKey::failure(), {ctx.pc, ctx.lock}}}};

    // Ref: a fresh cell is labeled by the pc that allocates it.
    case Expr::Kind::Ref: {
      VType v = check_value(ctx, e.vals[0]);
      Type cell = resolve_type(e.type);
      if (!check_subtype(ct_, ctx.trust, v, VType::of(cell)))
        error(ctx, e.pos, "Ref", "initial value " + to_string(v) + " does not fit " +
                                     print_type(cell));
      Type r;
      r.base = BaseKind::Ref;
      r.elem = std::make_shared<const Type>(cell);
      r.label = ctx.pc;
      return {VType::of(r), single(ctx)};
    }

    // Deref: reads carry both the cell and the reference labels.
    case Expr::Kind::Deref: {
      VType r = check_value(ctx, e.vals[0]);
      if (r.shape.base != BaseKind::Ref) {
        error(ctx, e.pos, "Deref", "deref of a non-reference " + to_string(r));
        return {never(), single(ctx)};
      }
      VType out = VType::of(*r.shape.elem);
      out.label = sjoin(out.label, r.label);
      return {out, single(ctx)};
    }

    // Assign: pc and the stored value must both be trusted by the cell.
    case Expr::Kind::AssignRef: {
      VType r = check_value(ctx, e.vals[0]);
      VType v = check_value(ctx, e.vals[1]);
      if (r.shape.base != BaseKind::Ref) {
        error(ctx, e.pos, "Assign", "assignment to a non-reference " + to_string(r));
        return {VType::constant(BaseKind::Unit), single(ctx)};
      }
      const Type& cell = *r.shape.elem;
      if (!base_compatible(v.shape, cell))
        error(ctx, e.pos, "Assign", "stored value " + to_string(v) + " does not fit " +
                                        print_type(cell));
      Label influence = r.label ? join(ctx.pc, *r.label) : ctx.pc;
      if (!flows(ctx, sjoin(influence, v.label), cell.label))
        error(ctx, e.pos, "Assign",
              "write influenced by " + to_string(*sjoin(influence, v.label)) +
                  " into a cell labeled " + to_string(cell.label),
              {ctx.pc, cell.label});
      return {VType::constant(BaseKind::Unit), single(ctx)};
    }

    // Field: reads carry the field's label.
    case Expr::Kind::FieldRead: {
      const FieldDecl* f = find_field(ct_, ctx.self, e.name);
      if (!f) {
        error(ctx, e.pos, "Field", "no field " + e.name + " in " + ctx.self);
        return {never(), single(ctx)};
      }
      if (f->type.base == BaseKind::Mapping) {
        error(ctx, e.pos, "Field", "mapping field " + e.name + " must be indexed");
        return {never(), single(ctx)};
      }
      return {VType::of(resolve_type(f->type)), single(ctx)};
    }

    case Expr::Kind::FieldWrite: {
      VType v = check_value(ctx, e.vals[0]);
      const FieldDecl* f = find_field(ct_, ctx.self, e.name);
      if (!f) {
        error(ctx, e.pos, "Field", "no field " + e.name + " in " + ctx.self);
        return {VType::constant(BaseKind::Unit), single(ctx)};
      }
      Type ft = resolve_type(f->type);
      if (ft.base == BaseKind::Mapping || !base_compatible(v.shape, ft))
        error(ctx, e.pos, "Assign",
              "value " + to_string(v) + " does not fit field " + e.name + " : " +
                  print_type(ft));
      std::optional<Label> influence = sjoin(ctx.pc, v.label);
      if (!flows(ctx, influence, ft.label))
        error(ctx, e.pos, "Assign",
              "write to " + e.name + " influenced by " + to_string(*influence) +
                  " but the field is labeled " + to_string(ft.label),
              {*influence, ft.label});
      return {VType::constant(BaseKind::Unit), single(ctx)};
    }

    case Expr::Kind::MapRead:
    case Expr::Kind::MapWrite:
      return check_map_access(ctx, e);

    case Expr::Kind::New:
      return check_new(ctx, e);

    // Cast: dynamic check, may fail.
    case Expr::Kind::Cast: {
      VType v = check_value(ctx, e.vals[0]);
      if (!is_addressish(v.shape) && v.shape.base != BaseKind::Never)
        error(ctx, e.pos, "Cast", "only addresses and contracts can be cast");
      if (!ct_.has(e.name)) error(ctx, e.pos, "Cast", "unknown contract " + e.name);
      VType out = VType::of(Type::contract(e.name, v.label_or_any()));
      out.label = v.label;
      return {out, with_failure(ctx)};
    }

    case Expr::Kind::Call:
      return check_call(ctx, e);

    case Expr::Kind::Let:
      return check_let(ctx, e);

    case Expr::Kind::If:
    case Expr::Kind::IfTrust:
      return check_if(ctx, e);

    // Endorse: code may only vouch for data up to its own integrity.
    case Expr::Kind::Endorse: {
      VType v = check_value(ctx, e.vals[0]);
      Label from = resolve(e.from);
      Label to = resolve(e.to);
      if (!flows(ctx, v.label, from))
        error(ctx, e.pos, "Endorse",
              "value labeled " + to_string(v.label_or_any()) + " is not at " + to_string(from),
              {v.label_or_any(), from});
      if (!flows(ctx, ctx.pc, to))
        error(ctx, e.pos, "Endorse",
              "pc " + to_string(ctx.pc) + " cannot endorse to " + to_string(to),
              {ctx.pc, to});
      VType out = v;
      out.label = to;
      return {out, single(ctx)};
    }

    // Lock: the body runs while the dynamic lock is held.
    case Expr::Kind::Lock: {
      CheckContext inner = ctx;
      Label l = resolve(e.from);
      inner.held = ctx.held ? meet(*ctx.held, l) : normalize(l);
      return check_expr(inner, *e.kids[0]);
    }

    case Expr::Kind::Try:
      return check_try(ctx, e);

    case Expr::Kind::Atomic:
      return check_atomic(ctx, e);

    case Expr::Kind::BinOp: {
      VType a = check_value(ctx, e.vals[0]);
      VType b = check_value(ctx, e.vals[1]);
      const std::string& op = e.name;
      auto base = [](const VType& t) { return t.shape.base; };
      auto is = [&](const VType& t, BaseKind k) {
        return base(t) == k || base(t) == BaseKind::Never;
      };
      BaseKind result = BaseKind::Bool;
      bool ok = true;
      if (op == "+" || op == "-" || op == "*" || op == "/" || op == "%") {
        ok = is(a, BaseKind::Int) && is(b, BaseKind::Int);
        result = BaseKind::Int;
      } else if (op == "<" || op == "<=" || op == ">" || op == ">=") {
        ok = is(a, BaseKind::Int) && is(b, BaseKind::Int);
      } else if (op == "&&" || op == "||") {
        ok = is(a, BaseKind::Bool) && is(b, BaseKind::Bool);
      } else if (op == "==" || op == "!=") {
        ok = (is_addressish(a.shape) && is_addressish(b.shape)) || base(a) == base(b) ||
             base(a) == BaseKind::Never || base(b) == BaseKind::Never;
        ok = ok && base(a) != BaseKind::Mapping && base(a) != BaseKind::Ref;
      } else {
        ok = false;
      }
      if (!ok)
        error(ctx, e.pos, "BinOp",
              "operator " + op + " does not apply to " + to_string(a) + " and " + to_string(b));
      VType out = VType::constant(result);
      out.label = sjoin(a.label, b.label);
      bool may_fail = op == "/" || op == "%";
      return {out, may_fail ? with_failure(ctx) : single(ctx)};
    }

    case Expr::Kind::UnOp: {
      VType a = check_value(ctx, e.vals[0]);
      BaseKind want = e.name == "!" ? BaseKind::Bool : BaseKind::Int;
      if (a.shape.base != want && a.shape.base != BaseKind::Never)
        error(ctx, e.pos, "UnOp", "operator " + e.name + " does not apply to " + to_string(a));
      VType out = VType::constant(want);
      out.label = a.label;
      return {out, single(ctx)};
    }

    case Expr::Kind::Send:
      return check_send(ctx, e);

    // IgnoreLocks: attacker-only, so checked code never contains it.
    case Expr::Kind::IgnoreLocks:
      error(ctx, e.pos, "IgnoreLocks", "ignore_locks is only available to attacker code");
      return check_expr(ctx, *e.kids[0]);
  }
  return {never(), {}};
}

// Let: the continuation keeps the current pc only if e1 maintained the input
// lock wherever pc could act; otherwise its pc is weakened by e1's lock.
ExprResult Checker::check_let(const CheckContext& ctx, const Expr& e) {
  ExprResult r1 = check_expr(ctx, *e.kids[0]);
  CheckContext next = ctx;
  auto n = r1.psi.find(PathKey::normal());
  bool reachable = n != r1.psi.end();
  if (reachable) {
    const Label& l1 = n->second.lock;
    const Label& pc1 = n->second.pc;
    next.pc = flows(ctx, l1, join(ctx.lock, pc1)) ? pc1 : join(pc1, l1);
    next.lock = join(l1, ctx.lock);
  }
  if (e.binder != "_") {
    bool atomable = is_addressish(r1.type.shape);
    next.gamma[e.binder] = {r1.type, atomable};
  }
  ExprResult r2 = check_expr(next, *e.kids[1]);
  if (!reachable) return {never(), r1.psi};
  PathMap rest = r1.psi;
  rest.erase(PathKey::normal());
  return {r2.type, psi_join(rest, r2.psi)};
}

// If / IfTrust: branches run at pc joined with the condition's label.
ExprResult Checker::check_if(const CheckContext& ctx, const Expr& e) {
  CheckContext branch = ctx;
  CheckContext then_ctx;
  if (e.kind == Expr::Kind::If) {
    VType c = check_value(ctx, e.vals[0]);
    if (c.shape.base != BaseKind::Bool && c.shape.base != BaseKind::Never)
      error(ctx, e.pos, "If", "condition has type " + to_string(c));
    if (c.label) branch.pc = join(ctx.pc, *c.label);
    then_ctx = branch;
  } else {
    // IfTrust: the then-branch may assume the checked flow.
    VType a = check_value(ctx, e.vals[0]);
    VType b = check_value(ctx, e.vals[1]);
    if (!is_addressish(a.shape) || !is_addressish(b.shape))
      error(ctx, e.pos, "IfTrust", "trust checks compare addresses");
    branch.pc = join(ctx.pc, sjoin(a.label, b.label).value_or(ctx.pc));
    then_ctx = branch;
    auto pa = atom_of(ctx, e.vals[0]);
    auto pb = atom_of(ctx, e.vals[1]);
    if (pa && pb) then_ctx.trust.add(*pa, *pb);
  }
  ExprResult r1 = check_expr(then_ctx, *e.kids[0]);
  ExprResult r2 = check_expr(branch, *e.kids[1]);
  auto joined = join_types(r1.type, r2.type);
  if (!joined) {
    error(ctx, e.pos, e.kind == Expr::Kind::If ? "If" : "IfTrust",
          "branches have incompatible types " + to_string(r1.type) + " and " +
              to_string(r2.type));
    joined = r1.type;
  }
  if (joined->label && branch.pc != ctx.pc) joined->label = join(*joined->label, branch.pc);
  if (!joined->label && branch.pc != ctx.pc && joined->shape.base != BaseKind::Never)
    joined->label = branch.pc;
  PathMap psi = psi_join(r1.psi, r2.psi);
  // SinglePath: without exceptional paths, normal termination reveals
  // nothing beyond the incoming pc.
  bool single_path = true;
  for (const auto& [k, v] : psi)
    if (k.kind == PathKey::Kind::Exception) single_path = false;
  auto n = psi.find(PathKey::normal());
  if (single_path && n != psi.end()) n->second.pc = ctx.pc;
  return {*joined, psi};
}

ExprResult Checker::check_map_access(const CheckContext& ctx, const Expr& e) {
  bool write = e.kind == Expr::Kind::MapWrite;
  const FieldDecl* f = find_field(ct_, ctx.self, e.name);
  VType unit = VType::constant(BaseKind::Unit);
  if (!f) {
    error(ctx, e.pos, "Field", "no field " + e.name + " in " + ctx.self);
    return {write ? unit : never(), single(ctx)};
  }
  Type cur = resolve_type(f->type);
  std::optional<Label> key_labels;
  for (const auto& k : e.keys) {
    if (cur.base != BaseKind::Mapping) {
      error(ctx, k.pos, "MapIndex", "too many indices for " + e.name);
      return {write ? unit : never(), single(ctx)};
    }
    VType kt = check_value(ctx, k);
    bool key_ok = cur.key_base == BaseKind::Int
                      ? kt.shape.base == BaseKind::Int
                      : is_addressish(kt.shape);
    if (!key_ok && kt.shape.base != BaseKind::Never)
      error(ctx, k.pos, "MapIndex", "key " + to_string(kt) + " has the wrong type for " + e.name);
    Type elem = *cur.elem;
    if (cur.key_var) {
      // Dependent mapping: the entry label names the key itself.
      auto atom = atom_of(ctx, k);
      if (!atom) {
        error(ctx, k.pos, "MapIndex",
              "key of dependent mapping " + e.name + " must be a final address");
        elem = substitute_type(elem, {{Principal{*cur.key_var}, Label::atom(kUnknown)}});
        key_labels = sjoin(key_labels, kt.label);
      } else {
        elem = substitute_type(elem, {{Principal{*cur.key_var}, Label::atom(*atom)}});
      }
    } else {
      key_labels = sjoin(key_labels, kt.label);
    }
    cur = elem;
  }
  if (cur.base == BaseKind::Mapping) {
    error(ctx, e.pos, "MapIndex", "mapping " + e.name + " needs more indices");
    return {write ? unit : never(), single(ctx)};
  }
  if (!write) {
    VType out = VType::of(cur);
    out.label = normalize(unknown_to_any(sjoin(cur.label, key_labels).value()));
    return {out, single(ctx)};
  }
  VType v = check_value(ctx, e.vals[0]);
  if (!base_compatible(v.shape, cur))
    error(ctx, e.pos, "Assign",
          "value " + to_string(v) + " does not fit entry of " + e.name + " : " + print_type(cur));
  Label influence = *sjoin(sjoin(ctx.pc, v.label), key_labels);
  if (!flows(ctx, influence, cur.label))
    error(ctx, e.pos, "Assign",
          "write to " + e.name + " influenced by " + to_string(influence) +
              " but the entry is labeled " + to_string(cur.label),
          {influence, cur.label});
  return {unit, single(ctx)};
}

// New: one initializer per field, each written at the creating pc.
ExprResult Checker::check_new(const CheckContext& ctx, const Expr& e) {
  VType out = VType::of(Type::contract(e.name, ctx.pc));
  if (!ct_.has(e.name)) {
    error(ctx, e.pos, "New", "unknown contract " + e.name);
    return {out, single(ctx)};
  }
  const ContractDecl& c = ct_.at(e.name);
  if (c.is_interface) error(ctx, e.pos, "New", "cannot instantiate interface " + e.name);
  auto fields = lookup_fields(ct_, e.name);
  if (fields.size() != e.vals.size()) {
    error(ctx, e.pos, "New",
          e.name + " has " + std::to_string(fields.size()) + " field(s), got " +
              std::to_string(e.vals.size()) + " argument(s)");
    return {out, single(ctx)};
  }
  // The creator is trusted by the new contract, so the new contract's `this`
  // labels are checked against the creator's.
  for (std::size_t i = 0; i < fields.size(); ++i) {
    VType a = check_value(ctx, e.vals[i]);
    Type ft = resolve_type(fields[i].type);
    if (ft.base == BaseKind::Mapping) {
      error(ctx, e.vals[i].pos, "New", "mapping field " + fields[i].name + " cannot be initialized");
      continue;
    }
    VType want = VType::of(ft);
    if (!check_subtype(ct_, ctx.trust, a, want) || !flows(ctx, ctx.pc, ft.label))
      error(ctx, e.vals[i].pos, "New",
            "initializer for " + fields[i].name + " has type " + to_string(a) + ", expected " +
                to_string(want));
  }
  return {out, single(ctx)};
}

// Call: static CDA freedom (pc => pc_ex), the static lock premise, and
// attenuation of every result by the receiver's label.
ExprResult Checker::check_call(const CheckContext& ctx, const Expr& e) {
  VType recv = check_value(ctx, e.vals[0]);
  std::vector<VType> args;
  for (std::size_t i = 1; i < e.vals.size(); ++i) args.push_back(check_value(ctx, e.vals[i]));
  VType unknown_result = never();
  if (recv.shape.base != BaseKind::Contract) {
    if (recv.shape.base != BaseKind::Never)
      error(ctx, e.pos, "Call", "receiver has non-contract type " + to_string(recv));
    return {unknown_result, with_failure(ctx)};
  }
  if (!ct_.has(recv.shape.name) || !has_method(ct_, recv.shape.name, e.name)) {
    error(ctx, e.pos, "Call", "no method " + e.name + " in " + recv.shape.name);
    return {unknown_result, with_failure(ctx)};
  }
  const MethodSig& sig = lookup_method(ct_, recv.shape.name, e.name).method->sig;
  if (sig.params.size() != args.size()) {
    error(ctx, e.pos, "Call",
          e.name + " expects " + std::to_string(sig.params.size()) + " argument(s)");
    return {unknown_result, with_failure(ctx)};
  }

  std::map<Principal, Label> rho;
  auto recv_atom = atom_of(ctx, e.vals[0]);
  rho[kSelf] = Label::atom(recv_atom ? *recv_atom : kUnknown);
  rho[kSender] = Label::atom(kSelf);
  for (std::size_t i = 0; i < sig.params.size(); ++i) {
    auto a = atom_of(ctx, e.vals[i + 1]);
    rho[Principal{sig.params[i].name}] = Label::atom(a ? *a : kUnknown);
  }
  auto req = [&](const Label& l) { return normalize(substitute(resolve(l), rho)); };
  auto res = [&](const Label& l) { return unknown_to_any(substitute(resolve(l), rho)); };
  Label recv_label = recv.label_or_any();

  Label pc_ex = req(sig.pc_ex);
  if (!flows(ctx, ctx.pc, pc_ex))
    error(ctx, e.pos, "Call",
          "pc " + to_string(ctx.pc) + " does not flow to " + recv.shape.name + "." + e.name +
              "'s external pc " + to_string(pc_ex),
          {ctx.pc, pc_ex});
  Label pc_in = req(sig.pc_in);
  if (!flows(ctx, ctx.pc, join(pc_in, ctx.lock)))
    error(ctx, e.pos, "Call",
          "call to " + e.name + " auto-endorses to " + to_string(pc_in) +
              " without holding lock " + to_string(ctx.lock),
          {ctx.pc, pc_in, ctx.lock});
  for (std::size_t i = 0; i < args.size(); ++i) {
    Type pt = substitute_type(resolve_type(sig.params[i].type), rho);
    pt.label = normalize(pt.label);
    if (!base_compatible(args[i].shape, pt))
      error(ctx, e.vals[i + 1].pos, "Call",
            "argument " + std::to_string(i + 1) + " of " + e.name + " has type " +
                to_string(args[i]) + ", expected " + print_type(pt));
    else if (!flows(ctx, args[i].label, pt.label))
      error(ctx, e.vals[i + 1].pos, "Call",
            "argument " + std::to_string(i + 1) + " of " + e.name + " labeled " +
                to_string(args[i].label_or_any()) + " does not flow to " + to_string(pt.label),
            {args[i].label_or_any(), pt.label});
  }

  Type ret = substitute_type(resolve_type(sig.ret), rho);
  ret.label = join(unknown_to_any(ret.label), recv_label);
  Label lock_out = join(res(sig.lock), recv_label);
  if (ctx.held) lock_out = meet(lock_out, *ctx.held);

  PathMap psi;
  Label pc_normal = ctx.pc;
  Label pc_all = ctx.pc;
  for (const auto& t : sig.throws) {
    Label ex_pc = join(join(ctx.pc, res(t.label)), recv_label);
    psi[PathKey::exn(t.exception)] = {ex_pc, lock_out};
    pc_normal = join(pc_normal, ex_pc);
    pc_all = join(pc_all, ex_pc);
  }
  psi[PathKey::normal()] = {pc_normal, lock_out};
  psi[PathKey::failure()] = {pc_all, ctx.lock};
  return {VType::of(ret), psi};
}

// Send: pays from this contract's balance, then behaves like a call to the
// recipient's `receive{any}`.
ExprResult Checker::check_send(const CheckContext& ctx, const Expr& e) {
  VType to = check_value(ctx, e.vals[0]);
  VType amount = check_value(ctx, e.vals[1]);
  if (!is_addressish(to.shape) && to.shape.base != BaseKind::Never)
    error(ctx, e.pos, "Send", "recipient must be an address");
  if (amount.shape.base != BaseKind::Int && amount.shape.base != BaseKind::Never)
    error(ctx, e.pos, "Send", "amount must be a uint");
  Label self = Label::atom(kSelf);
  if (!flows(ctx, ctx.pc, self))
    error(ctx, e.pos, "Send", "pc " + to_string(ctx.pc) + " cannot spend this contract's balance",
          {ctx.pc, self});
  if (!flows(ctx, amount.label, self))
    error(ctx, e.pos, "Send",
          "amount labeled " + to_string(amount.label_or_any()) + " is not trusted by this contract",
          {amount.label_or_any(), self});
  Label lock_out = Label::any();
  if (ctx.held) lock_out = *ctx.held;
  PathMap psi;
  psi[PathKey::normal()] = {ctx.pc, lock_out};
  psi[PathKey::failure()] = {ctx.pc, ctx.lock};
  return {VType::constant(BaseKind::Unit), psi};
}

// TryCatch: handled paths are replaced by the handler's paths.
ExprResult Checker::check_try(const CheckContext& ctx, const Expr& e) {
  ExprResult body = check_expr(ctx, *e.kids[0]);
  PathMap out = body.psi;
  std::optional<VType> type = body.type;
  std::vector<PathMap> handler_paths;
  for (const auto& h : e.handlers) {
    auto decl = ct_.exceptions.find(h.exception);
    if (decl == ct_.exceptions.end()) {
      error(ctx, h.pos, "TryCatch", "unknown exception " + h.exception);
      continue;
    }
    if (!h.vars.empty() && h.vars.size() != decl->second.fields.size())
      error(ctx, h.pos, "TryCatch",
            "handler for " + h.exception + " binds " + std::to_string(h.vars.size()) +
                " of " + std::to_string(decl->second.fields.size()) + " field(s)");
    CheckContext hctx = ctx;
    auto path = body.psi.find(PathKey::exn(h.exception));
    if (path != body.psi.end()) {
      if (!flows(ctx, path->second.lock, ctx.lock))
        error(ctx, h.pos, "TryCatch",
              "exception path of " + h.exception + " does not maintain lock " +
                  to_string(ctx.lock),
              {path->second.lock, ctx.lock});
      hctx.pc = path->second.pc;
      out.erase(path->first);
    }
    for (std::size_t i = 0; i < h.vars.size() && i < decl->second.fields.size(); ++i) {
      VType ft = VType::of(resolve_type(decl->second.fields[i].type));
      ft.label = join(*ft.label, hctx.pc);
      hctx.gamma[h.vars[i]] = {ft, false};
    }
    ExprResult hr = check_expr(hctx, *h.body);
    handler_paths.push_back(hr.psi);
    auto joined = type ? join_types(*type, hr.type) : std::optional<VType>(hr.type);
    if (!joined) {
      error(ctx, h.pos, "TryCatch", "handler type " + to_string(hr.type) +
                                        " does not match " + to_string(*type));
    } else {
      type = joined;
    }
  }
  for (const auto& p : handler_paths) out = psi_join(out, p);
  return {type.value_or(never()), out};
}

// AtomicRescue: no exception may escape the body; the rescue runs at the
// failure path's integrity.
ExprResult Checker::check_atomic(const CheckContext& ctx, const Expr& e) {
  ExprResult body = check_expr(ctx, *e.kids[0]);
  for (const auto& [k, v] : body.psi) {
    if (k.kind == PathKey::Kind::Exception)
      error(ctx, e.pos, "AtomicRescue",
            "exception " + k.exception + " may escape the atomic block; catch it inside");
  }
  CheckContext rctx = ctx;
  PathMap out = body.psi;
  auto fl = body.psi.find(PathKey::failure());
  if (fl != body.psi.end()) {
    if (!flows(ctx, fl->second.lock, ctx.lock))
      error(ctx, e.pos, "AtomicRescue",
            "failure path does not maintain lock " + to_string(ctx.lock),
            {fl->second.lock, ctx.lock});
    rctx.pc = fl->second.pc;
    out.erase(PathKey::failure());
  }
  VType failure = VType::of(Type::simple(BaseKind::Failure, rctx.pc));
  rctx.gamma[e.binder] = {failure, false};
  ExprResult rescue = check_expr(rctx, *e.kids[1]);
  auto type = join_types(body.type, rescue.type);
  if (!type) {
    error(ctx, e.pos, "AtomicRescue", "rescue type " + to_string(rescue.type) +
                                          " does not match " + to_string(body.type));
    type = body.type;
  }
  return {*type, psi_join(out, rescue.psi)};
}

// MethodOk.
void Checker::check_method(const std::string& contract, const MethodDecl& m) {
  if (!m.body) return;
  const MethodSig& sig = m.sig;
  CheckContext ctx = method_context(contract, sig);
  for (const auto& t : sig.throws)
    if (!ct_.exceptions.count(t.exception))
      error(ctx, sig.pos, "MethodOk", "unknown exception " + t.exception + " in throws");
  for (const auto& p : sig.params)
    if (p.name == "this" || p.name == "sender")
      error(ctx, p.pos, "MethodOk", "parameter cannot be named " + p.name);
  ExprResult r = check_expr(ctx, *m.body);
  for (const auto& [k, path] : r.psi) {
    if (k.kind == PathKey::Kind::Exception) {
      auto it = std::find_if(ctx.declared_throws.begin(), ctx.declared_throws.end(),
                             [&](const ThrowsDecl& t) { return t.exception == k.exception; });
      if (it == ctx.declared_throws.end()) {
        error(ctx, sig.pos, "MethodOk",
              "exception " + k.exception + " escapes " + sig.name + " but is not declared");
      } else if (!flows(ctx, path.pc, it->label)) {
        error(ctx, sig.pos, "MethodOk",
              "exception " + k.exception + " raised at " + to_string(path.pc) +
                  " but declared at " + to_string(it->label),
              {path.pc, it->label});
      }
    }
    if (k.kind == PathKey::Kind::Normal) {
      VType want = VType::of(resolve_type(sig.ret));
      bool unit_ok = want.shape.base == BaseKind::Unit;
      if (!unit_ok && !check_subtype(ct_, ctx.trust, r.type, want))
        error(ctx, sig.pos, "MethodOk",
              sig.name + " returns " + to_string(r.type) + " but declares " + to_string(want),
              {r.type.label_or_any(), *want.label});
    }
  }
}

// ClassOk.
void Checker::check_contract(const std::string& name) {
  const ContractDecl& c = ct_.at(name);
  file_ = c.source;
  CheckContext ctx;
  ctx.self = name;
  if (c.superclass && ct_.has(*c.superclass)) {
    auto inherited = lookup_fields(ct_, *c.superclass);
    for (const auto& f : c.fields) {
      for (const auto& g : inherited)
        if (g.name == f.name)
          error(ctx, f.pos, "ClassOk", "field " + f.name + " shadows an inherited field");
    }
    for (const auto& m : c.methods) {
      if (!has_method(ct_, *c.superclass, m.sig.name)) continue;
      const MethodSig& super = lookup_method(ct_, *c.superclass, m.sig.name).method->sig;
      if (!can_override(m.sig, super))
        error(ctx, m.sig.pos, "CanOverride",
              m.sig.name + " overrides " + signature_key(super) + " with " +
                  signature_key(m.sig));
    }
  }
  if (!c.is_interface) {
    for (auto s = c.superclass; s && ct_.has(*s); s = ct_.at(*s).superclass) {
      for (const auto& m : ct_.at(*s).methods) {
        if (m.body) continue;
        const MethodDecl* impl = lookup_method(ct_, name, m.sig.name).method;
        if (!impl->body)
          error(ctx, c.pos, "ClassOk",
                name + " does not implement " + *s + "." + m.sig.name);
      }
    }
  }
  for (const auto& m : c.methods) {
    file_ = c.source;
    check_method(name, m);
  }
}

// CtOk.
void Checker::check_program() {
  for (const auto& name : ct_.order)
    if (!ct_.at(name).is_attacker) check_contract(name);
}

Diagnostics check_program(const ContractTable& ct) {
  Checker c(ct);
  c.check_program();
  return c.diagnostics();
}

}  // namespace scif::tc
