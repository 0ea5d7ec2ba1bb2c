#include <algorithm>

#include "scif/interpreter.hpp"
#include "scif/syntax.hpp"

namespace scif::rt {

using namespace ast;
using Kind = Machine::Frame::Kind;

namespace {

struct StuckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string storage_key(const std::string& field, const std::vector<RValue>& keys) {
  std::string k = field;
  for (const auto& v : keys) {
    k += "[";
    k += v.kind == RValue::Kind::Int ? v.integer.str() : to_string(v);
    k += "]";
  }
  return k;
}

Label addr_label(const std::string& a) { return Label::atom(Principal{a}); }

bool same_value(const RValue& a, const RValue& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case RValue::Kind::Unit: return true;
    case RValue::Kind::Bool: return a.boolean == b.boolean;
    case RValue::Kind::Int: return a.integer == b.integer;
    case RValue::Kind::Addr: return a.name == b.name;
    case RValue::Kind::Ref: return a.ref == b.ref;
    default: return a.name == b.name && a.args == b.args;
  }
}

}  // namespace

TrustEnv store_env(const Heap& heap, const std::string& of) {
  TrustEnv t;
  auto it = heap.contracts.find(of);
  if (it == heap.contracts.end()) return t;
  for (const auto& p : it->second.trust) t.add(Principal{p}, Principal{of});
  return t;
}

bool runtime_trusts(const Heap& heap, const std::string& of, const Label& a, const Label& b) {
  return flows_to(a, b, store_env(heap, of));
}

bool bypass_locks(const Heap& heap, const std::vector<HeldLock>& locks,
                  const std::string& callee, const Label& caller_integrity) {
  TrustEnv t = store_env(heap, callee);
  return std::all_of(locks.begin(), locks.end(), [&](const HeldLock& h) {
    return h.owner != callee || flows_to(caller_integrity, h.label, t);
  });
}

Machine::Machine(const ChainState& chain, RunOptions opts)
    : ct_(*chain.table), opts_(opts), heap_(chain.heap) {}

int Machine::snapshot() {
  snapshots_.push_back(heap_);
  return static_cast<int>(snapshots_.size()) - 1;
}

void Machine::rollback(int id) {
  heap_ = snapshots_.at(static_cast<std::size_t>(id));
  snapshots_.resize(static_cast<std::size_t>(id));
}

void Machine::discard(int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= snapshots_.size())
    throw std::logic_error("discarding an unknown snapshot");
  snapshots_.resize(static_cast<std::size_t>(id));
}

void Machine::acquire_lock(const Label& l, const std::string& owner) {
  locks_.push_back({l, owner});
  trace_.push_back({.kind = "lock", .callee = owner, .detail = canonical_string(l)});
}

void Machine::release_lock(const Label& l, const std::string& owner) {
  auto it = std::find_if(locks_.rbegin(), locks_.rend(), [&](const HeldLock& h) {
    return h.owner == owner && h.label == l;
  });
  if (it == locks_.rend()) throw std::logic_error("unbalanced lock release");
  locks_.erase(std::next(it).base());
  trace_.push_back({.kind = "unlock", .callee = owner, .detail = canonical_string(l)});
}

Label Machine::concrete(const Label& l) const {
  return normalize(substitute(resolve_this(l, tc::kSelf), act_.rho));
}

const Type& Machine::field_type(const std::string& field) const {
  const auto& self = heap_.contracts.at(act_.self);
  const FieldDecl* f = find_field(ct_, self.type, field);
  if (!f) throw StuckError("no field " + field + " in " + self.type);
  return f->type;
}

RValue Machine::read_storage(const std::string& field, const std::vector<RValue>& keys) const {
  const Type* t = &field_type(field);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (t->base != BaseKind::Mapping) throw StuckError("too many indices for " + field);
    t = t->elem.get();
  }
  const auto& storage = heap_.contracts.at(act_.self).storage;
  auto it = storage.find(storage_key(field, keys));
  RValue v = it == storage.end() ? zero_value(*t) : it->second;
  if (t->base == BaseKind::Contract && v.kind == RValue::Kind::Addr) v.view = t->name;
  return v;
}

RValue Machine::eval(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Var: {
      auto it = env_.find(v.name);
      if (it == env_.end()) throw StuckError("unbound variable " + v.name);
      return it->second;
    }
    case Value::Kind::Unit: return RValue::unit();
    case Value::Kind::Bool: return RValue::of_bool(v.boolean);
    case Value::Kind::Int: return RValue::of_int(v.integer);
    case Value::Kind::Addr: return RValue::addr(v.name);
    case Value::Kind::This:
      return RValue::addr(act_.self, heap_.contracts.at(act_.self).type);
    case Value::Kind::Sender: return RValue::addr(act_.sender);
    case Value::Kind::CallValue: return RValue::of_int(act_.callvalue);
    case Value::Kind::Exn: {
      std::vector<RValue> args;
      for (const auto& a : v.args) args.push_back(eval(a));
      return RValue::exn(v.name, std::move(args));
    }
    case Value::Kind::AtkCast: {
      RValue inner = eval(v.args[0]);
      if (inner.kind != RValue::Kind::Addr) throw StuckError("atk_cast of a non-address");
      inner.view = v.name;
      return inner;
    }
  }
  throw StuckError("unknown value form");
}

void Machine::raise(const std::string& cause, std::vector<RValue> payload,
                    const std::string& detail) {
  trace_.push_back({.kind = "fail", .callee = act_.self, .detail = detail.empty() ? cause : cause + ": " + detail});
  result_ = RValue::failure(cause, std::move(payload));
  mode_ = Mode::Failure;
}

void Machine::finish(TransactionReceipt::Outcome outcome) {
  done_ = true;
  outcome_ = outcome;
  if (outcome == TransactionReceipt::Outcome::Reverted) heap_ = pre_;
  if (!locks_.empty()) throw std::logic_error("locks held at transaction end");
}

bool Machine::ignoring_locks() const {
  for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
    if (it->kind == Kind::FunEnd) return false;
    if (it->kind == Kind::IgnoreLocks) return true;
  }
  return false;
}

void Machine::start(const CallRequest& call) {
  pre_ = heap_;
  act_ = {};
  act_.self = call.origin;
  act_.sender = call.origin;
  act_.pc = addr_label(call.origin);
  trace_.push_back({.kind = "transaction", .caller = call.origin, .callee = call.receiver,
                    .method = call.method});
  if (heap_.balance(call.origin) < call.value) {
    raise(failures::kInsufficientFunds, {}, call.origin);
    return;
  }
  if (call.value != 0) {
    heap_.balances[call.origin] -= call.value;
    heap_.balances[call.receiver] += call.value;
  }
  auto it = heap_.contracts.find(call.receiver);
  RValue recv = RValue::addr(call.receiver, it == heap_.contracts.end() ? "" : it->second.type);
  dispatch(recv, call.method, call.args, call.value, false);
}

// E-Call / E-AtkCall: exact-signature dispatch, then the caller gate and the
// auto-endorsement gate.
void Machine::dispatch(const RValue& receiver, const std::string& method,
                       std::vector<RValue> args, const BigInt& value, bool low_integrity) {
  auto it = heap_.contracts.find(receiver.name);
  if (it == heap_.contracts.end()) {
    raise(failures::kNoSuchContract, {RValue::addr(receiver.name)});
    return;
  }
  const std::string& actual = it->second.type;
  const std::string& expected_type = receiver.view.empty() ? actual : receiver.view;
  if (!has_method(ct_, actual, method)) {
    raise(failures::kNoSuchMethod, {}, actual + "." + method);
    return;
  }
  const MethodDecl& callee = *lookup_method(ct_, actual, method).method;
  if (opts_.sigcheck) {
    bool match = has_method(ct_, expected_type, method) &&
                 signature_key(lookup_method(ct_, expected_type, method).method->sig) ==
                     signature_key(callee.sig);
    if (!match) {
      trace_.push_back({.kind = "dispatch_mismatch", .caller = act_.self,
                        .callee = receiver.name, .method = method,
                        .detail = expected_type + " vs " + actual});
      raise(failures::kDispatchMismatch, {RValue::addr(receiver.name)},
            expected_type + "." + method + " is not " + actual + "." + method);
      return;
    }
  }
  const MethodSig& sig = callee.sig;
  if (!callee.body || sig.params.size() != args.size()) {
    raise(failures::kNoSuchMethod, {}, actual + "." + method);
    return;
  }

  Activation next;
  next.self = receiver.name;
  next.sender = act_.self;
  next.method = &callee;
  next.callvalue = value;
  next.rho[tc::kSelf] = addr_label(receiver.name);
  next.rho[tc::kSender] = addr_label(act_.self);
  Env env;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const Param& p = sig.params[i];
    RValue a = std::move(args[i]);
    if (a.kind == RValue::Kind::Addr) {
      next.rho[Principal{p.name}] = addr_label(a.name);
      if (p.type.base == BaseKind::Contract) a.view = p.type.name;
    }
    env[p.name] = std::move(a);
  }
  auto conc = [&](const Label& l) {
    return normalize(substitute(resolve_this(l, tc::kSelf), next.rho));
  };
  Label pc_ex = conc(sig.pc_ex);
  Label pc_in = conc(sig.pc_in);

  // A contract calling itself is an internal jump; the static Call rule
  // already covers it.
  bool internal = act_.self == receiver.name && act_.method != nullptr;
  if (!internal) {
    if (!runtime_trusts(heap_, receiver.name, addr_label(act_.self), pc_ex)) {
      raise(failures::kCallerGate, {RValue::addr(act_.self)},
            act_.self + " may not call " + actual + "." + method);
      return;
    }
    if (!flows_to(pc_ex, pc_in)) {
      if (!runtime_trusts(heap_, receiver.name, pc_ex, pc_in) &&
          !bypass_locks(heap_, locks_, receiver.name, pc_ex)) {
        trace_.push_back({.kind = "lock_bypass_denied", .caller = act_.self,
                          .callee = receiver.name, .method = method, .pc_ex = pc_ex});
        raise(failures::kLockBypassDenied, {RValue::addr(act_.self)},
              canonical_string(pc_ex) + " cannot bypass the locks of " + receiver.name);
        return;
      }
      trace_.push_back({.kind = "auto_endorse", .callee = receiver.name, .method = method,
                        .pc_ex = pc_ex, .detail = canonical_string(pc_in)});
    }
  }
  trace_.push_back({.kind = "call", .caller = act_.self, .callee = receiver.name,
                    .method = method, .pc_env = act_.pc, .pc_ex = pc_ex,
                    .low_integrity = low_integrity});

  Frame at;
  at.kind = Kind::AtPc;
  at.saved_pc = act_.pc;
  frames_.push_back(std::move(at));
  Frame fe;
  fe.kind = Kind::FunEnd;
  fe.caller = act_;
  fe.env = std::move(env_);
  frames_.push_back(std::move(fe));

  next.pc = pc_in;
  act_ = std::move(next);
  env_ = std::move(env);
  expr_ = callee.body.get();
  mode_ = Mode::Eval;
}

void Machine::step() {
  if (done_) throw std::logic_error("step on a terminal configuration");
  if (steps_ >= opts_.budget) {
    trace_.push_back({.kind = "fail", .detail = failures::kBudget});
    result_ = RValue::failure(failures::kBudget);
    // Budget exhaustion unwinds everything at once.
    frames_.clear();
    locks_.clear();
    snapshots_.clear();
    finish(TransactionReceipt::Outcome::Reverted);
    return;
  }
  ++steps_;
  try {
    switch (mode_) {
      case Mode::Eval: eval_step(*expr_); break;
      case Mode::Value: value_step(); break;
      case Mode::Exception: exception_step(); break;
      case Mode::Failure: failure_step(); break;
    }
  } catch (const StuckError& e) {
    std::string stack;
    for (const auto& f : frames_) stack += " " + std::to_string(static_cast<int>(f.kind));
    raise(failures::kStuck, {}, std::string(e.what()) + " [frames:" + stack + "]");
  }
}

void Machine::eval_step(const Expr& e) {
  if (opts_.typed_step) check_typed_step(e);
  auto value = [&](RValue v) {
    result_ = std::move(v);
    mode_ = Mode::Value;
  };
  switch (e.kind) {
    case Expr::Kind::Val:
      value(eval(e.vals[0]));
      return;

    case Expr::Kind::Let: {
      Frame f;
      f.kind = Kind::LetCont;
      f.binder = e.binder;
      f.body = e.kids[1].get();
      f.env = env_;
      frames_.push_back(std::move(f));
      expr_ = e.kids[0].get();
      return;
    }

    case Expr::Kind::If: {
      RValue c = eval(e.vals[0]);
      if (c.kind != RValue::Kind::Bool) throw StuckError("if on a non-boolean");
      expr_ = e.kids[c.boolean ? 0 : 1].get();
      return;
    }

    case Expr::Kind::IfTrust: {
      RValue a = eval(e.vals[0]);
      RValue b = eval(e.vals[1]);
      if (a.kind != RValue::Kind::Addr || b.kind != RValue::Kind::Addr)
        throw StuckError("trust check on non-addresses");
      bool ok = runtime_trusts(heap_, act_.self, addr_label(a.name), addr_label(b.name));
      expr_ = e.kids[ok ? 0 : 1].get();
      return;
    }

    case Expr::Kind::Throw: {
      RValue v = eval(e.vals[0]);
      if (v.kind != RValue::Kind::Exn) throw StuckError("throw of a non-exception");
      result_ = std::move(v);
      mode_ = Mode::Exception;
      return;
    }

    case Expr::Kind::Fail: {
      RValue v = eval(e.vals[0]);
      if (v.kind == RValue::Kind::Failure) {
        result_ = std::move(v);
        mode_ = Mode::Failure;
        trace_.push_back({.kind = "fail", .callee = act_.self, .detail = "rethrow " + result_.name});
      } else {
        raise(failures::kUser, {std::move(v)});
      }
      return;
    }

    case Expr::Kind::Ref: {
      int id = heap_.next_ref++;
      heap_.refs[id] = eval(e.vals[0]);
      RValue r;
      r.kind = RValue::Kind::Ref;
      r.ref = id;
      value(r);
      return;
    }

    case Expr::Kind::Deref: {
      RValue r = eval(e.vals[0]);
      auto it = heap_.refs.find(r.ref);
      if (r.kind != RValue::Kind::Ref || it == heap_.refs.end())
        throw StuckError("deref of a dangling reference");
      value(it->second);
      return;
    }

    case Expr::Kind::AssignRef: {
      RValue r = eval(e.vals[0]);
      if (r.kind != RValue::Kind::Ref || !heap_.refs.count(r.ref))
        throw StuckError("assignment through a dangling reference");
      heap_.refs[r.ref] = eval(e.vals[1]);
      value(RValue::unit());
      return;
    }

    case Expr::Kind::FieldRead:
      value(read_storage(e.name, {}));
      return;

    case Expr::Kind::FieldWrite: {
      field_type(e.name);
      heap_.contracts.at(act_.self).storage[e.name] = eval(e.vals[0]);
      value(RValue::unit());
      return;
    }

    case Expr::Kind::MapRead: {
      std::vector<RValue> keys;
      for (const auto& k : e.keys) keys.push_back(eval(k));
      value(read_storage(e.name, keys));
      return;
    }

    case Expr::Kind::MapWrite: {
      std::vector<RValue> keys;
      for (const auto& k : e.keys) keys.push_back(eval(k));
      read_storage(e.name, keys);
      heap_.contracts.at(act_.self).storage[storage_key(e.name, keys)] = eval(e.vals[0]);
      value(RValue::unit());
      return;
    }

    case Expr::Kind::New: {
      if (!ct_.has(e.name) || ct_.at(e.name).is_interface)
        throw StuckError("cannot instantiate " + e.name);
      auto fields = lookup_fields(ct_, e.name);
      std::vector<FieldDecl> scalar;
      for (const auto& f : fields)
        if (f.type.base != BaseKind::Mapping) scalar.push_back(f);
      if (scalar.size() != e.vals.size()) throw StuckError("wrong initializer count for " + e.name);
      std::string addr = "@" + e.name + "#" + std::to_string(heap_.next_new++);
      ContractState st;
      st.type = e.name;
      for (auto c = std::optional<std::string>(e.name); c && ct_.has(*c); c = ct_.at(*c).superclass)
        for (const auto& p : ct_.at(*c).declared_trust) st.trust.insert(p);
      st.trust.insert(act_.self);
      for (std::size_t i = 0; i < scalar.size(); ++i) st.storage[scalar[i].name] = eval(e.vals[i]);
      heap_.contracts[addr] = std::move(st);
      heap_.balances[addr] = 0;
      trace_.push_back({.kind = "new", .caller = act_.self, .callee = addr, .detail = e.name});
      value(RValue::addr(addr, e.name));
      return;
    }

    case Expr::Kind::Cast: {
      RValue v = eval(e.vals[0]);
      if (v.kind != RValue::Kind::Addr) throw StuckError("cast of a non-address");
      auto it = heap_.contracts.find(v.name);
      if (it == heap_.contracts.end() || !is_subclass(ct_, it->second.type, e.name)) {
        raise(failures::kCastFailed, {RValue::addr(v.name)}, v.name + " is not a " + e.name);
        return;
      }
      v.view = e.name;
      value(v);
      return;
    }

    case Expr::Kind::Call: {
      RValue recv = eval(e.vals[0]);
      if (recv.kind != RValue::Kind::Addr) throw StuckError("call on a non-address");
      std::vector<RValue> args;
      for (std::size_t i = 1; i < e.vals.size(); ++i) args.push_back(eval(e.vals[i]));
      bool atk = e.vals[0].kind == Value::Kind::AtkCast;
      if (atk) {
        Frame f;
        f.kind = Kind::AtkCast;
        f.target = e.vals[0].name;
        frames_.push_back(std::move(f));
      }
      bool attacker = act_.method && ct_.has(heap_.contracts.at(act_.self).type) &&
                      ct_.at(heap_.contracts.at(act_.self).type).is_attacker;
      dispatch(recv, e.name, std::move(args), 0, atk || attacker);
      return;
    }

    case Expr::Kind::Endorse: {
      RValue v = eval(e.vals[0]);
      trace_.push_back({.kind = "endorse", .callee = act_.self,
                        .detail = canonical_string(concrete(e.from)) + " -> " +
                                  canonical_string(concrete(e.to))});
      value(std::move(v));
      return;
    }

    case Expr::Kind::Lock: {
      if (ignoring_locks()) {
        expr_ = e.kids[0].get();
        return;
      }
      Label l = concrete(e.from);
      acquire_lock(l, act_.self);
      Frame f;
      f.kind = Kind::WithLock;
      f.lock = {l, act_.self};
      frames_.push_back(std::move(f));
      expr_ = e.kids[0].get();
      return;
    }

    case Expr::Kind::IgnoreLocks: {
      Frame f;
      f.kind = Kind::IgnoreLocks;
      frames_.push_back(std::move(f));
      expr_ = e.kids[0].get();
      return;
    }

    case Expr::Kind::Try: {
      Frame f;
      f.kind = Kind::TryCatch;
      f.body = &e;
      f.env = env_;
      frames_.push_back(std::move(f));
      expr_ = e.kids[0].get();
      return;
    }

    case Expr::Kind::Atomic: {
      Frame f;
      f.kind = Kind::Transaction;
      f.binder = e.binder;
      f.body = e.kids[1].get();
      f.env = env_;
      f.snapshot = snapshot();
      frames_.push_back(std::move(f));
      trace_.push_back({.kind = "atomic", .callee = act_.self});
      const Expr& body = *e.kids[0];
      // Fast path: a lone call needs no separate evaluation step before
      // dispatch; its transaction frame is the block's.
      if (opts_.atomic_fastpath && body.kind == Expr::Kind::Call) {
        eval_step(body);
        return;
      }
      expr_ = &body;
      return;
    }

    case Expr::Kind::BinOp: {
      RValue a = eval(e.vals[0]);
      RValue b = eval(e.vals[1]);
      const std::string& op = e.name;
      auto ints = [&]() {
        if (a.kind != RValue::Kind::Int || b.kind != RValue::Kind::Int)
          throw StuckError("arithmetic on non-integers");
      };
      if (op == "==" || op == "!=") {
        bool eq = same_value(a, b);
        value(RValue::of_bool(op == "==" ? eq : !eq));
      } else if (op == "&&" || op == "||") {
        if (a.kind != RValue::Kind::Bool || b.kind != RValue::Kind::Bool)
          throw StuckError("logic on non-booleans");
        value(RValue::of_bool(op == "&&" ? a.boolean && b.boolean : a.boolean || b.boolean));
      } else {
        ints();
        const BigInt& x = a.integer;
        const BigInt& y = b.integer;
        if ((op == "/" || op == "%") && y == 0) {
          raise(failures::kDivisionByZero);
          return;
        }
        if (op == "+") value(RValue::of_int(x + y));
        else if (op == "-") value(RValue::of_int(x - y));
        else if (op == "*") value(RValue::of_int(x * y));
        else if (op == "/") value(RValue::of_int(x / y));
        else if (op == "%") value(RValue::of_int(x % y));
        else if (op == "<") value(RValue::of_bool(x < y));
        else if (op == "<=") value(RValue::of_bool(x <= y));
        else if (op == ">") value(RValue::of_bool(x > y));
        else if (op == ">=") value(RValue::of_bool(x >= y));
        else throw StuckError("unknown operator " + op);
      }
      return;
    }

    case Expr::Kind::UnOp: {
      RValue a = eval(e.vals[0]);
      if (e.name == "!" && a.kind == RValue::Kind::Bool) {
        value(RValue::of_bool(!a.boolean));
      } else if (e.name == "-" && a.kind == RValue::Kind::Int) {
        value(RValue::of_int(-a.integer));
      } else {
        throw StuckError("bad operand for " + e.name);
      }
      return;
    }

    case Expr::Kind::Send: {
      RValue to = eval(e.vals[0]);
      RValue amount = eval(e.vals[1]);
      if (to.kind != RValue::Kind::Addr || amount.kind != RValue::Kind::Int)
        throw StuckError("malformed send");
      if (amount.integer < 0 || heap_.balance(act_.self) < amount.integer) {
        raise(failures::kInsufficientFunds, {amount}, act_.self);
        return;
      }
      heap_.balances[act_.self] -= amount.integer;
      heap_.balances[to.name] += amount.integer;
      trace_.push_back({.kind = "send", .caller = act_.self, .callee = to.name,
                        .detail = amount.integer.str()});
      auto it = heap_.contracts.find(to.name);
      if (it != heap_.contracts.end() && has_method(ct_, it->second.type, "receive")) {
        const MethodDecl* r = lookup_method(ct_, it->second.type, "receive").method;
        if (r->body && r->sig.params.empty()) {
          bool attacker = ct_.at(heap_.contracts.at(act_.self).type).is_attacker;
          dispatch(RValue::addr(to.name, it->second.type), "receive", {}, amount.integer,
                   attacker);
          return;
        }
      }
      value(RValue::unit());
      return;
    }
  }
  throw StuckError("unknown expression form");
}

void Machine::value_step() {
  if (frames_.empty()) {
    finish(TransactionReceipt::Outcome::Committed);
    return;
  }
  Frame f = std::move(frames_.back());
  frames_.pop_back();
  switch (f.kind) {
    case Kind::LetCont:
      env_ = std::move(f.env);
      if (f.binder != "_") env_[f.binder] = result_;
      expr_ = f.body;
      mode_ = Mode::Eval;
      return;
    case Kind::Transaction:
      discard(f.snapshot);
      trace_.push_back({.kind = "commit", .callee = act_.self});
      return;
    case Kind::FunEnd:
      trace_.push_back({.kind = "return", .caller = f.caller.self, .callee = act_.self,
                        .method = act_.method->sig.name});
      act_ = std::move(f.caller);
      env_ = std::move(f.env);
      return;
    case Kind::AtPc:
      act_.pc = f.saved_pc;
      return;
    case Kind::WithLock:
      release_lock(f.lock.label, f.lock.owner);
      return;
    case Kind::TryCatch:
    case Kind::AtkCast:
    case Kind::IgnoreLocks:
      return;
  }
}

void Machine::exception_step() {
  if (frames_.empty()) {
    finish(TransactionReceipt::Outcome::UncaughtException);
    return;
  }
  Frame f = std::move(frames_.back());
  frames_.pop_back();
  switch (f.kind) {
    case Kind::TryCatch: {
      for (const auto& h : f.body->handlers) {
        if (h.exception != result_.name) continue;
        env_ = std::move(f.env);
        for (std::size_t i = 0; i < h.vars.size() && i < result_.args.size(); ++i)
          env_[h.vars[i]] = result_.args[i];
        expr_ = h.body.get();
        mode_ = Mode::Eval;
        trace_.push_back({.kind = "catch", .callee = act_.self, .detail = h.exception});
        return;
      }
      return;
    }
    case Kind::FunEnd: {
      // Declared exceptions cross the boundary; undeclared ones become
      // failures.
      const auto& throws = act_.method->sig.throws;
      bool declared = std::any_of(throws.begin(), throws.end(), [&](const ThrowsDecl& t) {
        return t.exception == result_.name;
      });
      trace_.push_back({.kind = "return", .caller = f.caller.self, .callee = act_.self,
                        .method = act_.method->sig.name,
                        .detail = (declared ? "exception " : "undeclared ") + result_.name});
      act_ = std::move(f.caller);
      env_ = std::move(f.env);
      if (!declared) {
        result_ = RValue::failure(failures::kUndeclaredException, {result_});
        mode_ = Mode::Failure;
      }
      return;
    }
    case Kind::Transaction:
      discard(f.snapshot);
      return;
    case Kind::AtPc:
      act_.pc = f.saved_pc;
      return;
    case Kind::WithLock:
      release_lock(f.lock.label, f.lock.owner);
      return;
    case Kind::LetCont:
    case Kind::AtkCast:
    case Kind::IgnoreLocks:
      return;
  }
}

void Machine::failure_step() {
  if (frames_.empty()) {
    finish(TransactionReceipt::Outcome::Reverted);
    return;
  }
  Frame f = std::move(frames_.back());
  frames_.pop_back();
  switch (f.kind) {
    case Kind::Transaction:
      rollback(f.snapshot);
      trace_.push_back({.kind = "rollback", .callee = act_.self, .detail = result_.name});
      env_ = std::move(f.env);
      env_[f.binder] = result_;
      expr_ = f.body;
      mode_ = Mode::Eval;
      return;
    case Kind::FunEnd:
      trace_.push_back({.kind = "return", .caller = f.caller.self, .callee = act_.self,
                        .method = act_.method->sig.name, .detail = "failure " + result_.name});
      act_ = std::move(f.caller);
      env_ = std::move(f.env);
      return;
    case Kind::AtPc:
      act_.pc = f.saved_pc;
      return;
    case Kind::WithLock:
      release_lock(f.lock.label, f.lock.owner);
      return;
    case Kind::LetCont:
    case Kind::TryCatch:
    case Kind::AtkCast:
    case Kind::IgnoreLocks:
      return;
  }
}

// Re-checks the expression about to be evaluated in the context the
// typechecker recorded for it, and checks the environment against Γ.
void Machine::check_typed_step(const Expr& e) const {
  if (!opts_.contexts) return;
  auto it = opts_.contexts->find(e.id);
  if (it == opts_.contexts->end()) return;
  const tc::CheckContext& ctx = it->second;
  for (const auto& [name, info] : ctx.gamma) {
    auto v = env_.find(name);
    if (v == env_.end()) throw TypedStepError("variable " + name + " missing at runtime");
    BaseKind b = info.type.shape.base;
    bool ok = true;
    switch (v->second.kind) {
      case RValue::Kind::Unit: ok = b == BaseKind::Unit; break;
      case RValue::Kind::Bool: ok = b == BaseKind::Bool; break;
      case RValue::Kind::Int: ok = b == BaseKind::Int; break;
      case RValue::Kind::Addr: ok = b == BaseKind::Address || b == BaseKind::Contract; break;
      case RValue::Kind::Ref: ok = b == BaseKind::Ref; break;
      case RValue::Kind::Exn: ok = b == BaseKind::Exception; break;
      case RValue::Kind::Failure: ok = b == BaseKind::Failure; break;
    }
    if (!ok) throw TypedStepError("variable " + name + " holds " + to_string(v->second));
    if (b == BaseKind::Contract && v->second.kind == RValue::Kind::Addr) {
      auto c = heap_.contracts.find(v->second.name);
      if (c == heap_.contracts.end() || !is_subclass(ct_, c->second.type, info.type.shape.name))
        throw TypedStepError("variable " + name + " does not hold a " + info.type.shape.name);
    }
  }
  // Frame rules: every WithLock frame still holds its lock (counted as a
  // multiset) and every Transaction frame owns a live snapshot.
  std::vector<HeldLock> unmatched = locks_;
  for (const auto& f : frames_) {
    if (f.kind == Frame::Kind::WithLock) {
      auto held = std::find_if(unmatched.begin(), unmatched.end(), [&](const HeldLock& l) {
        return l.owner == f.lock.owner && l.label == f.lock.label;
      });
      if (held == unmatched.end()) throw TypedStepError("lock frame without a held lock");
      unmatched.erase(held);
    } else if (f.kind == Frame::Kind::Transaction) {
      if (f.snapshot < 0 || static_cast<std::size_t>(f.snapshot) >= snapshots_.size())
        throw TypedStepError("atomic frame without a live snapshot");
    }
  }
  tc::Checker checker(ct_);
  checker.check_expr(ctx, e);
  if (!checker.diagnostics().empty())
    throw TypedStepError("re-check failed: " + checker.diagnostics().front().to_text());
}

TransactionReceipt Machine::receipt() const {
  TransactionReceipt r;
  r.outcome = outcome_;
  r.value = result_;
  r.steps = steps_;
  r.trace = trace_;
  r.post = heap_;
  return r;
}

TransactionReceipt run_transaction(const ChainState& chain, const CallRequest& call,
                                   const RunOptions& opts) {
  Machine m(chain, opts);
  m.start(call);
  while (!m.terminal()) m.step();
  return m.receipt();
}

}  // namespace scif::rt
