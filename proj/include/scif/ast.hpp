#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scif/label.hpp"

namespace scif {

using BigInt = boost::multiprecision::cpp_int;

struct Pos {
  int line = 0;
  int col = 0;

  auto operator<=>(const Pos&) const = default;
};

std::string to_string(const Pos& p);

namespace ast {

enum class BaseKind {
  Unit,
  Bool,
  Int,
  Address,
  Ref,
  Contract,
  Exception,
  Mapping,
  Failure,
  // Type of expressions that never terminate normally (throw, fail).
  Never,
};

// A labeled type. Every type carries exactly one label.
struct Type {
  BaseKind base = BaseKind::Unit;
  std::string name;                  // contract or exception name
  std::optional<std::string> key_var;  // dependent mapping key variable
  BaseKind key_base = BaseKind::Address;
  std::shared_ptr<const Type> elem;  // ref target or mapping value
  Label label = Label::any();
  bool label_explicit = false;

  static Type simple(BaseKind b, Label l) {
    Type t;
    t.base = b;
    t.label = std::move(l);
    return t;
  }
  static Type contract(std::string name, Label l) {
    Type t = simple(BaseKind::Contract, std::move(l));
    t.name = std::move(name);
    return t;
  }
  Type with_label(Label l) const {
    Type t = *this;
    t.label = std::move(l);
    return t;
  }
};

struct Value {
  enum class Kind {
    Var,
    Unit,
    Bool,
    Int,
    Addr,       // concrete address literal `@name`
    This,
    Sender,
    CallValue,
    Exn,        // exception construction `Name(v, ...)`
    AtkCast,    // attacker cast `atk_cast(v as C)`; operand in args[0]
  };

  Kind kind = Kind::Unit;
  Pos pos;
  std::string name;
  bool boolean = false;
  BigInt integer;
  std::vector<Value> args;

  static Value var(std::string n, Pos p = {}) {
    Value v;
    v.kind = Kind::Var;
    v.name = std::move(n);
    v.pos = p;
    return v;
  }
  static Value unit(Pos p = {}) {
    Value v;
    v.pos = p;
    return v;
  }
  static Value of_bool(bool b, Pos p = {}) {
    Value v;
    v.kind = Kind::Bool;
    v.boolean = b;
    v.pos = p;
    return v;
  }
  static Value of_int(BigInt i, Pos p = {}) {
    Value v;
    v.kind = Kind::Int;
    v.integer = std::move(i);
    v.pos = p;
    return v;
  }
  static Value addr(std::string a, Pos p = {}) {
    Value v;
    v.kind = Kind::Addr;
    v.name = std::move(a);
    v.pos = p;
    return v;
  }
  static Value of_kind(Kind k, Pos p = {}) {
    Value v;
    v.kind = k;
    v.pos = p;
    return v;
  }
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Handler {
  std::string exception;
  std::vector<std::string> vars;
  ExprPtr body;
  Pos pos;
};

// Core expressions. Operands are values; only `let` sequences expressions.
struct Expr {
  enum class Kind {
    Val,
    Throw,
    Fail,
    Ref,          // ref(v : type)
    Deref,        // deref(v)
    AssignRef,    // v := w
    FieldRead,    // this.f
    FieldWrite,   // this.f = v
    MapRead,      // this.f[k]...[k]
    MapWrite,     // this.f[k]...[k] = v
    New,          // new C(v, ...)
    Cast,         // (C) v
    Call,         // v.m(v, ...)
    Let,          // let x = e1; e2
    If,           // if (v) e1 else e2
    IfTrust,      // if (v1 => v2) e1 else e2
    Endorse,      // endorse(v, from -> to)
    Lock,         // lock (l) e
    Try,          // try e catch ...
    Atomic,       // atomic e rescue x e'
    BinOp,
    UnOp,
    Send,         // send(to, amount)
    IgnoreLocks,  // attacker-only: ignore_locks e
  };

  Kind kind = Kind::Val;
  Pos pos;
  int id = 0;
  std::vector<Value> vals;
  std::string name;    // field, method, contract, operator
  std::string binder;  // let binder or rescue binder
  std::vector<ExprPtr> kids;
  std::vector<Value> keys;  // map access keys
  Type type;                // ref annotation
  Label from = Label::any();
  Label to = Label::any();
  std::vector<Handler> handlers;
};

int next_node_id();

ExprPtr make(Expr e);
ExprPtr make_val(Value v);
ExprPtr make_let(std::string binder, ExprPtr first, ExprPtr rest, Pos pos);

struct Param {
  std::string name;
  Type type;
  bool is_final = false;
  Pos pos;
};

struct ThrowsDecl {
  std::string exception;
  Label label = Label::any();
  bool label_explicit = false;
};

struct MethodSig {
  std::string name;
  std::vector<Param> params;
  Type ret;
  Label pc_ex = Label::this_label();
  Label pc_in = Label::this_label();
  Label lock = Label::this_label();
  std::vector<ThrowsDecl> throws;
  bool is_public = false;
  // Which of the three signature labels were written in source.
  bool pc_ex_explicit = false;
  bool pc_in_explicit = false;
  bool lock_explicit = false;
  Pos pos;
};

struct MethodDecl {
  MethodSig sig;
  ExprPtr body;  // null for interface methods
};

struct ExceptionDecl {
  std::string name;
  std::string owner;
  std::vector<Param> fields;
  Pos pos;
};

struct FieldDecl {
  std::string name;
  Type type;
  Pos pos;
};

struct ContractDecl {
  std::string name;
  std::optional<std::string> superclass;
  bool is_interface = false;
  // Attacker code: parsed and executed but never typechecked.
  bool is_attacker = false;
  std::vector<FieldDecl> fields;
  std::vector<ExceptionDecl> exceptions;
  std::vector<MethodDecl> methods;
  std::vector<std::string> declared_trust;
  Pos pos;
  std::string source;  // file name, for diagnostics

  const MethodDecl* find_method(const std::string& m) const;
};

// Immutable after construction. Exceptions are program-global by name.
struct ContractTable {
  std::map<std::string, ContractDecl> contracts;
  std::vector<std::string> order;
  std::map<std::string, ExceptionDecl> exceptions;

  bool has(const std::string& c) const { return contracts.count(c) != 0; }
  const ContractDecl& at(const std::string& c) const;
};

std::string base_name(BaseKind b);

}  // namespace ast
}  // namespace scif
