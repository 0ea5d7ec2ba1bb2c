#include <sstream>

#include "scif/syntax.hpp"

namespace scif {

using namespace ast;

namespace {

std::string label_text(const Label& l) { return to_string(l); }

std::string pad(int n) { return std::string(static_cast<std::size_t>(n) * 2, ' '); }

std::string join_values(const std::vector<Value>& vs, std::size_t from = 0) {
  std::string out;
  for (std::size_t i = from; i < vs.size(); ++i) {
    if (i > from) out += ", ";
    out += print_value(vs[i]);
  }
  return out;
}

bool is_unit(const Expr& e) {
  return e.kind == Expr::Kind::Val && e.vals[0].kind == Value::Kind::Unit;
}

bool is_write(const Expr& e) {
  return e.kind == Expr::Kind::AssignRef || e.kind == Expr::Kind::FieldWrite ||
         e.kind == Expr::Kind::MapWrite;
}

void print_block(const Expr& e, int indent, std::string& out);

// Prints a non-let expression. Compound forms span lines and close at
// `indent`.
void print_form(const Expr& e, int indent, std::string& out) {
  auto keys = [&]() {
    std::string s;
    for (const auto& k : e.keys) s += "[" + print_value(k) + "]";
    return s;
  };
  switch (e.kind) {
    case Expr::Kind::Val:
      out += print_value(e.vals[0]);
      return;
    case Expr::Kind::Throw:
      out += "throw " + print_value(e.vals[0]);
      return;
    case Expr::Kind::Fail:
      out += "fail " + print_value(e.vals[0]);
      return;
    case Expr::Kind::Ref:
      out += "ref(" + print_value(e.vals[0]) + " : " + print_type(e.type) + ")";
      return;
    case Expr::Kind::Deref:
      out += "deref(" + print_value(e.vals[0]) + ")";
      return;
    case Expr::Kind::AssignRef:
      out += print_value(e.vals[0]) + " := " + print_value(e.vals[1]);
      return;
    case Expr::Kind::FieldRead:
      out += "this." + e.name;
      return;
    case Expr::Kind::FieldWrite:
      out += "this." + e.name + " = " + print_value(e.vals[0]);
      return;
    case Expr::Kind::MapRead:
      out += "this." + e.name + keys();
      return;
    case Expr::Kind::MapWrite:
      out += "this." + e.name + keys() + " = " + print_value(e.vals[0]);
      return;
    case Expr::Kind::New:
      out += "new " + e.name + "(" + join_values(e.vals) + ")";
      return;
    case Expr::Kind::Cast:
      out += "(" + e.name + ") " + print_value(e.vals[0]);
      return;
    case Expr::Kind::Call:
      out += print_value(e.vals[0]) + "." + e.name + "(" + join_values(e.vals, 1) +
             ")";
      return;
    case Expr::Kind::BinOp:
      out += print_value(e.vals[0]) + " " + e.name + " " + print_value(e.vals[1]);
      return;
    case Expr::Kind::UnOp:
      out += e.name + print_value(e.vals[0]);
      return;
    case Expr::Kind::Endorse:
      out += "endorse(" + print_value(e.vals[0]) + ", " + label_text(e.from) +
             " -> " + label_text(e.to) + ")";
      return;
    case Expr::Kind::Send:
      out += "send(" + join_values(e.vals) + ")";
      return;
    case Expr::Kind::If:
    case Expr::Kind::IfTrust:
      out += "if (" + print_value(e.vals[0]);
      if (e.kind == Expr::Kind::IfTrust) out += " => " + print_value(e.vals[1]);
      out += ") ";
      print_block(*e.kids[0], indent, out);
      out += " else ";
      print_block(*e.kids[1], indent, out);
      return;
    case Expr::Kind::Lock:
      out += "lock (" + label_text(e.from) + ") ";
      print_block(*e.kids[0], indent, out);
      return;
    case Expr::Kind::IgnoreLocks:
      out += "ignore_locks ";
      print_block(*e.kids[0], indent, out);
      return;
    case Expr::Kind::Atomic:
      out += "atomic ";
      print_block(*e.kids[0], indent, out);
      out += " rescue " + e.binder + " ";
      print_block(*e.kids[1], indent, out);
      return;
    case Expr::Kind::Try:
      out += "try ";
      print_block(*e.kids[0], indent, out);
      for (const auto& h : e.handlers) {
        out += " catch " + h.exception;
        if (!h.vars.empty()) {
          out += "(";
          for (std::size_t i = 0; i < h.vars.size(); ++i)
            out += (i ? ", " : "") + h.vars[i];
          out += ")";
        }
        out += " ";
        print_block(*h.body, indent, out);
      }
      return;
    case Expr::Kind::Let:
      print_block(e, indent, out);
      return;
  }
}

// Prints the statements of a let chain at `indent`, one per line.
void print_statements(const Expr& e, int indent, std::string& out) {
  const Expr* cur = &e;
  while (cur->kind == Expr::Kind::Let) {
    const Expr& first = *cur->kids[0];
    out += pad(indent);
    if (cur->binder != "_") {
      out += "let " + cur->binder + " = ";
      if (is_write(first)) {
        out += "{ ";
        print_form(first, indent, out);
        out += " }";
      } else {
        print_form(first, indent, out);
      }
    } else {
      print_form(first, indent, out);
    }
    out += ";\n";
    cur = cur->kids[1].get();
  }
  if (!is_unit(*cur)) {
    out += pad(indent);
    print_form(*cur, indent, out);
    out += "\n";
  }
}

void print_block(const Expr& e, int indent, std::string& out) {
  out += "{\n";
  print_statements(e, indent + 1, out);
  out += pad(indent) + "}";
}

std::string sig_labels(const MethodSig& s) {
  return "{" + label_text(s.pc_ex) + " -> " + label_text(s.pc_in) + "; " +
         label_text(s.lock) + "}";
}

}  // namespace

std::string print_value(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Var: return v.name;
    case Value::Kind::Unit: return "()";
    case Value::Kind::Bool: return v.boolean ? "true" : "false";
    case Value::Kind::Int: return v.integer.str();
    case Value::Kind::Addr: return v.name;
    case Value::Kind::This: return "this";
    case Value::Kind::Sender: return "sender";
    case Value::Kind::CallValue: return "callvalue";
    case Value::Kind::Exn: return v.name + "(" + join_values(v.args) + ")";
    case Value::Kind::AtkCast:
      return "atk_cast(" + print_value(v.args[0]) + " as " + v.name + ")";
  }
  return "?";
}

std::string print_type(const Type& t) {
  std::string base;
  switch (t.base) {
    case BaseKind::Ref:
      base = "ref(" + print_type(*t.elem) + ")";
      break;
    case BaseKind::Mapping:
      base = std::string("mapping(") +
             (t.key_base == BaseKind::Int ? "uint" : "address") +
             (t.key_var ? " " + *t.key_var : "") + " => " + print_type(*t.elem) +
             ")";
      break;
    case BaseKind::Contract:
    case BaseKind::Exception:
      base = t.name;
      break;
    default:
      base = base_name(t.base);
  }
  return base + "{" + label_text(t.label) + "}";
}

std::string print_expr(const Expr& e, int indent) {
  std::string out;
  if (e.kind == Expr::Kind::Let) {
    print_statements(e, indent, out);
  } else {
    out += pad(indent);
    print_form(e, indent, out);
  }
  return out;
}

std::string print_contract(const ContractDecl& c) {
  std::string out;
  if (c.is_attacker) out += "attacker ";
  out += (c.is_interface ? "interface " : "contract ") + c.name;
  if (c.superclass) out += " extends " + *c.superclass;
  out += " {\n";
  if (!c.declared_trust.empty()) {
    out += "  trust ";
    for (std::size_t i = 0; i < c.declared_trust.size(); ++i)
      out += (i ? ", " : "") + c.declared_trust[i];
    out += ";\n";
  }
  for (const auto& ex : c.exceptions) {
    out += "  exception " + ex.name + "(";
    for (std::size_t i = 0; i < ex.fields.size(); ++i)
      out += (i ? ", " : "") + print_type(ex.fields[i].type) + " " + ex.fields[i].name;
    out += ");\n";
  }
  for (const auto& f : c.fields) out += "  " + print_type(f.type) + " " + f.name + ";\n";
  for (const auto& m : c.methods) {
    const MethodSig& s = m.sig;
    out += "  ";
    if (s.is_public) out += "@public ";
    out += print_type(s.ret) + " " + s.name + sig_labels(s) + "(";
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      const Param& p = s.params[i];
      out += (i ? ", " : "");
      if (p.is_final) out += "final ";
      out += print_type(p.type) + " " + p.name;
    }
    out += ")";
    if (!s.throws.empty()) {
      out += " throws ";
      for (std::size_t i = 0; i < s.throws.size(); ++i)
        out += (i ? ", " : "") + s.throws[i].exception + "{" +
               label_text(s.throws[i].label) + "}";
    }
    if (!m.body) {
      out += ";\n";
      continue;
    }
    out += " ";
    std::string body;
    print_block(*m.body, 1, body);
    out += body + "\n";
  }
  out += "}\n";
  return out;
}

std::string print_program(const ContractTable& ct) {
  std::string out;
  for (std::size_t i = 0; i < ct.order.size(); ++i) {
    if (i) out += "\n";
    out += print_contract(ct.at(ct.order[i]));
  }
  return out;
}

}  // namespace scif
