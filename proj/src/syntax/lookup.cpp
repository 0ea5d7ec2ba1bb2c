#include <algorithm>
#include <set>

#include "scif/syntax.hpp"

namespace scif {

using namespace ast;

std::vector<FieldDecl> lookup_fields(const ContractTable& ct, const std::string& c) {
  const ContractDecl& decl = ct.at(c);
  std::vector<FieldDecl> out;
  if (decl.superclass) out = lookup_fields(ct, *decl.superclass);
  out.insert(out.end(), decl.fields.begin(), decl.fields.end());
  return out;
}

const FieldDecl* find_field(const ContractTable& ct, const std::string& c,
                            const std::string& f) {
  for (const ContractDecl* d = &ct.at(c);;) {
    for (const auto& fd : d->fields)
      if (fd.name == f) return &fd;
    if (!d->superclass) return nullptr;
    d = &ct.at(*d->superclass);
  }
}

MethodRef lookup_method(const ContractTable& ct, const std::string& c,
                        const std::string& m) {
  for (const ContractDecl* d = &ct.at(c);;) {
    if (const MethodDecl* md = d->find_method(m)) return {md, d->name};
    if (!d->superclass) throw std::out_of_range("no method " + m + " in " + c);
    d = &ct.at(*d->superclass);
  }
}

bool has_method(const ContractTable& ct, const std::string& c, const std::string& m) {
  if (!ct.has(c)) return false;
  for (const ContractDecl* d = &ct.at(c);;) {
    if (d->find_method(m)) return true;
    if (!d->superclass || !ct.has(*d->superclass)) return false;
    d = &ct.at(*d->superclass);
  }
}

bool is_subclass(const ContractTable& ct, const std::string& sub,
                 const std::string& super) {
  std::string cur = sub;
  for (;;) {
    if (cur == super) return true;
    if (!ct.has(cur)) return false;
    const auto& s = ct.at(cur).superclass;
    if (!s) return false;
    cur = *s;
  }
}

namespace {

std::string type_key(const Type& t, const std::map<Principal, Label>& rename) {
  std::string base;
  switch (t.base) {
    case BaseKind::Ref:
      base = "ref(" + type_key(*t.elem, rename) + ")";
      break;
    case BaseKind::Mapping: {
      // The key variable is bound inside the mapping type; normalize its name.
      auto inner = rename;
      if (t.key_var) inner[Principal{*t.key_var}] = Label::atom("%key");
      base = std::string("mapping(") +
             (t.key_base == BaseKind::Int ? "uint" : "address") +
             (t.key_var ? " %key" : "") + "=>" + type_key(*t.elem, inner) + ")";
      break;
    }
    case BaseKind::Contract:
    case BaseKind::Exception:
      base = t.name;
      break;
    default:
      base = base_name(t.base);
  }
  return base + "{" + canonical_string(substitute(t.label, rename)) + "}";
}

}  // namespace

std::string signature_key(const MethodSig& sig) {
  std::map<Principal, Label> rename;
  for (std::size_t i = 0; i < sig.params.size(); ++i)
    rename[Principal{sig.params[i].name}] = Label::atom("$" + std::to_string(i));
  auto lab = [&](const Label& l) { return canonical_string(substitute(l, rename)); };

  std::string key = sig.name + "(";
  for (std::size_t i = 0; i < sig.params.size(); ++i) {
    if (i) key += ",";
    if (sig.params[i].is_final) key += "final ";
    key += type_key(sig.params[i].type, rename);
  }
  key += ")->" + type_key(sig.ret, rename);
  key += "|" + lab(sig.pc_ex) + "|" + lab(sig.pc_in) + "|" + lab(sig.lock);
  std::vector<std::string> throws;
  for (const auto& t : sig.throws) throws.push_back(t.exception + "{" + lab(t.label) + "}");
  std::sort(throws.begin(), throws.end());
  key += "|throws[";
  for (std::size_t i = 0; i < throws.size(); ++i) key += (i ? "," : "") + throws[i];
  key += "]";
  return key;
}

bool can_override(const MethodSig& sub, const MethodSig& super) {
  return signature_key(sub) == signature_key(super);
}

}  // namespace scif
