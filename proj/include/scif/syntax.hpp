#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scif/ast.hpp"
#include "scif/diagnostic.hpp"

namespace scif {

struct SourceFile {
  std::string name;
  std::string text;
};

// Parses one or more source files into a single contract table. Throws
// ParseError carrying positioned diagnostics on any syntax or declaration
// error.
ast::ContractTable parse_program(std::string_view source,
                                 const std::string& file = "<input>");
ast::ContractTable parse_sources(const std::vector<SourceFile>& files);
ast::ContractTable load_files(const std::vector<std::string>& paths);

// Prints the core form of a table. Reparsing the output yields a table that
// prints identically.
std::string print_program(const ast::ContractTable& ct);
std::string print_contract(const ast::ContractDecl& c);
std::string print_expr(const ast::Expr& e, int indent = 0);
std::string print_value(const ast::Value& v);
std::string print_type(const ast::Type& t);

struct MethodRef {
  const ast::MethodDecl* method = nullptr;
  std::string owner;  // contract that defines the method
};

// Superclass fields first. Throws std::out_of_range for unknown contracts.
std::vector<ast::FieldDecl> lookup_fields(const ast::ContractTable& ct,
                                          const std::string& c);
const ast::FieldDecl* find_field(const ast::ContractTable& ct,
                                 const std::string& c, const std::string& f);
// Innermost definition along the inheritance chain. Throws
// std::out_of_range if no contract in the chain defines m.
MethodRef lookup_method(const ast::ContractTable& ct, const std::string& c,
                        const std::string& m);
bool has_method(const ast::ContractTable& ct, const std::string& c,
                const std::string& m);
// Reflexive, transitive.
bool is_subclass(const ast::ContractTable& ct, const std::string& sub,
                 const std::string& super);

// Canonical dispatch key covering every label of the signature. Parameter
// names are replaced by positions so that renaming a parameter keeps the key.
std::string signature_key(const ast::MethodSig& sig);
bool can_override(const ast::MethodSig& sub, const ast::MethodSig& super);

}  // namespace scif
