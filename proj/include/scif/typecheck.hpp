#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "scif/ast.hpp"
#include "scif/diagnostic.hpp"
#include "scif/label.hpp"

namespace scif::tc {

// Symbolic atom for the contract being checked.
inline const Principal kSelf{"this"};
inline const Principal kSender{"sender"};

struct PathKey {
  enum class Kind { Normal, Exception, Failure };
  Kind kind = Kind::Normal;
  std::string exception;

  static PathKey normal() { return {}; }
  static PathKey failure() { return {Kind::Failure, {}}; }
  static PathKey exn(std::string name) { return {Kind::Exception, std::move(name)}; }

  auto operator<=>(const PathKey&) const = default;
};

std::string to_string(const PathKey& k);

struct PathInfo {
  Label pc;
  Label lock;
};

using PathMap = std::map<PathKey, PathInfo>;

// Pointwise join; a path present in only one map keeps its labels.
PathMap psi_join(const PathMap& a, const PathMap& b);

// The type of a value. A missing label marks an untainted constant, which
// flows to every label.
struct VType {
  ast::Type shape;
  std::optional<Label> label;

  static VType of(ast::Type t) {
    VType v;
    v.label = t.label;
    v.shape = std::move(t);
    return v;
  }
  static VType constant(ast::BaseKind b) {
    VType v;
    v.shape.base = b;
    return v;
  }
  Label label_or_any() const { return label ? *label : Label::any(); }
};

std::string to_string(const VType& t);

struct VarInfo {
  VType type;
  // Final variables may appear as atoms in labels.
  bool atomable = false;
};

struct CheckContext {
  const ast::ContractTable* ct = nullptr;
  std::string self;
  std::map<std::string, VarInfo> gamma;
  TrustEnv trust;
  Label pc = Label::atom(kSelf);
  Label lock = Label::atom(kSelf);
  // Meet of the dynamic locks held by enclosing lock blocks.
  std::optional<Label> held;
  std::vector<ast::ThrowsDecl> declared_throws;
  // Static types of known address literals.
  std::map<std::string, ast::Type> heap;
};

// Context snapshot recorded per expression node for typed-step checking.
using NodeContexts = std::unordered_map<int, CheckContext>;

struct ExprResult {
  VType type;
  PathMap psi;
};

bool check_protection(const TrustEnv& t, const Label& l, const ast::Type& tau);
bool check_subtype(const ast::ContractTable& ct, const TrustEnv& t,
                   const VType& sub, const VType& super);

// Replaces `this` with the symbolic self atom.
Label resolve(const Label& l);

class Checker {
 public:
  explicit Checker(const ast::ContractTable& ct) : ct_(ct) {}
  // The checker keeps a reference to the table.
  explicit Checker(ast::ContractTable&&) = delete;

  VType check_value(const CheckContext& ctx, const ast::Value& v);
  ExprResult check_expr(const CheckContext& ctx, const ast::Expr& e);
  void check_method(const std::string& contract, const ast::MethodDecl& m);
  void check_contract(const std::string& contract);
  void check_program();

  const Diagnostics& diagnostics() const { return diags_; }
  const NodeContexts& node_contexts() const { return nodes_; }
  void record_contexts(bool on) { record_ = on; }

  // Builds the method-entry context used to check a method body.
  CheckContext method_context(const std::string& contract,
                              const ast::MethodSig& sig) const;

 private:
  void error(const CheckContext& ctx, Pos pos, const std::string& rule,
             std::string message, std::vector<Label> labels = {});
  bool flows(const CheckContext& ctx, const Label& from, const Label& to) const;
  bool flows(const CheckContext& ctx, const std::optional<Label>& from,
             const Label& to) const;
  std::optional<Principal> atom_of(const CheckContext& ctx, const ast::Value& v) const;
  bool base_compatible(const ast::Type& sub, const ast::Type& super) const;
  std::optional<VType> join_types(const VType& a, const VType& b) const;

  ExprResult check_let(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_call(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_send(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_map_access(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_try(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_atomic(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_if(const CheckContext& ctx, const ast::Expr& e);
  ExprResult check_new(const CheckContext& ctx, const ast::Expr& e);

  const ast::ContractTable& ct_;
  Diagnostics diags_;
  NodeContexts nodes_;
  bool record_ = false;
  std::string file_;
};

// Convenience: checks every non-attacker contract of the table.
Diagnostics check_program(const ast::ContractTable& ct);

}  // namespace scif::tc
