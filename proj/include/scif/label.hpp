#pragma once

#include <compare>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scif {

// An atom of the label lattice. Concrete chain addresses are spelled "@name";
// inside the typechecker atoms may also name final address variables
// ("from", "sender") or the symbolic self atom "this".
struct Principal {
  std::string id;

  auto operator<=>(const Principal&) const = default;
};

class LabelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integrity label: an element of the free distributive lattice over
// principals. `Any` is the top (least trusted) element. `This` is a
// placeholder for the enclosing contract and must be resolved before any
// lattice query.
class Label {
 public:
  enum class Kind { Atom, This, Any, Join, Meet };

  Label() : kind_(Kind::Any) {}

  static Label atom(Principal p);
  static Label atom(std::string id) { return atom(Principal{std::move(id)}); }
  static Label this_label();
  static Label any();
  static Label join_of(Label a, Label b);
  static Label meet_of(Label a, Label b);

  Kind kind() const { return kind_; }
  const Principal& principal() const { return atom_; }
  const std::vector<Label>& operands() const { return operands_; }

  bool contains_this() const;
  std::set<Principal> atoms() const;

  // Structural equality (not lattice equivalence; normalize first for that).
  bool operator==(const Label& other) const;

 private:
  Kind kind_;
  Principal atom_;
  std::vector<Label> operands_;
};

// Atomic flow hypotheses established by dynamic trust checks.
struct TrustEnv {
  std::set<std::pair<Principal, Principal>> hypotheses;

  void add(Principal from, Principal to) {
    hypotheses.emplace(std::move(from), std::move(to));
  }
  bool subset_of(const TrustEnv& other) const;
};

using Clause = std::set<Principal>;
// Antichain of conjunctive clauses. The single empty clause denotes `any`.
using Dnf = std::set<Clause>;

Label resolve_this(const Label& l, const Principal& self);
Label substitute(const Label& l, const std::map<Principal, Label>& mapping);

Dnf to_dnf(const Label& l);
Label from_dnf(const Dnf& d);
Label normalize(const Label& l);

bool flows_to(const Label& from, const Label& to, const TrustEnv& t = {});
Label join(const Label& a, const Label& b);
Label meet(const Label& a, const Label& b);
bool equivalent(const Label& a, const Label& b);

// Brute-force decision by valuation enumeration. Independent of the DNF
// route; intended for tests. Throws when more than 16 atoms are involved.
bool oracle_flows_to(const Label& from, const Label& to, const TrustEnv& t = {});

// Canonical text: sorted antichain DNF, `\/` between clauses and `/\` within.
std::string canonical_string(const Label& l);
// Structural text without normalization.
std::string to_string(const Label& l);

// Textual label grammar: atoms are identifiers or @addresses, `any`, `this`,
// `/\` binds tighter than `\/`, parentheses allowed.
Label parse_label(std::string_view text);

}  // namespace scif
