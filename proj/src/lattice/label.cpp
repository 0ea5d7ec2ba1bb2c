#include "scif/label.hpp"

#include <boost/container/small_vector.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <vector>

namespace scif {

Label Label::atom(Principal p) {
  Label l;
  l.kind_ = Kind::Atom;
  l.atom_ = std::move(p);
  return l;
}

Label Label::this_label() {
  Label l;
  l.kind_ = Kind::This;
  return l;
}

Label Label::any() { return Label(); }

Label Label::join_of(Label a, Label b) {
  Label l;
  l.kind_ = Kind::Join;
  l.operands_ = {std::move(a), std::move(b)};
  return l;
}

Label Label::meet_of(Label a, Label b) {
  Label l;
  l.kind_ = Kind::Meet;
  l.operands_ = {std::move(a), std::move(b)};
  return l;
}

bool Label::contains_this() const {
  if (kind_ == Kind::This) return true;
  return std::any_of(operands_.begin(), operands_.end(),
                     [](const Label& o) { return o.contains_this(); });
}

std::set<Principal> Label::atoms() const {
  std::set<Principal> out;
  if (kind_ == Kind::Atom) out.insert(atom_);
  for (const auto& o : operands_) {
    auto sub = o.atoms();
    out.insert(sub.begin(), sub.end());
  }
  return out;
}

bool Label::operator==(const Label& other) const {
  return kind_ == other.kind_ && atom_ == other.atom_ &&
         operands_ == other.operands_;
}

bool TrustEnv::subset_of(const TrustEnv& other) const {
  return std::includes(other.hypotheses.begin(), other.hypotheses.end(),
                       hypotheses.begin(), hypotheses.end());
}

Label resolve_this(const Label& l, const Principal& self) {
  switch (l.kind()) {
    case Label::Kind::This:
      return Label::atom(self);
    case Label::Kind::Atom:
    case Label::Kind::Any:
      return l;
    case Label::Kind::Join:
      return Label::join_of(resolve_this(l.operands()[0], self),
                            resolve_this(l.operands()[1], self));
    case Label::Kind::Meet:
      return Label::meet_of(resolve_this(l.operands()[0], self),
                            resolve_this(l.operands()[1], self));
  }
  return l;
}

Label substitute(const Label& l, const std::map<Principal, Label>& mapping) {
  switch (l.kind()) {
    case Label::Kind::Atom: {
      auto it = mapping.find(l.principal());
      return it == mapping.end() ? l : it->second;
    }
    case Label::Kind::This:
    case Label::Kind::Any:
      return l;
    case Label::Kind::Join:
      return Label::join_of(substitute(l.operands()[0], mapping),
                            substitute(l.operands()[1], mapping));
    case Label::Kind::Meet:
      return Label::meet_of(substitute(l.operands()[0], mapping),
                            substitute(l.operands()[1], mapping));
  }
  return l;
}

namespace {

// Drops every clause that is a strict superset of another clause.
Dnf minimize(Dnf d) {
  Dnf out;
  for (const auto& c : d) {
    bool subsumed = false;
    for (const auto& other : d) {
      if (&other != &c && other.size() < c.size() &&
          std::includes(c.begin(), c.end(), other.begin(), other.end())) {
        subsumed = true;
        break;
      }
    }
    if (!subsumed) out.insert(c);
  }
  return out;
}

Clause close_clause(Clause c, const TrustEnv& t) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [a, b] : t.hypotheses) {
      if (c.count(a) && !c.count(b)) {
        c.insert(b);
        changed = true;
      }
    }
  }
  return c;
}

void require_resolved(const Label& l) {
  if (l.contains_this())
    throw LabelError("label contains unresolved `this`: " + to_string(l));
}

}  // namespace

Dnf to_dnf(const Label& l) {
  require_resolved(l);
  switch (l.kind()) {
    case Label::Kind::Atom:
      return Dnf{Clause{l.principal()}};
    case Label::Kind::Any:
      return Dnf{Clause{}};
    case Label::Kind::Join: {
      Dnf a = to_dnf(l.operands()[0]);
      Dnf b = to_dnf(l.operands()[1]);
      a.insert(b.begin(), b.end());
      return minimize(std::move(a));
    }
    case Label::Kind::Meet: {
      Dnf a = to_dnf(l.operands()[0]);
      Dnf b = to_dnf(l.operands()[1]);
      Dnf out;
      for (const auto& ca : a) {
        for (const auto& cb : b) {
          Clause c = ca;
          c.insert(cb.begin(), cb.end());
          out.insert(std::move(c));
        }
      }
      return minimize(std::move(out));
    }
    case Label::Kind::This:
      break;
  }
  throw LabelError("unreachable label kind");
}

Label from_dnf(const Dnf& d) {
  if (d.empty()) throw LabelError("empty DNF has no label (no bottom element)");
  std::optional<Label> result;
  for (const auto& clause : d) {
    std::optional<Label> term;
    for (const auto& p : clause) {
      term = term ? Label::meet_of(*term, Label::atom(p)) : Label::atom(p);
    }
    if (!term) return Label::any();
    result = result ? Label::join_of(*result, *term) : *term;
  }
  return *result;
}

Label normalize(const Label& l) { return from_dnf(to_dnf(l)); }

namespace {

// Bitmask form of the same decision procedure, used when the query mentions
// at most 64 distinct atoms.
using Mask = std::uint64_t;
using MaskDnf = boost::container::small_vector<Mask, 8>;

struct AtomIndex {
  boost::container::small_vector<const Principal*, 8> atoms;

  int find(const Principal& p) const {
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (*atoms[i] == p) return static_cast<int>(i);
    return -1;
  }
  bool add(const Principal& p) {
    if (find(p) >= 0) return true;
    if (atoms.size() == 64) return false;
    atoms.push_back(&p);
    return true;
  }
  bool collect(const Label& l) {
    if (l.kind() == Label::Kind::Atom) return add(l.principal());
    for (const auto& o : l.operands())
      if (!collect(o)) return false;
    return true;
  }
};

MaskDnf minimize_masks(MaskDnf d) {
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  MaskDnf out;
  for (Mask c : d) {
    bool subsumed = std::any_of(d.begin(), d.end(), [&](Mask o) {
      return o != c && (o & c) == o;
    });
    if (!subsumed) out.push_back(c);
  }
  return out;
}

MaskDnf to_masks(const Label& l, const AtomIndex& idx) {
  switch (l.kind()) {
    case Label::Kind::Atom:
      return {Mask{1} << idx.find(l.principal())};
    case Label::Kind::Any:
      return {Mask{0}};
    case Label::Kind::Join: {
      MaskDnf a = to_masks(l.operands()[0], idx);
      MaskDnf b = to_masks(l.operands()[1], idx);
      a.insert(a.end(), b.begin(), b.end());
      return minimize_masks(std::move(a));
    }
    case Label::Kind::Meet: {
      MaskDnf a = to_masks(l.operands()[0], idx);
      MaskDnf b = to_masks(l.operands()[1], idx);
      MaskDnf out;
      out.reserve(a.size() * b.size());
      for (Mask x : a)
        for (Mask y : b) out.push_back(x | y);
      return minimize_masks(std::move(out));
    }
    case Label::Kind::This:
      break;
  }
  throw LabelError("unresolved `this`");
}

std::optional<bool> flows_to_masks(const Label& from, const Label& to,
                                   const TrustEnv& t) {
  AtomIndex idx;
  if (!idx.collect(from) || !idx.collect(to)) return std::nullopt;
  boost::container::small_vector<std::pair<Mask, Mask>, 8> hyps;
  for (const auto& [a, b] : t.hypotheses) {
    if (!idx.add(a) || !idx.add(b)) return std::nullopt;
    hyps.emplace_back(Mask{1} << idx.find(a), Mask{1} << idx.find(b));
  }
  MaskDnf lhs = to_masks(from, idx);
  MaskDnf rhs = to_masks(to, idx);
  for (Mask c : lhs) {
    bool changed = !hyps.empty();
    while (changed) {
      changed = false;
      for (auto [a, b] : hyps) {
        if ((c & a) && !(c & b)) {
          c |= b;
          changed = true;
        }
      }
    }
    bool entailed =
        std::any_of(rhs.begin(), rhs.end(), [&](Mask r) { return (c & r) == r; });
    if (!entailed) return false;
  }
  return true;
}

}  // namespace

bool flows_to(const Label& from, const Label& to, const TrustEnv& t) {
  require_resolved(from);
  require_resolved(to);
  if (auto fast = flows_to_masks(from, to, t)) return *fast;
  Dnf lhs = to_dnf(from);
  Dnf rhs = to_dnf(to);
  for (const auto& c : lhs) {
    Clause closed = close_clause(c, t);
    bool entailed = std::any_of(rhs.begin(), rhs.end(), [&](const Clause& r) {
      return std::includes(closed.begin(), closed.end(), r.begin(), r.end());
    });
    if (!entailed) return false;
  }
  return true;
}

Label join(const Label& a, const Label& b) {
  return normalize(Label::join_of(a, b));
}

Label meet(const Label& a, const Label& b) {
  return normalize(Label::meet_of(a, b));
}

bool equivalent(const Label& a, const Label& b) {
  return to_dnf(a) == to_dnf(b);
}

namespace {

// Truth table of a label over all valuations of `atoms`: bit v of the table
// is the label's value when atom i is true exactly when bit i of v is set.
using Table = std::vector<std::uint64_t>;
using Atoms = std::vector<const Principal*>;

std::size_t atom_position(const Atoms& atoms, const Principal& p) {
  for (std::size_t i = 0; i < atoms.size(); ++i)
    if (*atoms[i] == p) return i;
  throw LabelError("oracle: atom not indexed");
}

void gather(const Principal& p, Atoms& atoms) {
  for (const Principal* q : atoms)
    if (*q == p) return;
  atoms.push_back(&p);
}

void gather(const Label& l, Atoms& atoms) {
  if (l.kind() == Label::Kind::Atom) gather(l.principal(), atoms);
  for (const auto& o : l.operands()) gather(o, atoms);
}

// Bit pattern of atom i within one 64-row word (rows 0..63).
constexpr std::uint64_t kAtomWord[6] = {
    0xAAAAAAAAAAAAAAAAull, 0xCCCCCCCCCCCCCCCCull, 0xF0F0F0F0F0F0F0F0ull,
    0xFF00FF00FF00FF00ull, 0xFFFF0000FFFF0000ull, 0xFFFFFFFF00000000ull,
};

Table atom_table(std::size_t index, std::size_t n) {
  const std::size_t rows = std::size_t{1} << n;
  Table t((rows + 63) / 64, 0);
  for (std::size_t w = 0; w < t.size(); ++w) {
    if (index < 6) {
      t[w] = kAtomWord[index];
    } else {
      t[w] = ((w >> (index - 6)) & 1) ? ~std::uint64_t{0} : 0;
    }
  }
  if (rows < 64) t[0] &= (std::uint64_t{1} << rows) - 1;
  return t;
}

Table ones(std::size_t n) {
  const std::size_t rows = std::size_t{1} << n;
  Table t((rows + 63) / 64, ~std::uint64_t{0});
  if (rows < 64) t[0] = (std::uint64_t{1} << rows) - 1;
  return t;
}

Table eval(const Label& l, const Atoms& atoms) {
  switch (l.kind()) {
    case Label::Kind::Atom:
      return atom_table(atom_position(atoms, l.principal()), atoms.size());
    case Label::Kind::Any:
      return ones(atoms.size());
    case Label::Kind::Join:
    case Label::Kind::Meet: {
      Table a = eval(l.operands()[0], atoms);
      Table b = eval(l.operands()[1], atoms);
      for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = l.kind() == Label::Kind::Join ? (a[i] | b[i]) : (a[i] & b[i]);
      return a;
    }
    case Label::Kind::This:
      break;
  }
  throw LabelError("unresolved `this` in oracle");
}

// Single-word variant for at most six atoms.
std::uint64_t eval_word(const Label& l, const Atoms& atoms) {
  switch (l.kind()) {
    case Label::Kind::Atom:
      return kAtomWord[atom_position(atoms, l.principal())];
    case Label::Kind::Any:
      return ~std::uint64_t{0};
    case Label::Kind::Join:
      return eval_word(l.operands()[0], atoms) | eval_word(l.operands()[1], atoms);
    case Label::Kind::Meet:
      return eval_word(l.operands()[0], atoms) & eval_word(l.operands()[1], atoms);
    case Label::Kind::This:
      break;
  }
  throw LabelError("unresolved `this` in oracle");
}

}  // namespace

bool oracle_flows_to(const Label& from, const Label& to, const TrustEnv& t) {
  require_resolved(from);
  require_resolved(to);
  Atoms atoms;
  gather(from, atoms);
  gather(to, atoms);
  for (const auto& [a, b] : t.hypotheses) {
    gather(a, atoms);
    gather(b, atoms);
  }
  if (atoms.size() > 16) throw LabelError("oracle limited to 16 atoms");
  if (atoms.size() <= 6) {
    const std::size_t rows = std::size_t{1} << atoms.size();
    std::uint64_t admissible =
        rows == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << rows) - 1;
    for (const auto& [a, b] : t.hypotheses)
      admissible &= ~kAtomWord[atom_position(atoms, a)] | kAtomWord[atom_position(atoms, b)];
    return (admissible & eval_word(from, atoms) & ~eval_word(to, atoms)) == 0;
  }
  // A valuation is admissible when it satisfies every hypothesis a -> b.
  Table admissible = ones(atoms.size());
  for (const auto& [a, b] : t.hypotheses) {
    Table ta = atom_table(atom_position(atoms, a), atoms.size());
    Table tb = atom_table(atom_position(atoms, b), atoms.size());
    for (std::size_t i = 0; i < admissible.size(); ++i) admissible[i] &= ~ta[i] | tb[i];
  }
  Table lhs = eval(from, atoms);
  Table rhs = eval(to, atoms);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    if (admissible[i] & lhs[i] & ~rhs[i]) return false;
  return true;
}

namespace {

void print(const Label& l, std::string& out, bool in_meet) {
  switch (l.kind()) {
    case Label::Kind::Atom:
      out += l.principal().id;
      return;
    case Label::Kind::This:
      out += "this";
      return;
    case Label::Kind::Any:
      out += "any";
      return;
    case Label::Kind::Join:
      if (in_meet) out += "(";
      print(l.operands()[0], out, false);
      out += " \\/ ";
      print(l.operands()[1], out, false);
      if (in_meet) out += ")";
      return;
    case Label::Kind::Meet:
      print(l.operands()[0], out, true);
      out += " /\\ ";
      print(l.operands()[1], out, true);
      return;
  }
}

class LabelParser {
 public:
  explicit LabelParser(std::string_view s) : s_(s) {}

  Label parse() {
    Label l = parse_join();
    skip_ws();
    if (pos_ != s_.size())
      throw LabelError("unexpected text in label at offset " +
                       std::to_string(pos_));
    return l;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
  }
  bool eat(std::string_view tok) {
    skip_ws();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  Label parse_join() {
    Label l = parse_meet();
    while (eat("\\/")) l = Label::join_of(l, parse_meet());
    return l;
  }
  Label parse_meet() {
    Label l = parse_primary();
    while (eat("/\\")) l = Label::meet_of(l, parse_primary());
    return l;
  }
  Label parse_primary() {
    if (eat("(")) {
      Label l = parse_join();
      if (!eat(")")) throw LabelError("expected `)` in label");
      return l;
    }
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < s_.size() && s_[pos_] == '@') ++pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
            s_[pos_] == '$' || s_[pos_] == '#'))
      ++pos_;
    std::string word(s_.substr(start, pos_ - start));
    if (word.empty() || word == "@")
      throw LabelError("expected label atom at offset " + std::to_string(start));
    if (word == "any") return Label::any();
    if (word == "this") return Label::this_label();
    return Label::atom(word);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_string(const Label& l) {
  std::string out;
  print(l, out, false);
  return out;
}

std::string canonical_string(const Label& l) {
  if (l.contains_this()) {
    // Keep `this` symbolic: resolve to a reserved atom that cannot be parsed
    // from source text, print, then restore the spelling.
    static const Principal kSelf{"%this"};
    std::string s = to_string(normalize(resolve_this(l, kSelf)));
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
      if (s.compare(i, 5, "%this") == 0) {
        out += "this";
        i += 5;
      } else {
        out += s[i++];
      }
    }
    return out;
  }
  return to_string(normalize(l));
}

Label parse_label(std::string_view text) { return LabelParser(text).parse(); }

}  // namespace scif
