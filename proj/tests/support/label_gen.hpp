#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "scif/label.hpp"

namespace scif::testing {

inline const std::vector<Principal>& small_atoms() {
  static const std::vector<Principal> atoms = {{"A"}, {"B"}, {"C"}};
  return atoms;
}

// All labels over A, B, C and `any` whose syntax tree has height at most
// `height` (a leaf has height 1). Binary operands are emitted once per
// unordered pair: op(x, y) with index(x) <= index(y).
inline std::vector<Label> enumerate_labels(int height) {
  std::vector<Label> out;
  for (const auto& p : small_atoms()) out.push_back(Label::atom(p));
  out.push_back(Label::any());
  for (int h = 2; h <= height; ++h) {
    std::vector<Label> prev = out;
    std::vector<Label> next;
    for (const auto& p : small_atoms()) next.push_back(Label::atom(p));
    next.push_back(Label::any());
    for (std::size_t i = 0; i < prev.size(); ++i) {
      for (std::size_t j = i; j < prev.size(); ++j) {
        next.push_back(Label::join_of(prev[i], prev[j]));
        next.push_back(Label::meet_of(prev[i], prev[j]));
      }
    }
    out = std::move(next);
  }
  return out;
}

// Every set of at most `max_size` hypotheses a => b with distinct a, b drawn
// from A, B, C.
inline std::vector<TrustEnv> enumerate_trust_envs(std::size_t max_size) {
  std::vector<std::pair<Principal, Principal>> edges;
  for (const auto& a : small_atoms())
    for (const auto& b : small_atoms())
      if (a != b) edges.emplace_back(a, b);
  std::vector<TrustEnv> out;
  const std::size_t n = edges.size();
  for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
    if (static_cast<std::size_t>(__builtin_popcountll(bits)) > max_size) continue;
    TrustEnv t;
    for (std::size_t i = 0; i < n; ++i)
      if (bits >> i & 1) t.add(edges[i].first, edges[i].second);
    out.push_back(std::move(t));
  }
  return out;
}

inline Label random_label(std::mt19937_64& rng, int depth,
                          const std::vector<Principal>& atoms) {
  std::uniform_int_distribution<int> pick(0, depth > 0 ? 5 : 2);
  int k = pick(rng);
  if (k <= 1 || depth == 0) {
    if (std::uniform_int_distribution<int>(0, 7)(rng) == 0) return Label::any();
    std::uniform_int_distribution<std::size_t> a(0, atoms.size() - 1);
    return Label::atom(atoms[a(rng)]);
  }
  Label l = random_label(rng, depth - 1, atoms);
  Label r = random_label(rng, depth - 1, atoms);
  return k % 2 ? Label::join_of(l, r) : Label::meet_of(l, r);
}

inline TrustEnv random_trust(std::mt19937_64& rng, std::size_t max_size,
                             const std::vector<Principal>& atoms) {
  TrustEnv t;
  std::uniform_int_distribution<std::size_t> n(0, max_size);
  std::uniform_int_distribution<std::size_t> a(0, atoms.size() - 1);
  for (std::size_t i = n(rng); i > 0; --i) t.add(atoms[a(rng)], atoms[a(rng)]);
  return t;
}

}  // namespace scif::testing
