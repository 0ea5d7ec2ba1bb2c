#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scif/interpreter.hpp"
#include "scif/syntax.hpp"

namespace scif::harness {

struct CdaEvent {
  std::size_t index = 0;
  Label pc_env;
  Label pc_ex;
  Label target;
};

// Call events whose environment integrity does not reach `target` while the
// callee's external pc does, judged under `trust`.
std::vector<CdaEvent> detect_cda_events(const std::vector<rt::TraceEvent>& trace,
                                        const Label& target, const TrustEnv& trust = {});

// Named corpus mutations: identity, remove-lock, make-public:<method>,
// late-update:<field>, swallow-failure.
ast::ContractDecl mutate_corpus(const ast::ContractDecl& c, const std::string& mutation);
ast::ContractTable mutate_table(const ast::ContractTable& ct, const std::string& contract,
                                const std::string& mutation);

struct TxExpectation {
  std::optional<std::string> outcome;
  std::optional<std::string> failure;
  bool heap_unchanged = false;
};

struct TxSpec {
  std::string origin;
  std::string receiver;
  std::string method;
  nlohmann::json args = nlohmann::json::array();
  nlohmann::json value = 0;
  std::optional<TxExpectation> expect;
  std::optional<TxExpectation> expect_unsafe;
};

struct Scenario {
  std::string name;
  std::string description;
  std::string base_dir;
  nlohmann::json setup;
  std::vector<std::pair<std::string, std::string>> mutations;
  // Expected first diagnostic of the (mutated) program, or "ok" for none.
  nlohmann::json expect_typecheck;
  std::vector<TxSpec> transactions;
  std::vector<nlohmann::json> predicates;
};

Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir);
Scenario load_scenario(const std::string& path);
// All *.json scenarios of a directory, sorted by name.
std::vector<Scenario> load_scenarios(const std::string& dir);

struct ScenarioOptions {
  bool sigcheck = true;
  bool atomic_fastpath = true;
  bool typed_step = false;
};

struct ScenarioReport {
  std::string name;
  bool pass = true;
  std::vector<std::string> diffs;
  std::vector<rt::TransactionReceipt> receipts;
  std::vector<std::string> pre_heaps;
  std::size_t cda_events = 0;

  nlohmann::ordered_json to_json() const;
};

// Converts JSON call arguments using the receiver method's parameter types.
std::vector<rt::RValue> call_args(const rt::ChainState& chain, const std::string& receiver,
                                  const std::string& method, const nlohmann::json& args);

ScenarioReport run_scenario(const Scenario& s, const ScenarioOptions& opts = {});

// Runs scenarios on a thread pool; reports keep the input order.
std::vector<ScenarioReport> run_scenarios(const std::vector<Scenario>& ss,
                                          const ScenarioOptions& opts = {});

// Root of the repository's corpus and scenario files.
std::string source_dir();

// ---- adversarial sweep ----

struct AttackerProgram {
  std::string name;
  std::string source;
  // Interface the attacker implements so victims accept it as a callback.
  std::string implements;
};

// Deterministic attacker contract for a seed. Seed 0 opens with the
// token-as-router cast against the swap aggregator.
AttackerProgram gen_attacker(std::uint64_t seed);

// The well-typed victim corpus deployed with balances, plus an attacker at
// @atk. `attacker` may be empty.
rt::ChainState sweep_world(const AttackerProgram* attacker);

struct SweepResult {
  std::size_t programs = 0;
  std::size_t transactions = 0;
  std::size_t cda_events = 0;
  // Transaction outcomes, keyed by outcome or failure constructor.
  std::map<std::string, std::size_t> outcomes;
  std::vector<std::string> examples;
};

SweepResult cda_sweep(std::uint64_t first_seed, std::size_t count, bool sigcheck = true);

// ---- random well-typed programs ----

struct GeneratedProgram {
  std::string source;
  // Public entry points: contract address, method and literal arguments.
  std::vector<TxSpec> calls;
  nlohmann::json setup;
  // Candidates generated before one type-checked.
  std::size_t attempts = 0;
};

// Returns a program that type-checks, retrying internally on rejection.
GeneratedProgram gen_well_typed(std::uint64_t seed);

// AST node count of a method body.
std::size_t node_count(const ast::Expr& e);

}  // namespace scif::harness
