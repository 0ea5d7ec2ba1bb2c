#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "scif/ast.hpp"
#include "scif/label.hpp"
#include "scif/typecheck.hpp"

namespace scif::rt {

struct RValue {
  enum class Kind { Unit, Bool, Int, Addr, Ref, Exn, Failure };
  Kind kind = Kind::Unit;
  bool boolean = false;
  BigInt integer;
  // Address, exception constructor or failure constructor.
  std::string name;
  // Contract type the holder believes the address has; drives dispatch.
  std::string view;
  int ref = -1;
  std::vector<RValue> args;

  static RValue unit() { return {}; }
  static RValue of_bool(bool b);
  static RValue of_int(BigInt i);
  static RValue addr(std::string a, std::string view = {});
  static RValue exn(std::string name, std::vector<RValue> args);
  static RValue failure(std::string cause, std::vector<RValue> payload = {});

  bool operator==(const RValue&) const = default;
};

std::string to_string(const RValue& v);
nlohmann::ordered_json to_json(const RValue& v);

// Reserved failure constructors. `fail v` raises Fail(v).
namespace failures {
inline constexpr const char* kUser = "Fail";
inline constexpr const char* kDispatchMismatch = "DispatchMismatch";
inline constexpr const char* kCallerGate = "CallerGate";
inline constexpr const char* kLockBypassDenied = "LockBypassDenied";
inline constexpr const char* kCastFailed = "CastFailed";
inline constexpr const char* kDivisionByZero = "DivisionByZero";
inline constexpr const char* kInsufficientFunds = "InsufficientFunds";
inline constexpr const char* kNoSuchContract = "NoSuchContract";
inline constexpr const char* kNoSuchMethod = "NoSuchMethod";
inline constexpr const char* kBudget = "BudgetExhausted";
inline constexpr const char* kStuck = "Stuck";
inline constexpr const char* kUndeclaredException = "UndeclaredException";

// Failures raised by a dynamic security check rather than by program logic.
bool is_security_check(const std::string& cause);
}  // namespace failures

struct ContractState {
  std::string type;
  // Flat storage: "field" or "field[key][key2]". Missing entries read as
  // the zero value of their type.
  std::map<std::string, RValue> storage;
  // Principals this contract trusts, seeded from its declaration.
  std::set<std::string> trust;

  bool operator==(const ContractState&) const = default;
};

struct Heap {
  std::map<std::string, ContractState> contracts;
  // Native balances of every account, users and contracts alike.
  std::map<std::string, BigInt> balances;
  std::map<int, RValue> refs;
  int next_ref = 0;
  int next_new = 0;

  bool operator==(const Heap&) const = default;
  // Canonical serialization; equal heaps serialize to equal bytes.
  std::string serialize() const;
  BigInt balance(const std::string& a) const;
};

struct HeldLock {
  Label label;
  // Contract that acquired the lock; only its entries are gated by it.
  std::string owner;
};

struct TraceEvent {
  std::string kind{};
  std::string caller{};
  std::string callee{};
  std::string method{};
  std::optional<Label> pc_env{};
  std::optional<Label> pc_ex{};
  bool low_integrity = false;
  std::string detail{};

  nlohmann::ordered_json to_json() const;
};

struct TransactionReceipt {
  enum class Outcome { Committed, Reverted, UncaughtException };
  Outcome outcome = Outcome::Committed;
  RValue value;
  std::uint64_t steps = 0;
  std::vector<TraceEvent> trace;
  Heap post;

  nlohmann::ordered_json to_json(bool with_trace = false) const;
};

std::string to_string(TransactionReceipt::Outcome o);

// Persistent state shared between transactions.
struct ChainState {
  std::shared_ptr<const ast::ContractTable> table;
  std::vector<std::string> sources;
  std::set<std::string> users;
  Heap heap;
};

struct RunOptions {
  bool sigcheck = true;
  bool atomic_fastpath = true;
  bool typed_step = false;
  std::uint64_t budget = 1'000'000;
  // Typing contexts of the checked program, required by typed_step.
  const tc::NodeContexts* contexts = nullptr;
};

struct CallRequest {
  std::string origin;
  std::string receiver;
  std::string method;
  std::vector<RValue> args;
  BigInt value = 0;
};

class TypedStepError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Small-step machine for one transaction.
class Machine {
 public:
  using Env = std::map<std::string, RValue>;

  struct Activation {
    std::string self;
    std::string sender;
    const ast::MethodDecl* method = nullptr;
    // Callee label atoms (this, sender, address parameters) to addresses.
    std::map<Principal, Label> rho;
    Label pc;
    BigInt callvalue = 0;
  };

  struct Frame {
    enum class Kind {
      LetCont, TryCatch, Transaction, FunEnd, AtPc, WithLock, AtkCast, IgnoreLocks
    };
    Kind kind = Kind::LetCont;
    std::string binder;
    // LetCont body, Transaction rescue, or the Try expression owning handlers.
    const ast::Expr* body = nullptr;
    Env env;
    int snapshot = -1;
    Activation caller;
    Label saved_pc;
    HeldLock lock;
    std::string target;
  };

  enum class Mode { Eval, Value, Exception, Failure };

  Machine(const ChainState& chain, RunOptions opts);

  void start(const CallRequest& call);
  bool terminal() const { return done_; }
  void step();
  TransactionReceipt receipt() const;

  Heap& heap() { return heap_; }
  const Heap& heap() const { return heap_; }
  const std::vector<HeldLock>& locks() const { return locks_; }
  const std::vector<Frame>& frames() const { return frames_; }
  Mode mode() const { return mode_; }
  const RValue& result() const { return result_; }

  // Snapshots form a stack; rolling back to an id also drops newer ones.
  int snapshot();
  void rollback(int id);
  void discard(int id);
  std::size_t live_snapshots() const { return snapshots_.size(); }

  void acquire_lock(const Label& l, const std::string& owner);
  void release_lock(const Label& l, const std::string& owner);

 private:
  RValue eval(const ast::Value& v);
  Label concrete(const Label& l) const;
  void eval_step(const ast::Expr& e);
  void value_step();
  void exception_step();
  void failure_step();
  void dispatch(const RValue& receiver, const std::string& method, std::vector<RValue> args,
                const BigInt& value, bool low_integrity);
  void raise(const std::string& cause, std::vector<RValue> payload = {},
             const std::string& detail = {});
  void finish(TransactionReceipt::Outcome outcome);
  bool ignoring_locks() const;
  const ast::Type& field_type(const std::string& field) const;
  RValue read_storage(const std::string& field, const std::vector<RValue>& keys) const;
  void check_typed_step(const ast::Expr& e) const;

  const ast::ContractTable& ct_;
  RunOptions opts_;
  Heap heap_;
  Heap pre_;
  std::vector<Heap> snapshots_;
  std::vector<Frame> frames_;
  std::vector<HeldLock> locks_;
  Mode mode_ = Mode::Eval;
  const ast::Expr* expr_ = nullptr;
  Env env_;
  RValue result_;
  Activation act_;
  std::vector<TraceEvent> trace_;
  std::uint64_t steps_ = 0;
  bool done_ = false;
  TransactionReceipt::Outcome outcome_ = TransactionReceipt::Outcome::Committed;
};

TransactionReceipt run_transaction(const ChainState& chain, const CallRequest& call,
                                   const RunOptions& opts = {});

// Hypotheses p => of for every principal p that `of` trusts.
TrustEnv store_env(const Heap& heap, const std::string& of);

// Whether `of` believes the flow a => b under its trust store.
bool runtime_trusts(const Heap& heap, const std::string& of, const Label& a, const Label& b);

bool bypass_locks(const Heap& heap, const std::vector<HeldLock>& locks,
                  const std::string& callee, const Label& caller_integrity);

// Deploys a contract with zero-valued storage, returning its address.
void deploy(ChainState& chain, const std::string& address, const std::string& type);

// Converts a JSON literal to a runtime value of the given type.
RValue value_from_json(const ast::Type& t, const nlohmann::json& j);
RValue zero_value(const ast::Type& t);

// Chain-state files: versioned JSON with sources, accounts and contracts.
ChainState load_chain_state(const std::string& path);
ChainState chain_state_from_json(const nlohmann::json& j, const std::string& base_dir);
// Same, with the program already parsed; `sources` in `j` are not read.
ChainState chain_state_from_json(const nlohmann::json& j,
                                 std::shared_ptr<const ast::ContractTable> table);
nlohmann::ordered_json chain_state_to_json(const ChainState& chain);

}  // namespace scif::rt
