#include <fstream>
#include <sstream>

#include "scif/interpreter.hpp"
#include "scif/syntax.hpp"

namespace scif::rt {

using namespace ast;
using ojson = nlohmann::ordered_json;

RValue RValue::of_bool(bool b) {
  RValue v;
  v.kind = Kind::Bool;
  v.boolean = b;
  return v;
}

RValue RValue::of_int(BigInt i) {
  RValue v;
  v.kind = Kind::Int;
  v.integer = std::move(i);
  return v;
}

RValue RValue::addr(std::string a, std::string view) {
  RValue v;
  v.kind = Kind::Addr;
  v.name = std::move(a);
  v.view = std::move(view);
  return v;
}

RValue RValue::exn(std::string name, std::vector<RValue> args) {
  RValue v;
  v.kind = Kind::Exn;
  v.name = std::move(name);
  v.args = std::move(args);
  return v;
}

RValue RValue::failure(std::string cause, std::vector<RValue> payload) {
  RValue v;
  v.kind = Kind::Failure;
  v.name = std::move(cause);
  v.args = std::move(payload);
  return v;
}

namespace failures {
bool is_security_check(const std::string& cause) {
  return cause == kDispatchMismatch || cause == kCallerGate || cause == kLockBypassDenied;
}
}  // namespace failures

std::string to_string(const RValue& v) {
  auto list = [&]() {
    std::string s;
    for (std::size_t i = 0; i < v.args.size(); ++i) s += (i ? ", " : "") + to_string(v.args[i]);
    return s;
  };
  switch (v.kind) {
    case RValue::Kind::Unit: return "()";
    case RValue::Kind::Bool: return v.boolean ? "true" : "false";
    case RValue::Kind::Int: return v.integer.str();
    case RValue::Kind::Addr: return v.name;
    case RValue::Kind::Ref: return "ref#" + std::to_string(v.ref);
    case RValue::Kind::Exn:
    case RValue::Kind::Failure: return v.name + "(" + list() + ")";
  }
  return "?";
}

ojson to_json(const RValue& v) {
  auto list = [&]() {
    ojson a = ojson::array();
    for (const auto& x : v.args) a.push_back(to_json(x));
    return a;
  };
  switch (v.kind) {
    case RValue::Kind::Unit: return "()";
    case RValue::Kind::Bool: return v.boolean;
    case RValue::Kind::Int:
      if (v.integer >= std::numeric_limits<std::int64_t>::min() &&
          v.integer <= std::numeric_limits<std::int64_t>::max())
        return static_cast<std::int64_t>(v.integer);
      return ojson{{"int", v.integer.str()}};
    case RValue::Kind::Addr:
      if (v.view.empty()) return v.name;
      return ojson{{"addr", v.name}, {"view", v.view}};
    case RValue::Kind::Ref: return ojson{{"ref", v.ref}};
    case RValue::Kind::Exn: return ojson{{"exception", v.name}, {"args", list()}};
    case RValue::Kind::Failure: return ojson{{"failure", v.name}, {"args", list()}};
  }
  return nullptr;
}

namespace {

ojson big_json(const BigInt& i) {
  if (i >= std::numeric_limits<std::int64_t>::min() &&
      i <= std::numeric_limits<std::int64_t>::max())
    return static_cast<std::int64_t>(i);
  return i.str();
}

BigInt big_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return BigInt(j.get<std::int64_t>());
  if (j.is_number_unsigned()) return BigInt(j.get<std::uint64_t>());
  if (j.is_string()) return BigInt(j.get<std::string>());
  if (j.is_object() && j.contains("int")) return BigInt(j["int"].get<std::string>());
  throw std::invalid_argument("expected an integer, got " + j.dump());
}

// Splits "field[k1][k2]" into the field name and its keys.
std::pair<std::string, std::vector<std::string>> split_key(const std::string& k) {
  auto open = k.find('[');
  std::vector<std::string> keys;
  if (open == std::string::npos) return {k, keys};
  std::string field = k.substr(0, open);
  std::size_t i = open;
  while (i < k.size() && k[i] == '[') {
    auto close = k.find(']', i);
    keys.push_back(k.substr(i + 1, close - i - 1));
    i = close + 1;
  }
  return {field, keys};
}

}  // namespace

std::string Heap::serialize() const {
  ojson j;
  ojson cs = ojson::object();
  for (const auto& [addr, c] : contracts) {
    ojson st = ojson::object();
    for (const auto& [k, v] : c.storage) st[k] = to_json(v);
    cs[addr] = {{"type", c.type}, {"storage", st}, {"trust", c.trust}};
  }
  j["contracts"] = cs;
  ojson bs = ojson::object();
  for (const auto& [a, b] : balances) bs[a] = big_json(b);
  j["balances"] = bs;
  ojson rs = ojson::object();
  for (const auto& [id, v] : refs) rs[std::to_string(id)] = to_json(v);
  j["refs"] = rs;
  j["next_ref"] = next_ref;
  j["next_new"] = next_new;
  return j.dump();
}

BigInt Heap::balance(const std::string& a) const {
  auto it = balances.find(a);
  return it == balances.end() ? BigInt(0) : it->second;
}

ojson TraceEvent::to_json() const {
  ojson j;
  j["kind"] = kind;
  if (!caller.empty()) j["caller"] = caller;
  if (!callee.empty()) j["callee"] = callee;
  if (!method.empty()) j["method"] = method;
  if (pc_env) j["pc_env"] = canonical_string(*pc_env);
  if (pc_ex) j["pc_ex"] = canonical_string(*pc_ex);
  if (low_integrity) j["low_integrity"] = true;
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

std::string to_string(TransactionReceipt::Outcome o) {
  switch (o) {
    case TransactionReceipt::Outcome::Committed: return "Committed";
    case TransactionReceipt::Outcome::Reverted: return "Reverted";
    case TransactionReceipt::Outcome::UncaughtException: return "UncaughtException";
  }
  return "?";
}

ojson TransactionReceipt::to_json(bool with_trace) const {
  ojson j;
  j["outcome"] = to_string(outcome);
  j["value"] = rt::to_json(value);
  j["steps"] = steps;
  if (with_trace) {
    ojson t = ojson::array();
    for (const auto& e : trace) t.push_back(e.to_json());
    j["trace"] = t;
  }
  return j;
}

RValue zero_value(const Type& t) {
  switch (t.base) {
    case BaseKind::Bool: return RValue::of_bool(false);
    case BaseKind::Int: return RValue::of_int(0);
    case BaseKind::Address: return RValue::addr("@0");
    case BaseKind::Contract: return RValue::addr("@0", t.name);
    default: return RValue::unit();
  }
}

RValue value_from_json(const Type& t, const nlohmann::json& j) {
  switch (t.base) {
    case BaseKind::Unit: return RValue::unit();
    case BaseKind::Bool:
      if (!j.is_boolean()) throw std::invalid_argument("expected a bool, got " + j.dump());
      return RValue::of_bool(j.get<bool>());
    case BaseKind::Int: return RValue::of_int(big_from_json(j));
    case BaseKind::Address:
    case BaseKind::Contract: {
      if (!j.is_string() || j.get<std::string>().rfind('@', 0) != 0)
        throw std::invalid_argument("expected an @address, got " + j.dump());
      return RValue::addr(j.get<std::string>(),
                          t.base == BaseKind::Contract ? t.name : std::string());
    }
    default:
      throw std::invalid_argument("values of type " + print_type(t) + " cannot be given literally");
  }
}

namespace {

void load_storage(ContractState& st, const ContractTable& ct, const std::string& prefix,
                  const Type& t, const nlohmann::json& j) {
  if (t.base != BaseKind::Mapping) {
    st.storage[prefix] = value_from_json(t, j);
    return;
  }
  if (!j.is_object()) throw std::invalid_argument("mapping " + prefix + " needs an object");
  for (const auto& [k, v] : j.items()) {
    std::string key = k;
    if (t.key_base == BaseKind::Int) key = BigInt(k).str();
    load_storage(st, ct, prefix + "[" + key + "]", *t.elem, v);
  }
}

}  // namespace

void deploy(ChainState& chain, const std::string& address, const std::string& type) {
  const ContractTable& ct = *chain.table;
  if (!ct.has(type)) throw std::invalid_argument("unknown contract type " + type);
  if (ct.at(type).is_interface) throw std::invalid_argument("cannot deploy interface " + type);
  ContractState st;
  st.type = type;
  for (auto c = std::optional<std::string>(type); c && ct.has(*c); c = ct.at(*c).superclass)
    for (const auto& p : ct.at(*c).declared_trust) st.trust.insert(p);
  chain.heap.contracts[address] = std::move(st);
  chain.heap.balances.emplace(address, 0);
}

ChainState chain_state_from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported chain-state version");
  ChainState chain;
  std::vector<std::string> paths;
  for (const auto& s : j.at("sources")) {
    std::string p = s.get<std::string>();
    chain.sources.push_back(p);
    paths.push_back(p.rfind('/', 0) == 0 || base_dir.empty() ? p : base_dir + "/" + p);
  }
  ChainState out = chain_state_from_json(j, std::make_shared<const ContractTable>(load_files(paths)));
  out.sources = std::move(chain.sources);
  return out;
}

ChainState chain_state_from_json(const nlohmann::json& j,
                                 std::shared_ptr<const ast::ContractTable> table) {
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported chain-state version");
  ChainState chain;
  chain.table = std::move(table);
  const ContractTable& ct = *chain.table;
  if (j.contains("users")) {
    for (const auto& [u, bal] : j["users"].items()) {
      chain.users.insert(u);
      chain.heap.balances[u] = big_from_json(bal);
    }
  }
  if (j.contains("contracts")) {
    for (const auto& [addr, c] : j["contracts"].items()) {
      std::string type = c.at("type").get<std::string>();
      deploy(chain, addr, type);
      ContractState& st = chain.heap.contracts[addr];
      if (c.contains("balance")) chain.heap.balances[addr] = big_from_json(c["balance"]);
      if (c.contains("trust"))
        for (const auto& p : c["trust"]) st.trust.insert(p.get<std::string>());
      if (c.contains("storage")) {
        for (const auto& [field, v] : c["storage"].items()) {
          const FieldDecl* f = find_field(ct, type, field);
          if (!f) throw std::invalid_argument("no field " + field + " in " + type);
          load_storage(st, ct, field, f->type, v);
        }
      }
    }
  }
  chain.heap.next_new = j.value("next_new", 0);
  return chain;
}

ChainState load_chain_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  auto slash = path.rfind('/');
  return chain_state_from_json(j, slash == std::string::npos ? "" : path.substr(0, slash));
}

ojson chain_state_to_json(const ChainState& chain) {
  ojson j;
  j["version"] = 1;
  j["sources"] = chain.sources;
  ojson users = ojson::object();
  for (const auto& u : chain.users) users[u] = big_json(chain.heap.balance(u));
  j["users"] = users;
  ojson cs = ojson::object();
  for (const auto& [addr, c] : chain.heap.contracts) {
    ojson storage = ojson::object();
    for (const auto& [k, v] : c.storage) {
      auto [field, keys] = split_key(k);
      ojson* slot = &storage[field];
      for (const auto& key : keys) slot = &(*slot)[key];
      RValue plain = v;
      plain.view.clear();
      *slot = to_json(plain);
    }
    cs[addr] = {{"type", c.type},
                {"balance", big_json(chain.heap.balance(addr))},
                {"trust", c.trust},
                {"storage", storage}};
  }
  j["contracts"] = cs;
  j["next_new"] = chain.heap.next_new;
  return j;
}

}  // namespace scif::rt
