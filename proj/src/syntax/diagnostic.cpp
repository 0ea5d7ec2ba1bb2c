#include "scif/diagnostic.hpp"

#include <json.hpp>

namespace scif {

std::string Diagnostic::to_text() const {
  std::string out = file.empty() ? std::string("<input>") : file;
  out += ":" + to_string(pos) + ": ";
  out += severity == Severity::Error ? "error" : "warning";
  out += "[" + rule + "]: " + message;
  if (!labels.empty()) {
    out += " (";
    for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? ", " : "") + labels[i];
    out += ")";
  }
  return out;
}

std::string Diagnostic::to_json_line() const {
  nlohmann::ordered_json j;
  j["severity"] = severity == Severity::Error ? "error" : "warning";
  j["file"] = file;
  j["line"] = pos.line;
  j["col"] = pos.col;
  j["rule"] = rule;
  j["message"] = message;
  j["labels"] = labels;
  return j.dump();
}

namespace {

std::string summarize(const Diagnostics& d) {
  if (d.empty()) return "parse error";
  return d.front().to_text();
}

}  // namespace

ParseError::ParseError(Diagnostics d)
    : std::runtime_error(summarize(d)), diags_(std::move(d)) {}

}  // namespace scif
