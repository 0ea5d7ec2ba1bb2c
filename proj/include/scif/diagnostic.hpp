#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "scif/ast.hpp"

namespace scif {

struct Diagnostic {
  enum class Severity { Error, Warning };

  Severity severity = Severity::Error;
  std::string file;
  Pos pos;
  std::string rule;
  std::string message;
  std::vector<std::string> labels;

  // One-line text form: `file:line:col: error[Rule]: message`.
  std::string to_text() const;
  // One JSON object, no trailing newline.
  std::string to_json_line() const;
};

using Diagnostics = std::vector<Diagnostic>;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(Diagnostics d);
  const Diagnostics& diagnostics() const { return diags_; }

 private:
  Diagnostics diags_;
};

}  // namespace scif
