#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "scif/ast.hpp"
#include "scif/diagnostic.hpp"

namespace scif::detail {

enum class Tok {
  Ident,
  Int,
  Addr,  // @name, including the @public modifier
  Punct,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  Pos pos;
};

// Throws ParseError on an unrecognized character.
std::vector<Token> lex(std::string_view src, const std::string& file);

}  // namespace scif::detail
