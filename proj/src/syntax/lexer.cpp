#include "lexer.hpp"

#include <array>
#include <cctype>

namespace scif::detail {

namespace {

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

// Longest match first.
constexpr std::array<std::string_view, 11> kMultiPunct = {
    ":=", "==", "!=", "<=", ">=", "&&", "||", "->", "=>", "\\/", "/\\",
};

constexpr std::string_view kSinglePunct = "{}()[];,.:=<>+-*/%!";

}  // namespace

std::vector<Token> lex(std::string_view src, const std::string& file) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto error = [&](const std::string& msg) {
    Diagnostic d;
    d.file = file;
    d.pos = {line, col};
    d.rule = "Syntax";
    d.message = msg;
    throw ParseError({d});
  };

  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (src.substr(i, 2) == "//") {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (src.substr(i, 2) == "/*") {
      std::size_t end = src.find("*/", i + 2);
      if (end == std::string_view::npos) error("unterminated block comment");
      advance(end + 2 - i);
      continue;
    }
    Token t;
    t.pos = {line, col};
    std::size_t start = i;
    if (ident_start(c)) {
      while (i < src.size() && ident_char(src[i])) advance(1);
      t.kind = Tok::Ident;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i])))
        advance(1);
      t.kind = Tok::Int;
    } else if (c == '@') {
      advance(1);
      while (i < src.size() && (ident_char(src[i]) || src[i] == '#')) advance(1);
      if (i - start == 1) error("expected a name after `@`");
      t.kind = Tok::Addr;
    } else {
      std::size_t len = 0;
      for (auto p : kMultiPunct) {
        if (src.substr(i, p.size()) == p) {
          len = p.size();
          break;
        }
      }
      if (len == 0 && kSinglePunct.find(c) != std::string_view::npos) len = 1;
      if (len == 0) error(std::string("unexpected character `") + c + "`");
      advance(len);
      t.kind = Tok::Punct;
    }
    t.text = std::string(src.substr(start, i - start));
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.pos = {line, col};
  out.push_back(end);
  return out;
}

}  // namespace scif::detail
