#include "python/lexer.hpp"

#include <array>
#include <cctype>

namespace mcpauth::python {
namespace {

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view p) {
  if (p.empty() || p.size() > 2) return false;
  bool r = false, b = false, u = false, f = false;
  for (char c : p) {
    switch (std::tolower(static_cast<unsigned char>(c))) {
      case 'r': if (r) return false; r = true; break;
      case 'b': if (b) return false; b = true; break;
      case 'u': if (u) return false; u = true; break;
      case 'f': if (f) return false; f = true; break;
      default: return false;
    }
  }
  if (u && p.size() > 1) return false;
  if (b && f) return false;
  return true;
}

constexpr std::array<std::string_view, 24> kThreeAndTwoCharOps = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@="};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    indents_.push_back(0);
    bool at_line_start = true;
    while (pos_ < src_.size()) {
      if (at_line_start && depth_ == 0) {
        if (!handle_indentation()) continue;
        at_line_start = false;
      }
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        advance(1);
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
        continue;
      }
      if (c == '\\') {
        std::size_t p = pos_ + 1;
        if (p < src_.size() && src_[p] == '\r') ++p;
        if (p < src_.size() && src_[p] == '\n') {
          advance(p - pos_);
          newline();
          continue;
        }
        throw SyntaxError("unexpected character after line continuation", line_, col());
      }
      if (c == '\n') {
        if (depth_ == 0 && !tokens_.empty() && tokens_.back().type != TokenType::Newline &&
            tokens_.back().type != TokenType::Indent && tokens_.back().type != TokenType::Dedent) {
          emit(TokenType::Newline, pos_, pos_ + 1);
        }
        advance(1);
        newline();
        at_line_start = depth_ == 0;
        continue;
      }
      if (is_ident_start(static_cast<unsigned char>(c))) {
        std::size_t start = pos_;
        std::size_t p = pos_;
        while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p]))) ++p;
        if (p < src_.size() && (src_[p] == '"' || src_[p] == '\'') &&
            is_string_prefix(src_.substr(start, p - start))) {
          lex_string(start);
          continue;
        }
        advance(p - pos_);
        emit(TokenType::Name, start, pos_);
        continue;
      }
      if (c == '"' || c == '\'') {
        lex_string(pos_);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) ||
          (c == '.' && pos_ + 1 < src_.size() &&
           std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
        continue;
      }
      lex_operator();
    }
    if (!tokens_.empty() && tokens_.back().type != TokenType::Newline &&
        tokens_.back().type != TokenType::Dedent) {
      emit(TokenType::Newline, pos_, pos_);
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenType::Dedent, pos_, pos_);
    }
    emit(TokenType::End, pos_, pos_);
    return std::move(tokens_);
  }

 private:
  int col() const { return static_cast<int>(pos_ - line_start_) + 1; }

  void advance(std::size_t n) { pos_ += n; }

  void newline() {
    ++line_;
    line_start_ = pos_;
  }

  void emit(TokenType type, std::size_t begin, std::size_t end) {
    Token t;
    t.type = type;
    t.text = std::string(src_.substr(begin, end - begin));
    t.begin = begin;
    t.end = end;
    t.line = token_line_ ? token_line_ : line_;
    t.column = token_line_ ? token_col_ : static_cast<int>(begin - line_start_) + 1;
    token_line_ = 0;
    tokens_.push_back(std::move(t));
  }

  // Returns false if the line was blank (consumed entirely).
  bool handle_indentation() {
    int width = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      if (src_[p] == ' ') {
        ++width;
      } else if (src_[p] == '\t') {
        width = (width / 8 + 1) * 8;
      } else if (src_[p] == '\f') {
        width = 0;
      } else {
        break;
      }
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    char c = src_[p];
    if (c == '\n' || c == '#' || (c == '\r' && p + 1 < src_.size() && src_[p + 1] == '\n')) {
      while (p < src_.size() && src_[p] != '\n') ++p;
      pos_ = p;
      if (pos_ < src_.size()) {
        advance(1);
        newline();
      }
      return false;
    }
    if (c == '\\') {
      pos_ = p;
      return true;
    }
    pos_ = p;
    if (width > indents_.back()) {
      indents_.push_back(width);
      emit(TokenType::Indent, pos_, pos_);
    } else {
      while (width < indents_.back()) {
        indents_.pop_back();
        emit(TokenType::Dedent, pos_, pos_);
      }
      if (width != indents_.back()) throw SyntaxError("inconsistent dedent", line_, col());
    }
    return true;
  }

  void lex_string(std::size_t start) {
    int start_line = line_;
    int start_col = static_cast<int>(start - line_start_) + 1;
    std::size_t len = scan_string(src_, start);
    if (len == 0) throw SyntaxError("unterminated string literal", start_line, start_col);
    for (std::size_t i = pos_; i < start + len; ++i) {
      if (src_[i] == '\n') {
        ++line_;
        line_start_ = i + 1;
      }
    }
    pos_ = start + len;
    token_line_ = start_line;
    token_col_ = start_col;
    emit(TokenType::String, start, pos_);
  }

  void lex_number() {
    std::size_t start = pos_;
    std::size_t p = pos_;
    auto digits = [&](auto pred) {
      while (p < src_.size() && (pred(static_cast<unsigned char>(src_[p])) || src_[p] == '_')) ++p;
    };
    if (src_[p] == '0' && p + 1 < src_.size() &&
        std::string_view("xXoObB").find(src_[p + 1]) != std::string_view::npos) {
      p += 2;
      digits([](unsigned char ch) { return std::isxdigit(ch) != 0; });
    } else {
      digits([](unsigned char ch) { return std::isdigit(ch) != 0; });
      if (p < src_.size() && src_[p] == '.') {
        ++p;
        digits([](unsigned char ch) { return std::isdigit(ch) != 0; });
      }
      if (p < src_.size() && (src_[p] == 'e' || src_[p] == 'E')) {
        std::size_t q = p + 1;
        if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
        if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
          p = q;
          digits([](unsigned char ch) { return std::isdigit(ch) != 0; });
        }
      }
      if (p < src_.size() && (src_[p] == 'j' || src_[p] == 'J')) ++p;
    }
    pos_ = p;
    emit(TokenType::Number, start, pos_);
  }

  void lex_operator() {
    std::size_t start = pos_;
    for (auto op : kThreeAndTwoCharOps) {
      if (src_.substr(pos_, op.size()) == op) {
        pos_ += op.size();
        emit(TokenType::Op, start, pos_);
        return;
      }
    }
    char c = src_[pos_];
    if (std::string_view("()[]{},:.;@=+-*/%&|^~<>!").find(c) == std::string_view::npos) {
      throw SyntaxError(std::string("unexpected character '") + c + "'", line_, col());
    }
    if (c == '(' || c == '[' || c == '{') ++depth_;
    if (c == ')' || c == ']' || c == '}') {
      if (depth_ == 0) throw SyntaxError("unmatched closing bracket", line_, col());
      --depth_;
    }
    ++pos_;
    emit(TokenType::Op, start, pos_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
  int line_ = 1;
  int depth_ = 0;
  int token_line_ = 0;
  int token_col_ = 0;
  std::vector<int> indents_;
  std::vector<Token> tokens_;
};

}  // namespace

std::size_t scan_string(std::string_view s, std::size_t pos) {
  std::size_t start = pos;
  bool fmt = false;
  while (pos < s.size() && s[pos] != '"' && s[pos] != '\'') {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[pos])));
    if (c == 'f') fmt = true;
    ++pos;
  }
  if (pos >= s.size()) return 0;
  char quote = s[pos];
  bool triple = s.substr(pos, 3) == std::string(3, quote);
  std::size_t qlen = triple ? 3 : 1;
  pos += qlen;
  while (pos < s.size()) {
    char c = s[pos];
    if (c == '\\') {
      pos += 2;
      continue;
    }
    if (!triple && c == '\n') return 0;
    if (fmt && c == '{') {
      if (pos + 1 < s.size() && s[pos + 1] == '{') {
        pos += 2;
        continue;
      }
      int depth = 1;
      ++pos;
      while (pos < s.size() && depth > 0) {
        char d = s[pos];
        if (d == '{') {
          ++depth;
          ++pos;
        } else if (d == '}') {
          --depth;
          ++pos;
        } else if (d == '"' || d == '\'') {
          std::size_t n = scan_string(s, pos);
          if (n == 0) return 0;
          pos += n;
        } else if (d == '\n' && !triple) {
          return 0;
        } else {
          ++pos;
        }
      }
      continue;
    }
    if (c == quote && (!triple || s.substr(pos, 3) == std::string(3, quote))) {
      return pos + qlen - start;
    }
    ++pos;
  }
  return 0;
}

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace mcpauth::python
