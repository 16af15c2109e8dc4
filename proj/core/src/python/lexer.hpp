#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcpauth::python {

enum class TokenType { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Token {
  TokenType type;
  std::string text;
  std::size_t begin = 0;  // byte offsets into the source
  std::size_t end = 0;
  int line = 1;
  int column = 1;  // 1-based byte column

  bool is_op(std::string_view op) const { return type == TokenType::Op && text == op; }
  bool is_name(std::string_view n) const { return type == TokenType::Name && text == n; }
};

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& message, int line, int column)
      : std::runtime_error(message + " at line " + std::to_string(line) + ", column " +
                           std::to_string(column)),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

std::vector<Token> tokenize(std::string_view source);

/// Length of the string literal (prefix + quotes + body) starting at `pos`,
/// which must point at the prefix or opening quote.
std::size_t scan_string(std::string_view source, std::size_t pos);

}  // namespace mcpauth::python
