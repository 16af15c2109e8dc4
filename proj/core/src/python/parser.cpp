#include "python/parser.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_set>

#include "python/lexer.hpp"

namespace mcpauth::python {
namespace {

const std::unordered_set<std::string_view> kKeywords = {
    "False", "None",   "True",    "and",      "as",     "assert", "async", "await",
    "break", "class",  "continue", "def",     "del",    "elif",   "else",  "except",
    "finally", "for",  "from",    "global",   "if",     "import", "in",    "is",
    "lambda", "nonlocal", "not",  "or",       "pass",   "raise",  "return", "try",
    "while", "with",   "yield"};

const std::set<std::string_view> kAugmentedOps = {"+=", "-=", "*=", "/=", "//=", "%=", "@=",
                                                  "&=", "|=", "^=", ">>=", "<<=", "**="};

std::string decode_string_body(std::string_view token) {
  std::size_t q = token.find_first_of("\"'");
  std::string_view prefix = token.substr(0, q);
  bool raw = prefix.find_first_of("rR") != std::string_view::npos;
  std::string_view rest = token.substr(q);
  std::size_t qlen = (rest.size() >= 6 && rest.substr(0, 3) == std::string(3, rest[0])) ? 3 : 1;
  std::string_view body = rest.substr(qlen, rest.size() - 2 * qlen);
  if (raw) return std::string(body);
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c != '\\' || i + 1 >= body.size()) {
      out.push_back(c);
      continue;
    }
    char n = body[++i];
    switch (n) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case '0': out.push_back('\0'); break;
      case '\\': out.push_back('\\'); break;
      case '\'': out.push_back('\''); break;
      case '"': out.push_back('"'); break;
      case '\n': break;
      default:
        out.push_back('\\');
        out.push_back(n);
    }
  }
  return out;
}

struct Scope {
  enum class Kind { Module, Function, Class } kind;
  std::string name;
  std::string qualified;  // functions and classes
};

class Parser {
 public:
  Parser(std::string path, std::string_view source, std::string module, int line_base = 1,
         int col_base = 1)
      : path_(std::move(path)),
        src_(source),
        module_(std::move(module)),
        line_base_(line_base),
        col_base_(col_base) {
    tokens_ = tokenize(source);
    scopes_.push_back({Scope::Kind::Module, "", path_ + "::" + kModuleScope});
    sinks_.push_back(&module_calls_);
  }

  void parse_module() {
    while (peek().type != TokenType::End) {
      parse_statement(module_statements_);
    }
  }

  Expression parse_embedded_expression(std::vector<CallSite>* sink, std::string enclosing) {
    scopes_.back().qualified = std::move(enclosing);
    sinks_.back() = sink;
    Expression e = parse_star_expressions();
    while (peek().type == TokenType::Newline) next();
    if (peek().type != TokenType::End) fail("unexpected token in replacement field");
    return e;
  }

  void commit(ProgramModel& model) {
    SourceFile file;
    file.path = path_;
    file.module = module_;
    file.content = std::string(src_);
    file.imports = std::move(imports_);
    file.module_call_sites = std::move(module_calls_);
    model.source_files.push_back(std::move(file));
    for (auto& fn : functions_) model.functions.push_back(std::move(fn));
    for (auto& cls : classes_) model.classes.push_back(std::move(cls));
    for (auto& st : module_statements_) {
      if (st.keyword == "def" || st.keyword == "class") continue;
      model.module_statements.push_back(std::move(st));
    }
  }

 private:
  // ---- token helpers ----
  const Token& peek(std::size_t k = 0) const {
    std::size_t i = std::min(pos_ + k, tokens_.size() - 1);
    return tokens_[i];
  }
  const Token& next() {
    const Token& t = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    last_end_ = t.end;
    last_line_ = t.line;
    return t;
  }
  bool at_op(std::string_view op) const { return peek().is_op(op); }
  bool at_kw(std::string_view kw) const { return peek().is_name(kw); }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    next();
    return true;
  }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    next();
    return true;
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) fail("expected '" + std::string(op) + "'");
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail("expected '" + std::string(kw) + "'");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw SyntaxError(msg + " (found '" + t.text + "')", to_line(t.line), to_col(t));
  }
  std::string expect_identifier() {
    const Token& t = peek();
    if (t.type != TokenType::Name || kKeywords.count(t.text)) fail("expected identifier");
    return next().text;
  }

  int to_line(int line) const { return line + line_base_ - 1; }
  int to_col(const Token& t) const { return t.line == 1 ? t.column + col_base_ - 1 : t.column; }
  SourceLocation loc(const Token& t) const { return {path_, to_line(t.line), to_col(t)}; }

  Expression begin_expr(ExprKind kind, const Token& t) const {
    Expression e;
    e.kind = kind;
    e.location = loc(t);
    return e;
  }
  void finish(Expression& e, std::size_t begin) const {
    e.text = std::string(src_.substr(begin, last_end_ - begin));
  }

  bool starts_expression() const {
    const Token& t = peek();
    switch (t.type) {
      case TokenType::Name:
        return !kKeywords.count(t.text) || t.text == "None" || t.text == "True" ||
               t.text == "False" || t.text == "lambda" || t.text == "not" || t.text == "await" ||
               t.text == "yield";
      case TokenType::Number:
      case TokenType::String:
        return true;
      case TokenType::Op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" ||
               t.text == "+" || t.text == "~" || t.text == "*" || t.text == "..." ||
               t.text == "**";
      default:
        return false;
    }
  }

  // ---- expressions ----
  Expression parse_star_expressions() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression e = parse_star_named();
    if (!at_op(",")) return e;
    Expression tuple = begin_expr(ExprKind::Tuple, first);
    tuple.children.push_back(std::move(e));
    while (accept_op(",")) {
      if (!starts_expression()) break;
      tuple.children.push_back(parse_star_named());
    }
    finish(tuple, begin);
    return tuple;
  }

  Expression parse_star_named() {
    if (at_op("*")) {
      const Token& t = peek();
      std::size_t begin = t.begin;
      next();
      Expression e = begin_expr(ExprKind::Starred, t);
      e.children.push_back(parse_bitor());
      finish(e, begin);
      return e;
    }
    return parse_named();
  }

  Expression parse_named() {
    if (peek().type == TokenType::Name && peek(1).is_op(":=")) {
      const Token& t = peek();
      std::size_t begin = t.begin;
      Expression e = begin_expr(ExprKind::NamedExpr, t);
      Expression target = begin_expr(ExprKind::Name, t);
      target.name = next().text;
      finish(target, begin);
      next();
      e.children.push_back(std::move(target));
      e.children.push_back(parse_test());
      finish(e, begin);
      return e;
    }
    return parse_test();
  }

  Expression parse_test() {
    if (at_kw("lambda")) return parse_lambda();
    if (at_kw("yield")) return parse_yield();
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression body = parse_or();
    if (at_kw("if") ) {
      next();
      Expression test = parse_or();
      expect_kw("else");
      Expression orelse = parse_test();
      Expression e = begin_expr(ExprKind::Conditional, first);
      e.children.push_back(std::move(body));
      e.children.push_back(std::move(test));
      e.children.push_back(std::move(orelse));
      finish(e, begin);
      return e;
    }
    return body;
  }

  Expression parse_yield() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    next();
    Expression e = begin_expr(ExprKind::Yield, t);
    if (accept_kw("from")) {
      e.name = "from";
      e.children.push_back(parse_test());
    } else if (starts_expression()) {
      e.children.push_back(parse_star_expressions());
    }
    finish(e, begin);
    return e;
  }

  std::vector<std::string> parse_lambda_params() {
    std::vector<std::string> names;
    while (!at_op(":")) {
      if (accept_op("/")) {
      } else if (accept_op("**") || accept_op("*")) {
        if (peek().type == TokenType::Name) names.push_back(next().text);
      } else {
        names.push_back(expect_identifier());
        if (accept_op("=")) parse_test();
      }
      if (!accept_op(",")) break;
    }
    return names;
  }

  Expression parse_lambda() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    next();
    Expression e = begin_expr(ExprKind::Lambda, t);
    e.parameters = parse_lambda_params();
    expect_op(":");
    e.children.push_back(parse_test());
    finish(e, begin);
    return e;
  }

  Expression parse_or() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression left = parse_and();
    if (!at_kw("or")) return left;
    Expression e = begin_expr(ExprKind::BoolOp, first);
    e.name = "or";
    e.children.push_back(std::move(left));
    while (accept_kw("or")) e.children.push_back(parse_and());
    finish(e, begin);
    return e;
  }

  Expression parse_and() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression left = parse_not();
    if (!at_kw("and")) return left;
    Expression e = begin_expr(ExprKind::BoolOp, first);
    e.name = "and";
    e.children.push_back(std::move(left));
    while (accept_kw("and")) e.children.push_back(parse_not());
    finish(e, begin);
    return e;
  }

  Expression parse_not() {
    if (at_kw("not")) {
      const Token& t = peek();
      std::size_t begin = t.begin;
      next();
      Expression e = begin_expr(ExprKind::UnaryOp, t);
      e.name = "not";
      e.children.push_back(parse_not());
      finish(e, begin);
      return e;
    }
    return parse_comparison();
  }

  std::string comparison_op() {
    const Token& t = peek();
    if (t.type == TokenType::Op &&
        (t.text == "<" || t.text == ">" || t.text == "==" || t.text == ">=" || t.text == "<=" ||
         t.text == "!=")) {
      return next().text;
    }
    if (t.is_name("in")) {
      next();
      return "in";
    }
    if (t.is_name("not") && peek(1).is_name("in")) {
      next();
      next();
      return "not in";
    }
    if (t.is_name("is")) {
      next();
      if (accept_kw("not")) return "is not";
      return "is";
    }
    return {};
  }

  Expression parse_comparison() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression left = parse_bitor();
    std::string op = comparison_op();
    if (op.empty()) return left;
    Expression e = begin_expr(ExprKind::Compare, first);
    e.children.push_back(std::move(left));
    while (!op.empty()) {
      e.ops.push_back(op);
      e.children.push_back(parse_bitor());
      op = comparison_op();
    }
    finish(e, begin);
    return e;
  }

  using SubParser = Expression (Parser::*)();

  Expression parse_binary(SubParser sub, std::initializer_list<std::string_view> ops) {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression left = (this->*sub)();
    while (true) {
      const Token& t = peek();
      if (t.type != TokenType::Op ||
          std::find(ops.begin(), ops.end(), std::string_view(t.text)) == ops.end()) {
        return left;
      }
      Expression e = begin_expr(ExprKind::BinaryOp, first);
      e.name = next().text;
      e.children.push_back(std::move(left));
      e.children.push_back((this->*sub)());
      finish(e, begin);
      left = std::move(e);
    }
  }

  Expression parse_bitor() { return parse_binary(&Parser::parse_bitxor, {"|"}); }
  Expression parse_bitxor() { return parse_binary(&Parser::parse_bitand, {"^"}); }
  Expression parse_bitand() { return parse_binary(&Parser::parse_shift, {"&"}); }
  Expression parse_shift() { return parse_binary(&Parser::parse_arith, {"<<", ">>"}); }
  Expression parse_arith() { return parse_binary(&Parser::parse_term, {"+", "-"}); }
  Expression parse_term() {
    return parse_binary(&Parser::parse_factor, {"*", "/", "//", "%", "@"});
  }

  Expression parse_factor() {
    if (at_op("-") || at_op("+") || at_op("~")) {
      const Token& t = peek();
      std::size_t begin = t.begin;
      Expression e = begin_expr(ExprKind::UnaryOp, t);
      e.name = next().text;
      e.children.push_back(parse_factor());
      finish(e, begin);
      return e;
    }
    return parse_power();
  }

  Expression parse_power() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression base;
    if (at_kw("await")) {
      next();
      base = begin_expr(ExprKind::Await, first);
      base.children.push_back(parse_primary());
      finish(base, begin);
    } else {
      base = parse_primary();
    }
    if (!at_op("**")) return base;
    next();
    Expression e = begin_expr(ExprKind::BinaryOp, first);
    e.name = "**";
    e.children.push_back(std::move(base));
    e.children.push_back(parse_factor());
    finish(e, begin);
    return e;
  }

  Expression parse_primary() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression e = parse_atom();
    while (true) {
      if (at_op(".")) {
        next();
        Expression attr = begin_expr(ExprKind::Attribute, first);
        attr.name = expect_identifier_or_keyword();
        attr.children.push_back(std::move(e));
        finish(attr, begin);
        e = std::move(attr);
      } else if (at_op("(")) {
        next();
        Expression call = begin_expr(ExprKind::Call, first);
        call.children.push_back(std::move(e));
        parse_call_arguments(call);
        expect_op(")");
        finish(call, begin);
        e = std::move(call);
      } else if (at_op("[")) {
        next();
        Expression sub = begin_expr(ExprKind::Subscript, first);
        sub.children.push_back(std::move(e));
        sub.children.push_back(parse_slices());
        expect_op("]");
        finish(sub, begin);
        e = std::move(sub);
      } else {
        return e;
      }
    }
  }

  std::string expect_identifier_or_keyword() {
    if (peek().type != TokenType::Name) fail("expected attribute name");
    return next().text;
  }

  void parse_call_arguments(Expression& call) {
    while (!at_op(")")) {
      const Token& t = peek();
      if (accept_op("**")) {
        call.keywords.emplace_back("**", parse_test());
      } else if (at_op("*")) {
        call.children.push_back(parse_star_named());
      } else if (t.type == TokenType::Name && peek(1).is_op("=") && !kKeywords.count(t.text)) {
        std::string name = next().text;
        next();
        call.keywords.emplace_back(std::move(name), parse_test());
      } else {
        std::size_t begin = t.begin;
        Expression arg = parse_named();
        if (at_kw("for") || at_kw("async")) {
          Expression gen = begin_expr(ExprKind::Comprehension, t);
          gen.name = "gen";
          gen.children.push_back(std::move(arg));
          parse_comprehension_clauses(gen);
          finish(gen, begin);
          arg = std::move(gen);
        }
        call.children.push_back(std::move(arg));
      }
      if (!accept_op(",")) break;
    }
  }

  Expression parse_slice_item() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression lower;
    bool has_lower = false;
    if (!at_op(":")) {
      lower = parse_star_named();
      has_lower = true;
      if (!at_op(":")) return lower;
    }
    Expression slice = begin_expr(ExprKind::Slice, first);
    if (has_lower) slice.children.push_back(std::move(lower));
    while (accept_op(":")) {
      if (!at_op(":") && !at_op("]") && !at_op(",")) slice.children.push_back(parse_test());
    }
    finish(slice, begin);
    return slice;
  }

  Expression parse_slices() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression item = parse_slice_item();
    if (!at_op(",")) return item;
    Expression tuple = begin_expr(ExprKind::Tuple, first);
    tuple.children.push_back(std::move(item));
    while (accept_op(",")) {
      if (at_op("]")) break;
      tuple.children.push_back(parse_slice_item());
    }
    finish(tuple, begin);
    return tuple;
  }

  Expression parse_target_list() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression e = at_op("*") ? parse_star_named() : parse_bitor();
    if (!at_op(",")) return e;
    Expression tuple = begin_expr(ExprKind::Tuple, first);
    tuple.children.push_back(std::move(e));
    while (accept_op(",")) {
      if (at_kw("in") || at_op("=")) break;
      tuple.children.push_back(at_op("*") ? parse_star_named() : parse_bitor());
    }
    finish(tuple, begin);
    return tuple;
  }

  void parse_comprehension_clauses(Expression& comp) {
    while (at_kw("for") || (at_kw("async") && peek(1).is_name("for"))) {
      const Token& t = peek();
      std::size_t begin = t.begin;
      accept_kw("async");
      expect_kw("for");
      Expression gen = begin_expr(ExprKind::ComprehensionFor, t);
      gen.children.push_back(parse_target_list());
      expect_kw("in");
      gen.children.push_back(parse_or());
      while (at_kw("if")) {
        next();
        gen.children.push_back(parse_or());
      }
      finish(gen, begin);
      comp.generators.push_back(std::move(gen));
    }
  }

  Expression parse_strings() {
    const Token& first = peek();
    std::size_t begin = first.begin;
    Expression e = begin_expr(ExprKind::Literal, first);
    e.literal = LiteralKind::String;
    bool formatted = false;
    std::vector<Expression> fields;
    while (peek().type == TokenType::String) {
      const Token& t = next();
      std::size_t q = t.text.find_first_of("\"'");
      std::string prefix = t.text.substr(0, q);
      std::transform(prefix.begin(), prefix.end(), prefix.begin(), ::tolower);
      if (prefix.find('b') != std::string::npos) e.literal = LiteralKind::Bytes;
      if (prefix.find('f') != std::string::npos) {
        formatted = true;
        e.name += parse_fstring(t, fields);
      } else {
        e.name += decode_string_body(t.text);
      }
    }
    if (formatted) {
      e.kind = ExprKind::FormattedString;
      e.literal = LiteralKind::None;
      e.children = std::move(fields);
    }
    finish(e, begin);
    return e;
  }

  // Returns the literal text with fields elided; parsed fields go to `out`.
  std::string parse_fstring(const Token& t, std::vector<Expression>& out) {
    std::string_view text = t.text;
    std::size_t q = text.find_first_of("\"'");
    std::size_t qlen = (text.size() - q >= 6 && text.substr(q, 3) == std::string(3, text[q])) ? 3 : 1;
    std::size_t body_begin = q + qlen;
    std::size_t body_end = text.size() - qlen;
    std::string literal;
    std::size_t i = body_begin;
    while (i < body_end) {
      char c = text[i];
      if (c == '{' && i + 1 < body_end && text[i + 1] == '{') {
        literal.push_back('{');
        i += 2;
        continue;
      }
      if (c == '}' && i + 1 < body_end && text[i + 1] == '}') {
        literal.push_back('}');
        i += 2;
        continue;
      }
      if (c != '{') {
        literal.push_back(c);
        ++i;
        continue;
      }
      // Replacement field: find where the expression part stops.
      std::size_t start = i + 1;
      std::size_t j = start;
      int depth = 0;
      std::size_t expr_end = std::string_view::npos;
      while (j < body_end) {
        char d = text[j];
        if (d == '"' || d == '\'') {
          std::size_t n = scan_string(text, j);
          if (n == 0) break;
          j += n;
          continue;
        }
        if (d == '(' || d == '[' || d == '{') ++depth;
        if (d == ')' || d == ']') --depth;
        if (d == '}') {
          if (depth == 0) {
            if (expr_end == std::string_view::npos) expr_end = j;
            break;
          }
          --depth;
        }
        if (depth == 0 && expr_end == std::string_view::npos) {
          if (d == '!' && j + 1 < body_end && text[j + 1] != '=') expr_end = j;
          if (d == ':') expr_end = j;
          if (d == '=' && j + 1 < body_end && text[j + 1] != '=' && j > start &&
              std::string_view("=!<>").find(text[j - 1]) == std::string_view::npos) {
            expr_end = j;
          }
        }
        ++j;
      }
      if (expr_end == std::string_view::npos) expr_end = j;
      std::string_view field = text.substr(start, expr_end - start);
      // Locate the field start in file coordinates.
      int line = t.line;
      int col = t.column;
      for (std::size_t k = 0; k < start; ++k) {
        if (text[k] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
      }
      std::size_t lead = field.find_first_not_of(" \t\n");
      if (lead != std::string_view::npos) {
        Parser sub(path_, field, module_, to_line(line),
                   line == 1 ? col + col_base_ - 1 : col);
        sub.scopes_ = scopes_;
        // Calls inside fields are collected when the enclosing statement is walked.
        std::vector<CallSite> discard;
        try {
          out.push_back(sub.parse_embedded_expression(&discard, scopes_.back().qualified));
        } catch (const SyntaxError&) {
          // Leave malformed fields out; the surrounding string stays a literal.
        }
      }
      i = (j < body_end) ? j + 1 : body_end;
    }
    return literal;
  }

  Expression parse_atom() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    switch (t.type) {
      case TokenType::String:
        return parse_strings();
      case TokenType::Number: {
        Expression e = begin_expr(ExprKind::Literal, t);
        e.literal = LiteralKind::Number;
        e.name = next().text;
        finish(e, begin);
        return e;
      }
      case TokenType::Name: {
        if (t.text == "None" || t.text == "True" || t.text == "False") {
          Expression e = begin_expr(ExprKind::Literal, t);
          e.literal = t.text == "None" ? LiteralKind::NoneValue : LiteralKind::Bool;
          e.name = next().text;
          finish(e, begin);
          return e;
        }
        if (kKeywords.count(t.text)) fail("unexpected keyword");
        Expression e = begin_expr(ExprKind::Name, t);
        e.name = next().text;
        finish(e, begin);
        return e;
      }
      case TokenType::Op:
        break;
      default:
        fail("unexpected token");
    }
    if (t.text == "...") {
      Expression e = begin_expr(ExprKind::Literal, t);
      e.literal = LiteralKind::Ellipsis;
      e.name = next().text;
      finish(e, begin);
      return e;
    }
    if (t.text == "(") return parse_paren();
    if (t.text == "[") return parse_list();
    if (t.text == "{") return parse_brace();
    fail("unexpected token");
  }

  Expression parse_paren() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    next();
    if (accept_op(")")) {
      Expression e = begin_expr(ExprKind::Tuple, t);
      finish(e, begin);
      return e;
    }
    if (at_kw("yield")) {
      Expression y = parse_yield();
      expect_op(")");
      return y;
    }
    Expression first = parse_star_named();
    if (at_kw("for") || at_kw("async")) {
      Expression gen = begin_expr(ExprKind::Comprehension, t);
      gen.name = "gen";
      gen.children.push_back(std::move(first));
      parse_comprehension_clauses(gen);
      expect_op(")");
      finish(gen, begin);
      return gen;
    }
    if (accept_op(")")) {
      // Parenthesized expression keeps its inner node but widens the text.
      return first;
    }
    Expression tuple = begin_expr(ExprKind::Tuple, t);
    tuple.children.push_back(std::move(first));
    while (accept_op(",")) {
      if (at_op(")")) break;
      tuple.children.push_back(parse_star_named());
    }
    expect_op(")");
    finish(tuple, begin);
    return tuple;
  }

  Expression parse_list() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    next();
    Expression e = begin_expr(ExprKind::List, t);
    if (!at_op("]")) {
      Expression first = parse_star_named();
      if (at_kw("for") || at_kw("async")) {
        e.kind = ExprKind::Comprehension;
        e.name = "list";
        e.children.push_back(std::move(first));
        parse_comprehension_clauses(e);
      } else {
        e.children.push_back(std::move(first));
        while (accept_op(",")) {
          if (at_op("]")) break;
          e.children.push_back(parse_star_named());
        }
      }
    }
    expect_op("]");
    finish(e, begin);
    return e;
  }

  Expression parse_brace() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    next();
    Expression e = begin_expr(ExprKind::Dict, t);
    if (accept_op("}")) {
      finish(e, begin);
      return e;
    }
    auto parse_dict_entry = [&](Expression& into) {
      if (at_op("**")) {
        const Token& st = peek();
        std::size_t sb = st.begin;
        next();
        Expression star = begin_expr(ExprKind::Starred, st);
        star.name = "**";
        star.children.push_back(parse_bitor());
        finish(star, sb);
        into.children.push_back(std::move(star));
        return;
      }
      into.children.push_back(parse_test());
      expect_op(":");
      into.children.push_back(parse_test());
    };
    if (at_op("**")) {
      parse_dict_entry(e);
    } else {
      Expression first = parse_star_named();
      if (accept_op(":")) {
        e.children.push_back(std::move(first));
        e.children.push_back(parse_test());
        if (at_kw("for") || at_kw("async")) {
          e.kind = ExprKind::Comprehension;
          e.name = "dict";
          parse_comprehension_clauses(e);
          expect_op("}");
          finish(e, begin);
          return e;
        }
      } else {
        e.kind = ExprKind::Set;
        e.children.push_back(std::move(first));
        if (at_kw("for") || at_kw("async")) {
          e.kind = ExprKind::Comprehension;
          e.name = "set";
          parse_comprehension_clauses(e);
          expect_op("}");
          finish(e, begin);
          return e;
        }
      }
    }
    while (accept_op(",")) {
      if (at_op("}")) break;
      if (e.kind == ExprKind::Set) {
        e.children.push_back(parse_star_named());
      } else {
        parse_dict_entry(e);
      }
    }
    expect_op("}");
    finish(e, begin);
    return e;
  }

  // ---- statements ----
  std::string current_callable() const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      if (it->kind != Scope::Kind::Class) return it->qualified;
    }
    return path_ + "::" + kModuleScope;
  }

  std::string scope_chain() const {
    std::string chain;
    for (const auto& s : scopes_) {
      if (s.kind == Scope::Kind::Module) continue;
      if (!chain.empty()) chain += ".";
      chain += s.name;
    }
    return chain;
  }

  std::string enclosing_class() const {
    if (scopes_.back().kind == Scope::Kind::Class) return scopes_.back().qualified;
    return {};
  }

  void add_calls(Statement& s, const Expression& e) {
    walk(e, [&](const Expression& node) {
      if (node.kind != ExprKind::Call) return;
      CallSite cs;
      cs.callee_expression = node.children.front().dotted();
      cs.call = node;
      cs.arguments.assign(node.children.begin() + 1, node.children.end());
      for (const auto& [name, value] : node.keywords) cs.keyword_arguments.emplace(name, value);
      cs.enclosing_function = current_callable();
      cs.location = node.location;
      s.calls.push_back(cs);
      sinks_.back()->push_back(std::move(cs));
    });
  }

  Statement begin_statement(StatementKind kind, const Token& t, std::string keyword = {}) const {
    Statement s;
    s.kind = kind;
    s.keyword = std::move(keyword);
    s.location = loc(t);
    return s;
  }

  void set_expression(Statement& s, Expression e) {
    add_calls(s, e);
    s.expression = std::move(e);
    s.has_expression = true;
  }

  void add_target(Statement& s, Expression e) {
    add_calls(s, e);
    s.targets.push_back(std::move(e));
  }

  static void collect_identifiers(const Expression& e, std::vector<std::string>& out) {
    walk(e, [&](const Expression& node) {
      if (node.kind == ExprKind::Name || node.kind == ExprKind::Attribute) {
        if (std::find(out.begin(), out.end(), node.name) == out.end()) out.push_back(node.name);
      }
    });
  }

  void set_predicate(Statement& s, Expression test) {
    s.predicate_text = test.text;
    collect_identifiers(test, s.predicate_identifiers);
    set_expression(s, std::move(test));
  }

  void end_simple_statement() {
    if (accept_op(";")) return;
    if (peek().type == TokenType::Newline) {
      next();
      return;
    }
    if (peek().type == TokenType::End) return;
    fail("expected end of statement");
  }

  void parse_block(std::vector<Statement>& out) {
    expect_op(":");
    if (peek().type == TokenType::Newline) {
      next();
      if (peek().type != TokenType::Indent) fail("expected an indented block");
      next();
      while (peek().type != TokenType::Dedent && peek().type != TokenType::End) {
        parse_statement(out);
      }
      if (peek().type == TokenType::Dedent) next();
      return;
    }
    parse_simple_line(out);
  }

  void parse_simple_line(std::vector<Statement>& out) {
    while (true) {
      out.push_back(parse_simple_statement());
      if (accept_op(";")) {
        if (peek().type == TokenType::Newline) {
          next();
          return;
        }
        continue;
      }
      if (peek().type == TokenType::Newline) {
        next();
        return;
      }
      if (peek().type == TokenType::End) return;
      fail("expected end of statement");
    }
  }

  bool at_match_statement() const {
    if (!at_kw("match")) return false;
    const Token& n = peek(1);
    if (n.type == TokenType::Op &&
        (n.text == "=" || n.text == "." || n.text == "," || n.text == ":" || n.text == ")" ||
         kAugmentedOps.count(n.text))) {
      return false;
    }
    if (n.type == TokenType::Newline) return false;
    // Find the end of the logical line; a match statement ends with ':' and is
    // followed by an indented `case`.
    std::size_t k = pos_ + 1;
    while (k < tokens_.size() && tokens_[k].type != TokenType::Newline &&
           tokens_[k].type != TokenType::End) {
      ++k;
    }
    if (k + 2 >= tokens_.size()) return false;
    return tokens_[k - 1].is_op(":") && tokens_[k + 1].type == TokenType::Indent &&
           tokens_[k + 2].is_name("case");
  }

  void parse_statement(std::vector<Statement>& out) {
    const Token& t = peek();
    if (t.type == TokenType::Op && t.text == "@") {
      std::vector<DecoratorRecord> decorators;
      std::vector<Expression> decorator_exprs;
      while (at_op("@")) {
        next();
        const Token& dt = peek();
        Expression e = parse_named();
        DecoratorRecord d;
        d.expression = e.text;
        d.location = loc(dt);
        if (e.kind == ExprKind::Call) {
          d.is_call = true;
          d.callee = e.children.front().dotted();
          d.arguments.assign(e.children.begin() + 1, e.children.end());
          for (const auto& [name, value] : e.keywords) d.keyword_arguments.emplace(name, value);
        } else {
          d.callee = e.dotted();
        }
        decorators.push_back(std::move(d));
        decorator_exprs.push_back(std::move(e));
        if (peek().type != TokenType::Newline) fail("expected newline after decorator");
        next();
      }
      if (at_kw("class")) {
        out.push_back(parse_class(std::move(decorators), decorator_exprs));
      } else {
        out.push_back(parse_funcdef(std::move(decorators), decorator_exprs));
      }
      return;
    }
    if (t.type == TokenType::Name) {
      if (t.text == "def" || (t.text == "async" && peek(1).is_name("def"))) {
        out.push_back(parse_funcdef({}, {}));
        return;
      }
      if (t.text == "class") {
        out.push_back(parse_class({}, {}));
        return;
      }
      if (t.text == "if") {
        out.push_back(parse_if());
        return;
      }
      if (t.text == "while") {
        out.push_back(parse_while());
        return;
      }
      if (t.text == "for" || (t.text == "async" && peek(1).is_name("for"))) {
        out.push_back(parse_for());
        return;
      }
      if (t.text == "try") {
        out.push_back(parse_try());
        return;
      }
      if (t.text == "with" || (t.text == "async" && peek(1).is_name("with"))) {
        out.push_back(parse_with());
        return;
      }
      if (at_match_statement()) {
        out.push_back(parse_match());
        return;
      }
    }
    parse_simple_line(out);
  }

  Statement parse_simple_statement() {
    const Token& t = peek();
    if (t.type == TokenType::Name) {
      const std::string& kw = t.text;
      if (kw == "pass" || kw == "break" || kw == "continue") {
        Statement s = begin_statement(StatementKind::Other, t, kw);
        next();
        return s;
      }
      if (kw == "return") {
        Statement s = begin_statement(StatementKind::Return, t, kw);
        next();
        if (starts_expression()) set_expression(s, parse_star_expressions());
        return s;
      }
      if (kw == "raise") {
        Statement s = begin_statement(StatementKind::Raise, t, kw);
        next();
        if (starts_expression()) {
          set_expression(s, parse_test());
          if (accept_kw("from")) {
            Expression cause = parse_test();
            add_calls(s, cause);
          }
        }
        return s;
      }
      if (kw == "global" || kw == "nonlocal") {
        Statement s = begin_statement(StatementKind::Other, t, kw);
        next();
        s.names.push_back(expect_identifier());
        while (accept_op(",")) s.names.push_back(expect_identifier());
        return s;
      }
      if (kw == "del") {
        Statement s = begin_statement(StatementKind::Other, t, kw);
        next();
        add_target(s, parse_target_list());
        return s;
      }
      if (kw == "assert") {
        Statement s = begin_statement(StatementKind::Conditional, t, kw);
        next();
        set_predicate(s, parse_test());
        if (accept_op(",")) {
          Expression msg = parse_test();
          add_calls(s, msg);
        }
        return s;
      }
      if (kw == "import") return parse_import();
      if (kw == "from") return parse_from_import();
      if (kw == "type" && peek(1).type == TokenType::Name &&
          (peek(2).is_op("=") || peek(2).is_op("["))) {
        Statement s = begin_statement(StatementKind::Other, t, "type");
        while (peek().type != TokenType::Newline && peek().type != TokenType::End &&
               !at_op(";")) {
          next();
        }
        return s;
      }
    }
    return parse_expression_statement();
  }

  Statement parse_expression_statement() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    Expression first = at_kw("yield") ? parse_yield() : parse_star_expressions();
    if (at_op("=")) {
      Statement s = begin_statement(StatementKind::Assignment, t);
      std::vector<Expression> chain;
      chain.push_back(std::move(first));
      while (accept_op("=")) {
        chain.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      Expression value = std::move(chain.back());
      chain.pop_back();
      for (auto& target : chain) add_target(s, std::move(target));
      set_expression(s, std::move(value));
      return s;
    }
    if (peek().type == TokenType::Op && kAugmentedOps.count(peek().text)) {
      Statement s = begin_statement(StatementKind::Assignment, t, "augmented");
      std::string op = next().text;
      op.pop_back();
      Expression rhs = at_kw("yield") ? parse_yield() : parse_star_expressions();
      Expression combined = begin_expr(ExprKind::BinaryOp, t);
      combined.name = op;
      combined.children.push_back(first);
      combined.children.push_back(std::move(rhs));
      finish(combined, begin);
      s.targets.push_back(std::move(first));
      set_expression(s, std::move(combined));
      return s;
    }
    if (at_op(":")) {
      next();
      Expression annotation = parse_test();
      (void)annotation;
      if (accept_op("=")) {
        Statement s = begin_statement(StatementKind::Assignment, t, "annotated");
        add_target(s, std::move(first));
        set_expression(s, at_kw("yield") ? parse_yield() : parse_star_expressions());
        return s;
      }
      Statement s = begin_statement(StatementKind::Other, t, "annotation");
      s.targets.push_back(std::move(first));
      return s;
    }
    const Expression* inner = &first;
    if (inner->kind == ExprKind::Await && !inner->children.empty()) inner = &inner->children[0];
    Statement s =
        begin_statement(inner->kind == ExprKind::Call ? StatementKind::Call : StatementKind::Other, t);
    set_expression(s, std::move(first));
    return s;
  }

  std::string resolve_relative(int level, const std::string& name) const {
    std::string base = module_;
    bool is_package = path_.size() >= 11 && path_.substr(path_.size() - 11) == "__init__.py";
    if (level > 0 && !is_package) {
      auto dot = base.rfind('.');
      base = dot == std::string::npos ? "" : base.substr(0, dot);
    }
    for (int i = 1; i < level; ++i) {
      auto dot = base.rfind('.');
      base = dot == std::string::npos ? "" : base.substr(0, dot);
    }
    if (level == 0) return name;
    if (base.empty()) return name;
    if (name.empty()) return base;
    return base + "." + name;
  }

  std::string parse_dotted_name() {
    std::string name = expect_identifier();
    while (accept_op(".")) name += "." + expect_identifier();
    return name;
  }

  Statement parse_import() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "import");
    next();
    do {
      const Token& nt = peek();
      std::string target = parse_dotted_name();
      ImportRecord rec;
      rec.location = loc(nt);
      if (accept_kw("as")) {
        rec.alias = expect_identifier();
        rec.target = target;
      } else {
        auto dot = target.find('.');
        rec.alias = target.substr(0, dot);
        rec.target = rec.alias;
      }
      s.names.push_back(rec.alias);
      imports_.push_back(std::move(rec));
    } while (accept_op(","));
    return s;
  }

  Statement parse_from_import() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "import");
    next();
    int level = 0;
    while (at_op(".") || at_op("...")) level += static_cast<int>(next().text.size());
    std::string module;
    if (!at_kw("import")) module = parse_dotted_name();
    expect_kw("import");
    std::string base = resolve_relative(level, module);
    bool paren = accept_op("(");
    do {
      if (paren && at_op(")")) break;
      const Token& nt = peek();
      ImportRecord rec;
      rec.from_import = true;
      rec.location = loc(nt);
      if (accept_op("*")) {
        rec.alias = "*";
        rec.target = base + ".*";
      } else {
        std::string name = expect_identifier();
        rec.alias = accept_kw("as") ? expect_identifier() : name;
        rec.target = base.empty() ? name : base + "." + name;
      }
      s.names.push_back(rec.alias);
      imports_.push_back(std::move(rec));
    } while (accept_op(","));
    if (paren) expect_op(")");
    return s;
  }

  Statement parse_if() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Conditional, t, t.text);
    next();
    set_predicate(s, parse_named());
    parse_block(s.children);
    if (at_kw("elif")) {
      s.alternative.push_back(parse_if());
    } else if (at_kw("else")) {
      next();
      parse_block(s.alternative);
    }
    return s;
  }

  Statement parse_while() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Loop, t, "while");
    next();
    set_expression(s, parse_named());
    parse_block(s.children);
    if (accept_kw("else")) parse_block(s.alternative);
    return s;
  }

  Statement parse_for() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Loop, t, "for");
    accept_kw("async");
    expect_kw("for");
    add_target(s, parse_target_list());
    expect_kw("in");
    set_expression(s, parse_star_expressions());
    parse_block(s.children);
    if (accept_kw("else")) parse_block(s.alternative);
    return s;
  }

  Statement parse_try() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "try");
    next();
    parse_block(s.children);
    while (at_kw("except")) {
      const Token& ht = peek();
      Statement handler = begin_statement(StatementKind::Other, ht, "except");
      next();
      accept_op("*");
      if (!at_op(":")) {
        set_expression(handler, parse_test());
        if (at_op(",")) {
          // Python 2 style; not supported.
          fail("unsupported except clause");
        }
        if (accept_kw("as")) {
          const Token& nt = peek();
          Expression target = begin_expr(ExprKind::Name, nt);
          std::size_t b = nt.begin;
          target.name = expect_identifier();
          finish(target, b);
          handler.targets.push_back(std::move(target));
        }
      }
      parse_block(handler.children);
      s.alternative.push_back(std::move(handler));
    }
    for (const char* kw : {"else", "finally"}) {
      if (at_kw(kw)) {
        Statement clause = begin_statement(StatementKind::Other, peek(), kw);
        next();
        parse_block(clause.children);
        s.alternative.push_back(std::move(clause));
      }
    }
    return s;
  }

  void parse_with_items(Statement& s, std::vector<Expression>& contexts, bool parenthesized) {
    while (true) {
      if (parenthesized && at_op(")")) break;
      Expression ctx = parse_test();
      Expression target;
      target.kind = ExprKind::Name;
      if (accept_kw("as")) target = parse_target_list_single();
      add_calls(s, ctx);
      contexts.push_back(std::move(ctx));
      s.targets.push_back(std::move(target));
      if (!accept_op(",")) break;
    }
  }

  Expression parse_target_list_single() { return at_op("(") ? parse_atom() : parse_bitor(); }

  Statement parse_with() {
    const Token& t = peek();
    std::size_t begin = t.begin;
    Statement s = begin_statement(StatementKind::With, t, "with");
    accept_kw("async");
    expect_kw("with");
    const Token& first = peek();
    std::size_t items_begin = first.begin;
    std::vector<Expression> contexts;
    bool done = false;
    if (at_op("(")) {
      std::size_t saved = pos_;
      Statement probe = s;
      std::vector<Expression> probe_contexts;
      std::size_t sink_size = sinks_.back()->size();
      try {
        next();
        parse_with_items(probe, probe_contexts, true);
        expect_op(")");
        if (at_op(":")) {
          s = std::move(probe);
          contexts = std::move(probe_contexts);
          done = true;
        }
      } catch (const SyntaxError&) {
      }
      if (!done) {
        pos_ = saved;
        sinks_.back()->resize(sink_size);
      }
    }
    if (!done) parse_with_items(s, contexts, false);
    if (contexts.size() == 1) {
      s.expression = std::move(contexts.front());
    } else {
      Expression tuple = begin_expr(ExprKind::Tuple, first);
      tuple.children = std::move(contexts);
      finish(tuple, items_begin);
      s.expression = std::move(tuple);
    }
    s.has_expression = true;
    (void)begin;
    parse_block(s.children);
    return s;
  }

  Statement parse_match() {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "match");
    next();
    set_expression(s, parse_star_expressions());
    expect_op(":");
    if (peek().type != TokenType::Newline) fail("expected newline");
    next();
    if (peek().type != TokenType::Indent) fail("expected indented case block");
    next();
    while (at_kw("case")) {
      Statement c = begin_statement(StatementKind::Other, peek(), "case");
      next();
      int depth = 0;
      while (!(depth == 0 && at_op(":"))) {
        if (peek().type == TokenType::End || peek().type == TokenType::Newline) {
          fail("unterminated case pattern");
        }
        if (at_op("(") || at_op("[") || at_op("{")) ++depth;
        if (at_op(")") || at_op("]") || at_op("}")) --depth;
        next();
      }
      parse_block(c.children);
      s.children.push_back(std::move(c));
    }
    if (peek().type == TokenType::Dedent) next();
    return s;
  }

  void parse_parameters(FunctionDef& fn, Statement& def_stmt) {
    expect_op("(");
    bool keyword_only = false;
    int position = 0;
    std::set<std::string> seen;
    while (!at_op(")")) {
      if (accept_op("/")) {
        if (!accept_op(",")) break;
        continue;
      }
      Parameter p;
      if (accept_op("**")) {
        p.variadic = true;
      } else if (accept_op("*")) {
        keyword_only = true;
        if (at_op(",") || at_op(")")) {
          if (!accept_op(",")) break;
          continue;
        }
        p.variadic = true;
      }
      p.name = expect_identifier();
      p.keyword_only = keyword_only && !p.variadic;
      p.position = position++;
      if (!seen.insert(p.name).second) fail("duplicate parameter '" + p.name + "'");
      if (accept_op(":")) parse_test();
      if (accept_op("=")) add_calls(def_stmt, parse_test());
      fn.parameters.push_back(std::move(p));
      if (!accept_op(",")) break;
    }
    expect_op(")");
  }

  Statement parse_funcdef(std::vector<DecoratorRecord> decorators,
                          const std::vector<Expression>& decorator_exprs) {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "def");
    FunctionDef fn;
    fn.is_async = accept_kw("async");
    expect_kw("def");
    fn.name = expect_identifier();
    fn.file = path_;
    fn.scope = scope_chain();
    fn.enclosing_class = enclosing_class();
    fn.qualified_name = path_ + "::" + (fn.scope.empty() ? fn.name : fn.scope + "." + fn.name);
    fn.location = loc(t);
    for (const auto& d : decorator_exprs) add_calls(s, d);
    fn.decorators = std::move(decorators);
    s.names.push_back(fn.name);
    parse_parameters(fn, s);
    if (accept_op("->")) parse_test();

    std::vector<CallSite> calls;
    scopes_.push_back({Scope::Kind::Function, fn.name, fn.qualified_name});
    sinks_.push_back(&calls);
    parse_block(fn.body);
    sinks_.pop_back();
    scopes_.pop_back();
    fn.end_line = to_line(last_line_);
    fn.call_sites = std::move(calls);
    if (!fn.body.empty() && fn.body.front().has_expression &&
        fn.body.front().expression.is_string_literal()) {
      fn.docstring = fn.body.front().expression.name;
    }
    functions_.push_back(std::move(fn));
    return s;
  }

  Statement parse_class(std::vector<DecoratorRecord> decorators,
                        const std::vector<Expression>& decorator_exprs) {
    const Token& t = peek();
    Statement s = begin_statement(StatementKind::Other, t, "class");
    expect_kw("class");
    ClassDef cls;
    cls.name = expect_identifier();
    cls.file = path_;
    std::string chain = scope_chain();
    cls.qualified_name = path_ + "::" + (chain.empty() ? cls.name : chain + "." + cls.name);
    cls.location = loc(t);
    for (const auto& d : decorator_exprs) add_calls(s, d);
    cls.decorators = std::move(decorators);
    s.names.push_back(cls.name);
    if (at_op("(")) {
      const Token& pt = peek();
      Expression holder = begin_expr(ExprKind::Call, pt);
      next();
      parse_call_arguments(holder);
      expect_op(")");
      for (auto& base : holder.children) {
        add_calls(s, base);
        cls.bases.push_back(std::move(base));
      }
    }
    std::size_t first_function = functions_.size();
    scopes_.push_back({Scope::Kind::Class, cls.name, cls.qualified_name});
    std::vector<Statement> body;
    parse_block(body);
    scopes_.pop_back();
    for (std::size_t i = first_function; i < functions_.size(); ++i) {
      if (functions_[i].enclosing_class == cls.qualified_name) {
        cls.methods.push_back(functions_[i].qualified_name);
      }
    }
    for (auto& st : body) {
      if (st.keyword == "def") continue;
      cls.body.push_back(std::move(st));
    }
    if (!cls.body.empty() && cls.body.front().has_expression &&
        cls.body.front().expression.is_string_literal()) {
      cls.docstring = cls.body.front().expression.name;
    }
    classes_.push_back(std::move(cls));
    return s;
  }

  std::string path_;
  std::string_view src_;
  std::string module_;
  int line_base_;
  int col_base_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t last_end_ = 0;
  int last_line_ = 1;

  std::vector<Scope> scopes_;
  std::vector<std::vector<CallSite>*> sinks_;

  std::vector<Statement> module_statements_;
  std::vector<FunctionDef> functions_;
  std::vector<ClassDef> classes_;
  std::vector<ImportRecord> imports_;
  std::vector<CallSite> module_calls_;
};

}  // namespace

std::string module_name_for(std::string_view relative_path) {
  std::string m(relative_path);
  if (m.size() > 3 && m.substr(m.size() - 3) == ".py") m.resize(m.size() - 3);
  std::replace(m.begin(), m.end(), '/', '.');
  const std::string init = "__init__";
  if (m == init) return "";
  if (m.size() > init.size() + 1 && m.substr(m.size() - init.size() - 1) == "." + init) {
    m.resize(m.size() - init.size() - 1);
  }
  return m;
}

void parse_python_file(const std::string& relative_path, const std::string& content,
                       ProgramModel& model) {
  Parser parser(relative_path, content, module_name_for(relative_path));
  parser.parse_module();
  parser.commit(model);
}

}  // namespace mcpauth::python
