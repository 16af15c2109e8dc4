#include "mcpauth/authz.hpp"

#include <algorithm>
#include <deque>
#include <functional>

#include "embedded_data.hpp"
#include "util.hpp"

namespace mcpauth {

const char* to_string(AuthForm form) {
  switch (form) {
    case AuthForm::OAuth: return "OAuth";
    case AuthForm::BearerToken: return "BearerToken";
    case AuthForm::ApiKey: return "ApiKey";
    case AuthForm::UsernamePassword: return "UsernamePassword";
    case AuthForm::CachedCredential: return "CachedCredential";
    case AuthForm::SessionCheck: return "SessionCheck";
    case AuthForm::Other: return "Other";
  }
  return "Other";
}

const char* to_string(AuthTiming timing) {
  return timing == AuthTiming::StartupOnce ? "StartupOnce" : "PerInvocation";
}

const char* to_string(CheckMechanism mechanism) {
  switch (mechanism) {
    case CheckMechanism::Guard: return "Guard";
    case CheckMechanism::Validator: return "Validator";
    case CheckMechanism::Acquisition: return "Acquisition";
  }
  return "Guard";
}

AuthForm auth_form_from_string(std::string_view text) {
  for (auto f : {AuthForm::OAuth, AuthForm::BearerToken, AuthForm::ApiKey, AuthForm::UsernamePassword,
                 AuthForm::CachedCredential, AuthForm::SessionCheck, AuthForm::Other}) {
    if (text == to_string(f)) return f;
  }
  throw ConfigError("unknown auth form: " + std::string(text));
}

AuthTiming auth_timing_from_string(std::string_view text) {
  if (text == "StartupOnce") return AuthTiming::StartupOnce;
  if (text == "PerInvocation") return AuthTiming::PerInvocation;
  throw ConfigError("unknown auth timing: " + std::string(text));
}

const char* to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Secure: return "Secure";
    case Verdict::AuthNone: return "AuthNone";
    case Verdict::AuthCache: return "AuthCache";
    case Verdict::AuthRuntime: return "AuthRuntime";
    case Verdict::NoSensitiveOps: return "NoSensitiveOps";
  }
  return "AuthNone";
}

Verdict verdict_from_string(std::string_view text) {
  for (auto v : {Verdict::Secure, Verdict::AuthNone, Verdict::AuthCache, Verdict::AuthRuntime,
                 Verdict::NoSensitiveOps}) {
    if (text == to_string(v)) return v;
  }
  throw ConfigError("unknown verdict: " + std::string(text));
}

int verdict_rank(Verdict verdict) {
  switch (verdict) {
    case Verdict::AuthNone: return 0;
    case Verdict::AuthCache: return 1;
    case Verdict::AuthRuntime: return 2;
    case Verdict::Secure: return 3;
    case Verdict::NoSensitiveOps: return 4;
  }
  return 0;
}

bool is_vulnerable(Verdict verdict) {
  return verdict == Verdict::AuthNone || verdict == Verdict::AuthCache ||
         verdict == Verdict::AuthRuntime;
}

// ------------------------------------------------------------ vocabulary

namespace {

const std::set<std::string> kCredentialWords = {
    "token",      "tokens",   "auth",          "authorization", "authorized", "authenticated",
    "authentication", "authn", "authz",        "login",         "logged",     "credential",
    "credentials", "creds",   "password",      "passwd",        "pwd",        "secret",
    "secrets",    "apikey",   "bearer",        "oauth",         "jwt",        "session",
    "sessions",   "permission", "permissions", "role",          "roles",      "acl",
    "scope",      "scopes",   "signature",     "cookie",        "cookies",    "identity",
    "principal",  "admin",    "loggedin"};

const std::set<std::pair<std::string, std::string>> kCredentialPairs = {
    {"api", "key"}, {"access", "key"}, {"private", "key"}, {"secret", "key"}, {"x", "api"}};

const std::set<std::string> kValidatorVerbs = {"verify", "validate", "check",     "require",
                                               "ensure", "authenticate", "authorize", "assert",
                                               "enforce"};

const std::set<std::string> kValidatorNames = {"authenticate", "authorize", "login_required",
                                               "requires_auth", "auth_required", "require_auth"};

bool words_credential(const std::vector<std::string>& words) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (kCredentialWords.count(words[i])) return true;
    if (i + 1 < words.size() && kCredentialPairs.count({words[i], words[i + 1]})) return true;
  }
  return false;
}

std::string tail_of(const std::string& dotted) {
  auto dot = dotted.rfind('.');
  return dot == std::string::npos ? dotted : dotted.substr(dot + 1);
}

}  // namespace

bool names_credential(std::string_view identifier) {
  return words_credential(util::identifier_words(identifier));
}

IdentityLexicon IdentityLexicon::parse(std::string_view text) {
  IdentityLexicon lex;
  lex.hash_ = util::sha256_hex(text);
  for (const auto& raw : util::split(text, '\n')) {
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = util::trim(line);
    if (line.empty()) continue;
    auto words = util::identifier_words(line);
    if (!words.empty()) lex.entries_.push_back(std::move(words));
  }
  return lex;
}

IdentityLexicon IdentityLexicon::load(const std::string& path) { return parse(util::read_file(path)); }

const IdentityLexicon& IdentityLexicon::builtin() {
  static const IdentityLexicon lex = parse(data::identity_lexicon());
  return lex;
}

bool IdentityLexicon::matches(std::string_view identifier) const {
  auto words = util::identifier_words(identifier);
  for (const auto& entry : entries_) {
    if (entry.size() > words.size()) continue;
    for (std::size_t i = 0; i + entry.size() <= words.size(); ++i) {
      if (std::equal(entry.begin(), entry.end(), words.begin() + i)) return true;
    }
  }
  return false;
}

// -------------------------------------------------------------- detection

namespace {

bool is_validator_name(const std::string& callee) {
  std::string tail = tail_of(callee);
  if (kValidatorNames.count(util::lower(tail))) return true;
  auto words = util::identifier_words(tail);
  if (words.size() < 2 || !kValidatorVerbs.count(words.front())) return false;
  std::vector<std::string> rest(words.begin() + 1, words.end());
  static const std::set<std::string> extra = {"user", "caller", "client", "access", "key", "api",
                                              "request", "identity"};
  return words_credential(rest) ||
         std::any_of(rest.begin(), rest.end(), [](const std::string& w) { return extra.count(w) > 0; });
}

const Expression* top_call(const Expression& e) {
  const Expression* x = &e;
  if (x->kind == ExprKind::Await && !x->children.empty()) x = &x->children.front();
  return x->kind == ExprKind::Call ? x : nullptr;
}

bool is_exit_call(const Statement& s) {
  if (s.kind != StatementKind::Call) return false;
  const Expression* call = top_call(s.expression);
  if (!call) return false;
  std::string callee = call->children.front().dotted();
  return callee == "sys.exit" || callee == "exit" || callee == "quit" || callee == "os._exit" ||
         tail_of(callee) == "abort";
}

bool terminates(const std::vector<Statement>& block) {
  for (const auto& s : block) {
    if (s.kind == StatementKind::Raise || s.kind == StatementKind::Return || is_exit_call(s)) return true;
    if (s.kind == StatementKind::Conditional && s.keyword != "assert" && !s.alternative.empty() &&
        terminates(s.children) && terminates(s.alternative)) {
      return true;
    }
  }
  return false;
}

bool is_none_literal(const Expression& e) {
  return e.kind == ExprKind::Literal &&
         (e.literal == LiteralKind::NoneValue || (e.literal == LiteralKind::Bool && e.name == "False"));
}

bool negative_polarity(const Expression& e) {
  if (e.kind == ExprKind::UnaryOp && e.name == "not") return true;
  if (e.kind == ExprKind::Compare && !e.ops.empty()) {
    const std::string& op = e.ops.front();
    if (op == "!=" || op == "not in") return true;
    if ((op == "is" || op == "==") && e.children.size() > 1 && is_none_literal(e.children[1])) return true;
  }
  if (e.kind == ExprKind::BoolOp && e.name == "or") {
    return std::all_of(e.children.begin(), e.children.end(), negative_polarity);
  }
  return false;
}

// `if X is None: X = ...` initializes a cache rather than rejecting a caller.
bool is_lazy_init(const Statement& s) {
  const Expression& p = s.expression;
  std::string subject;
  if (p.kind == ExprKind::UnaryOp && p.name == "not" && !p.children.empty()) subject = p.children[0].text;
  if (p.kind == ExprKind::Compare && p.children.size() == 2 && !p.ops.empty() &&
      (p.ops[0] == "is" || p.ops[0] == "==") && is_none_literal(p.children[1])) {
    subject = p.children[0].text;
  }
  if (subject.empty() || s.children.empty()) return false;
  bool assigns = false;
  walk_statements(s.children, [&](const Statement& c) {
    if (c.kind != StatementKind::Assignment) return;
    for (const auto& t : c.targets) assigns = assigns || t.text == subject;
  });
  return assigns && !terminates(s.children);
}

bool has_comparison_or_validator(const Expression& e) {
  bool found = false;
  walk(e, [&](const Expression& n) {
    if (n.kind == ExprKind::Compare) found = true;
    if (n.kind == ExprKind::Call && is_validator_name(n.children.front().dotted())) found = true;
  });
  return found;
}

std::vector<std::string> expression_words(const Expression& e) {
  std::vector<std::string> words;
  walk(e, [&](const Expression& n) {
    std::vector<std::string> w;
    if (n.kind == ExprKind::Name || n.kind == ExprKind::Attribute) w = util::identifier_words(n.name);
    if (n.is_string_literal() && n.name.size() < 64) w = util::identifier_words(n.name);
    words.insert(words.end(), w.begin(), w.end());
  });
  return words;
}

AuthForm form_from_words(const std::vector<std::string>& words) {
  auto has = [&](std::initializer_list<const char*> keys) {
    return std::any_of(words.begin(), words.end(), [&](const std::string& w) {
      return std::any_of(keys.begin(), keys.end(), [&](const char* k) { return w == k; });
    });
  };
  bool api_key = false;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (words[i] == "api" && words[i + 1] == "key") api_key = true;
  }
  if (has({"oauth", "oauth2"})) return AuthForm::OAuth;
  if (has({"password", "passwd", "pwd", "username"})) return AuthForm::UsernamePassword;
  if (api_key || has({"apikey"})) return AuthForm::ApiKey;
  if (has({"session", "sessions", "connection"})) return AuthForm::SessionCheck;
  if (has({"token", "tokens", "bearer", "jwt"})) return AuthForm::BearerToken;
  return AuthForm::Other;
}

void collect_sites(const std::vector<Statement>& stmts, std::vector<SourceLocation>& out) {
  for (const auto& s : stmts) {
    if (s.keyword == "def" || s.keyword == "class") continue;
    for (const auto& c : s.calls) out.push_back(c.location);
    collect_sites(s.children, out);
    collect_sites(s.alternative, out);
  }
}

void collect_sites(const std::vector<const Statement*>& stmts, std::vector<SourceLocation>& out) {
  for (const Statement* s : stmts) {
    if (s->keyword == "def" || s->keyword == "class") continue;
    for (const auto& c : s->calls) out.push_back(c.location);
    collect_sites(s->children, out);
    collect_sites(s->alternative, out);
  }
}

struct Acquisition {
  bool found = false;
  std::string evidence_symbol;
};

class Detector {
 public:
  Detector(const ToolContext& ctx, const CallResolver& resolver, const IdentityLexicon& lex)
      : ctx_(ctx), r_(resolver), lex_(lex), model_(resolver.model()) {}

  std::vector<AuthCheck> run() {
    for (const auto& name : ctx_.related_functions) {
      const FunctionDef* fn = r_.function(name);
      if (!fn) continue;
      scan_block(fn->body, fn, {}, AuthTiming::PerInvocation);
    }
    scan_handler_decorators();
    scan_startup();
    finalize();
    std::sort(out_.begin(), out_.end(), [](const AuthCheck& a, const AuthCheck& b) {
      return std::tie(a.guard_location, a.evidence, a.function) <
             std::tie(b.guard_location, b.evidence, b.function);
    });
    out_.erase(std::unique(out_.begin(), out_.end(),
                           [](const AuthCheck& a, const AuthCheck& b) {
                             return a.guard_location == b.guard_location && a.evidence == b.evidence &&
                                    a.function == b.function && a.mechanism == b.mechanism;
                           }),
               out_.end());
    return std::move(out_);
  }

 private:
  std::string module_scope(const std::string& file) const { return file + "::" + kModuleScope; }

  bool input_derived(const Expression& e, int line, const FunctionDef* fn) const {
    if (!fn) return false;
    return extract_expression_tree(e, line, r_, fn, &ctx_.input_parameters).origin ==
           OriginFlag::InputDependent;
  }

  bool identity_name(const std::string& ident) const {
    return lex_.matches(ident) || names_credential(ident);
  }

  bool predicate_caller_bound(const Expression& pred, int line, const FunctionDef* fn) const {
    bool bound = false;
    walk(pred, [&](const Expression& n) {
      if (bound) return;
      std::string label;
      if (n.kind == ExprKind::Name || n.kind == ExprKind::Attribute) label = n.name;
      if (n.kind == ExprKind::Subscript && n.children.size() > 1 && n.children[1].is_string_literal()) {
        label = n.children[1].name;
      }
      if (label.empty() || !identity_name(label)) return;
      bound = input_derived(n, line, fn);
    });
    return bound;
  }

  bool arguments_caller_bound(const Expression& call, int line, const FunctionDef* fn) const {
    std::vector<const Expression*> args;
    for (std::size_t i = 1; i < call.children.size(); ++i) args.push_back(&call.children[i]);
    for (const auto& [k, v] : call.keywords) {
      if (identity_name(k) && input_derived(v, line, fn)) return true;
      args.push_back(&v);
    }
    for (const Expression* a : args) {
      if (predicate_caller_bound(*a, line, fn)) return true;
    }
    return false;
  }

  AuthCheck make(CheckMechanism mech, const SourceLocation& loc, std::string evidence,
                 const std::string& function, AuthTiming timing) const {
    AuthCheck c;
    c.mechanism = mech;
    c.guard_location = loc;
    c.evidence = std::move(evidence);
    c.function = function;
    c.timing = timing;
    return c;
  }

  // Fail-fast guard at the top level of a project function, making calls
  // to it implicit validators.
  std::optional<bool> fail_fast_guard(const FunctionDef& fn, int depth = 0) const {
    if (depth > 4) return std::nullopt;
    std::optional<bool> result;
    for (const auto& s : fn.body) {
      if (s.kind == StatementKind::Conditional && is_auth_predicate(s) && !is_lazy_init(s)) {
        bool fails = s.keyword == "assert" ||
                     (negative_polarity(s.expression) && terminates(s.children)) ||
                     (!negative_polarity(s.expression) && !s.alternative.empty() &&
                      terminates(s.alternative));
        if (fails) {
          bool bound = predicate_caller_bound(s.expression, s.location.line, &fn);
          result = result.value_or(false) || bound;
        }
      }
      const Expression* call = (s.kind == StatementKind::Call || s.kind == StatementKind::Assignment)
                                   ? top_call(s.expression)
                                   : nullptr;
      if (call && is_validator_name(call->children.front().dotted())) {
        bool bound = arguments_caller_bound(*call, s.location.line, &fn);
        result = result.value_or(false) || bound;
      }
    }
    return result;
  }

  bool is_auth_predicate(const Statement& s) const {
    if (!s.has_expression) return false;
    for (const auto& id : s.predicate_identifiers) {
      if (identity_name(id)) return true;
    }
    bool validator = false;
    walk(s.expression, [&](const Expression& n) {
      if (n.kind == ExprKind::Call && is_validator_name(n.children.front().dotted())) validator = true;
      if (n.is_string_literal() && n.name.size() < 64 && names_credential(n.name)) validator = true;
    });
    return validator;
  }

  void scan_block(const std::vector<Statement>& block, const FunctionDef* fn,
                  std::vector<const Statement*> outer_rest, AuthTiming timing) {
    const std::string function = fn ? fn->qualified_name : module_scope(block.empty() ? "" : block.front().location.file);
    for (std::size_t i = 0; i < block.size(); ++i) {
      const Statement& s = block[i];
      std::vector<const Statement*> later;
      for (std::size_t j = i + 1; j < block.size(); ++j) later.push_back(&block[j]);
      later.insert(later.end(), outer_rest.begin(), outer_rest.end());

      if (s.kind == StatementKind::Conditional) {
        scan_conditional(s, fn, function, later, timing);
      } else if (s.kind == StatementKind::Call || s.kind == StatementKind::Assignment) {
        scan_call_statement(s, fn, function, later, timing);
      }
      if (timing == AuthTiming::PerInvocation && s.kind == StatementKind::Assignment) {
        scan_in_path_acquisition(s, fn, function);
      }

      if (s.kind == StatementKind::With || (s.kind == StatementKind::Other && s.keyword == "try")) {
        scan_block(s.children, fn, later, timing);
        for (const auto& alt : s.alternative) scan_block(alt.children, fn, {}, timing);
      } else {
        scan_block(s.children, fn, {}, timing);
        scan_block(s.alternative, fn, {}, timing);
      }
    }
  }

  void scan_conditional(const Statement& s, const FunctionDef* fn, const std::string& function,
                        const std::vector<const Statement*>& later, AuthTiming timing) {
    if (!is_auth_predicate(s) || is_lazy_init(s)) return;
    AuthCheck c = make(CheckMechanism::Guard, s.location, s.predicate_text, function, timing);
    auto words = expression_words(s.expression);
    c.form = form_from_words(words);
    c.caller_bound = timing == AuthTiming::PerInvocation &&
                     predicate_caller_bound(s.expression, s.location.line, fn);
    if (s.keyword == "assert") {
      collect_sites(later, c.dominated_sites);
    } else if (negative_polarity(s.expression)) {
      if (terminates(s.children)) {
        collect_sites(s.alternative, c.dominated_sites);
        collect_sites(later, c.dominated_sites);
      }
    } else if (!s.alternative.empty()) {
      if (terminates(s.alternative)) {
        collect_sites(s.children, c.dominated_sites);
        collect_sites(later, c.dominated_sites);
      }
    } else if (has_comparison_or_validator(s.expression)) {
      collect_sites(s.children, c.dominated_sites);
    }
    if (timing == AuthTiming::StartupOnce) {
      for (const auto& id : s.predicate_identifiers) {
        if (is_global_name(id, s.location.file, fn)) c.state_names.insert(id);
      }
      if (c.state_names.empty()) return;
    }
    // The predicate's own calls run before the guard decides.
    for (const auto& call : s.calls) {
      c.dominated_sites.erase(std::remove(c.dominated_sites.begin(), c.dominated_sites.end(), call.location),
                              c.dominated_sites.end());
    }
    out_.push_back(std::move(c));
  }

  void scan_call_statement(const Statement& s, const FunctionDef* fn, const std::string& function,
                           const std::vector<const Statement*>& later, AuthTiming timing) {
    const Expression* call = top_call(s.expression);
    if (!call) return;
    std::string callee = call->children.front().dotted();
    bool named = is_validator_name(callee);
    std::optional<bool> implicit;
    if (fn || timing == AuthTiming::StartupOnce) {
      CallSite probe;
      for (const auto& cs : s.calls) {
        if (cs.location == call->location) probe = cs;
      }
      if (!probe.callee_expression.empty()) {
        for (const auto& target : r_.resolve(probe)) {
          const FunctionDef* g = r_.function(target);
          if (!g) continue;
          if (auto bound = fail_fast_guard(*g)) implicit = implicit.value_or(false) || *bound;
        }
      }
    }
    if (!named && !implicit) return;
    AuthCheck c = make(CheckMechanism::Validator, s.location, call->text, function, timing);
    c.form = form_from_words(expression_words(*call));
    if (timing == AuthTiming::PerInvocation) {
      c.caller_bound = implicit.value_or(false) || arguments_caller_bound(*call, s.location.line, fn);
    }
    collect_sites(later, c.dominated_sites);
    if (timing == AuthTiming::StartupOnce) {
      c.form = AuthForm::CachedCredential;
      for (const auto& t : s.targets) add_state_target(c, t, fn);
      const Expression& callee_expr = call->children.front();
      if (callee_expr.kind == ExprKind::Attribute) add_state_target(c, callee_expr.children.front(), fn);
      if (c.state_names.empty()) return;
    }
    out_.push_back(std::move(c));
  }

  bool is_login_call(const Expression& call) const {
    std::string tail = tail_of(call.children.front().dotted());
    auto words = util::identifier_words(tail);
    auto has = [&](const char* w) { return std::find(words.begin(), words.end(), w) != words.end(); };
    if (has("login") || has("authenticate") || has("authorize") || has("signin")) return true;
    if (has("token") && (has("get") || has("fetch") || has("acquire") || has("refresh") ||
                         has("request") || has("load") || has("read"))) {
      return true;
    }
    return false;
  }

  Acquisition acquisition(const Statement& s, const FunctionDef* fn) const {
    Acquisition acq;
    if (!s.has_expression) return acq;
    bool target_named = false;
    for (const auto& t : s.targets) target_named = target_named || names_credential(t.text);
    DependencyTree tree = extract_expression_tree(s.expression, s.location.line, r_, fn,
                                                  &ctx_.input_parameters);
    std::function<void(const DependencyTree&)> visit = [&](const DependencyTree& t) {
      if (acq.found) return;
      if (t.kind == DependencyKind::EnvRead || t.kind == DependencyKind::FileRead) {
        if (names_credential(t.symbol) || names_credential(t.text) || target_named) {
          acq.found = true;
          acq.evidence_symbol = t.symbol.empty() ? t.text : t.symbol;
        }
      }
      for (const auto& c : t.children) visit(c);
    };
    visit(tree);
    if (!acq.found) {
      walk(s.expression, [&](const Expression& n) {
        if (!acq.found && n.kind == ExprKind::Call && is_login_call(n)) {
          acq.found = true;
          acq.evidence_symbol = n.children.front().dotted();
        }
      });
    }
    return acq;
  }

  bool is_global_name(const std::string& name, const std::string& file, const FunctionDef* fn) const {
    if (fn) {
      bool declared = false;
      walk_statements(fn->body, [&](const Statement& s) {
        if (s.keyword == "global" &&
            std::find(s.names.begin(), s.names.end(), name) != s.names.end()) {
          declared = true;
        }
      });
      if (declared) return true;
      if (fn->parameter(name)) return false;
      bool local = false;
      walk_statements(fn->body, [&](const Statement& s) {
        if (s.kind != StatementKind::Assignment) return;
        for (const auto& t : s.targets) local = local || (t.kind == ExprKind::Name && t.name == name);
      });
      if (local) return false;
    }
    for (const auto& s : model_.module_statements) {
      if (s.location.file != file || s.kind != StatementKind::Assignment) continue;
      for (const auto& t : s.targets) {
        if (t.kind == ExprKind::Name && t.name == name) return true;
      }
    }
    return !fn;
  }

  void add_state_target(AuthCheck& c, const Expression& target, const FunctionDef* fn) const {
    const Expression* t = &target;
    while (t->kind == ExprKind::Subscript) t = &t->children.front();
    if (t->kind == ExprKind::Tuple || t->kind == ExprKind::List) {
      for (const auto& child : t->children) add_state_target(c, child, fn);
      return;
    }
    if (t->kind == ExprKind::Attribute) {
      std::string dotted = t->dotted();
      if (util::starts_with(dotted, "self.")) {
        c.state_names.insert(dotted);
        return;
      }
      std::string head = dotted.substr(0, dotted.find('.'));
      if (is_global_name(head, c.guard_location.file, fn)) c.state_names.insert(head);
      return;
    }
    if (t->kind == ExprKind::Name && is_global_name(t->name, c.guard_location.file, fn)) {
      c.state_names.insert(t->name);
    }
  }

  void scan_in_path_acquisition(const Statement& s, const FunctionDef* fn, const std::string& function) {
    Acquisition acq = acquisition(s, fn);
    if (!acq.found) return;
    AuthCheck c = make(CheckMechanism::Acquisition, s.location,
                       s.targets.empty() ? s.expression.text
                                         : s.targets.front().text + " = " + s.expression.text,
                       function, AuthTiming::StartupOnce);
    c.form = AuthForm::CachedCredential;
    for (const auto& t : s.targets) {
      add_state_target(c, t, fn);
      if (t.kind == ExprKind::Name) c.state_names.insert(t.name);
    }
    out_.push_back(std::move(c));
  }

  void scan_startup_block(const std::vector<Statement>& block, const FunctionDef* fn) {
    const std::string function = fn ? fn->qualified_name
                                     : (block.empty() ? std::string() : module_scope(block.front().location.file));
    walk_statements(block, [&](const Statement& s) {
      if (s.kind != StatementKind::Assignment) return;
      Acquisition acq = acquisition(s, fn);
      if (!acq.found) return;
      AuthCheck c = make(CheckMechanism::Acquisition, s.location,
                         s.targets.empty() ? s.expression.text
                                           : s.targets.front().text + " = " + s.expression.text,
                         function, AuthTiming::StartupOnce);
      c.form = AuthForm::CachedCredential;
      for (const auto& t : s.targets) add_state_target(c, t, fn);
      if (!c.state_names.empty()) out_.push_back(std::move(c));
    });
    scan_block(block, fn, {}, AuthTiming::StartupOnce);
  }

  void scan_startup() {
    std::map<std::string, std::vector<Statement>> by_file;
    for (const auto& s : model_.module_statements) by_file[s.location.file].push_back(s);
    for (const auto& [file, stmts] : by_file) scan_startup_block(stmts, nullptr);
    for (const auto& cls : model_.classes) {
      if (!cls.body.empty()) scan_startup_block(cls.body, nullptr);
    }
    for (const auto& fn : model_.functions) {
      if (ctx_.related_functions.count(fn.qualified_name)) continue;
      scan_startup_block(fn.body, &fn);
    }
  }

  void scan_handler_decorators() {
    const FunctionDef* h = r_.function(ctx_.tool.handler);
    if (!h) return;
    for (const auto& d : h->decorators) {
      auto words = util::identifier_words(tail_of(d.callee));
      if (!is_validator_name(d.callee) && !words_credential(words)) continue;
      if (tail_of(d.callee) == "tool") continue;
      AuthCheck c = make(CheckMechanism::Validator, d.location, d.expression, h->qualified_name,
                         AuthTiming::PerInvocation);
      c.form = form_from_words(words);
      c.dominates_function = true;
      for (const auto& cs : h->call_sites) c.dominated_sites.push_back(cs.location);
      out_.push_back(std::move(c));
    }
  }

  static std::set<std::string> referenced_names(const FunctionDef& fn) {
    std::set<std::string> names;
    auto add = [&](const Expression& e) {
      walk(e, [&](const Expression& n) {
        if (n.kind == ExprKind::Name) names.insert(n.name);
        if (n.kind == ExprKind::Attribute) {
          std::string d = n.dotted();
          if (d.find_first_of("()[] ") == std::string::npos) names.insert(d);
        }
      });
    };
    walk_statements(fn.body, [&](const Statement& s) {
      if (s.has_expression) add(s.expression);
      for (const auto& t : s.targets) add(t);
    });
    return names;
  }

  // Extends state names through module-level and non-path assignments that
  // derive new global/object state from them.
  void close_state(AuthCheck& c) const {
    auto references = [&](const Expression& e) {
      bool hit = false;
      walk(e, [&](const Expression& n) {
        if (hit) return;
        if (n.kind == ExprKind::Name && c.state_names.count(n.name)) hit = true;
        if (n.kind == ExprKind::Attribute && c.state_names.count(n.dotted())) hit = true;
      });
      return hit;
    };
    bool changed = true;
    while (changed) {
      changed = false;
      auto visit = [&](const std::vector<Statement>& stmts, const FunctionDef* fn) {
        walk_statements(stmts, [&](const Statement& s) {
          if (s.kind != StatementKind::Assignment || !references(s.expression)) return;
          std::size_t before = c.state_names.size();
          for (const auto& t : s.targets) add_state_target(c, t, fn);
          if (c.state_names.size() != before) changed = true;
        });
      };
      visit(model_.module_statements, nullptr);
      for (const auto& cls : model_.classes) visit(cls.body, nullptr);
      for (const auto& fn : model_.functions) {
        if (!ctx_.related_functions.count(fn.qualified_name) ||
            fn.qualified_name == c.function) {
          visit(fn.body, &fn);
        }
      }
    }
  }

  void finalize() {
    std::map<std::string, std::set<std::string>> refs;
    for (const auto& name : ctx_.related_functions) {
      if (const FunctionDef* fn = r_.function(name)) refs[name] = referenced_names(*fn);
    }
    for (auto& c : out_) {
      std::sort(c.dominated_sites.begin(), c.dominated_sites.end());
      c.dominated_sites.erase(std::unique(c.dominated_sites.begin(), c.dominated_sites.end()),
                              c.dominated_sites.end());
      if (c.timing == AuthTiming::StartupOnce) {
        close_state(c);
        for (const auto& [fn, names] : refs) {
          bool uses = fn == c.function;
          for (const auto& sname : c.state_names) uses = uses || names.count(sname) > 0;
          if (uses) c.guarded_functions.insert(fn);
        }
        continue;
      }
      std::set<std::string> direct;
      for (const auto& edge : ctx_.edges) {
        if (edge.caller != c.function) continue;
        if (c.dominates_function ||
            std::binary_search(c.dominated_sites.begin(), c.dominated_sites.end(), edge.location)) {
          direct.insert(edge.callee);
        }
      }
      std::deque<std::string> queue(direct.begin(), direct.end());
      while (!queue.empty()) {
        std::string f = queue.front();
        queue.pop_front();
        if (!c.guarded_functions.insert(f).second) continue;
        for (const auto& edge : ctx_.edges) {
          if (edge.caller == f) queue.push_back(edge.callee);
        }
      }
    }
  }

  const ToolContext& ctx_;
  const CallResolver& r_;
  const IdentityLexicon& lex_;
  const ProgramModel& model_;
  std::vector<AuthCheck> out_;
};

}  // namespace

std::vector<AuthCheck> detect_auth_checks(const ToolContext& context, const CallResolver& resolver,
                                          const IdentityLexicon& lexicon) {
  if (context.related_functions.empty()) return {};
  return Detector(context, resolver, lexicon).run();
}

std::vector<AuthCheck> detect_auth_checks(const ToolContext& context, const ProgramModel& model) {
  CallResolver resolver(model);
  return detect_auth_checks(context, resolver, IdentityLexicon::builtin());
}

// ---------------------------------------------------------- classification

namespace {

struct PathStep {
  std::string function;
  SourceLocation site;  // call leaving this function, or the operation itself
};

using Path = std::vector<PathStep>;

struct PathSearch {
  const ToolContext& ctx;
  std::string target;
  SourceLocation op_site;
  std::map<std::string, std::vector<const CallEdge*>> out_edges;
  std::vector<Path> paths;
  bool truncated = false;

  PathSearch(const ToolContext& c, std::string t, SourceLocation site)
      : ctx(c), target(std::move(t)), op_site(std::move(site)) {
    for (const auto& e : ctx.edges) out_edges[e.caller].push_back(&e);
  }

  void run() {
    Path current;
    std::set<std::string> on_path;
    dfs(ctx.tool.handler, current, on_path);
  }

  void dfs(const std::string& node, Path& current, std::set<std::string>& on_path) {
    if (truncated) return;
    if (node == target) {
      if (paths.size() >= kMaxPathsPerOperation) {
        truncated = true;
        return;
      }
      current.push_back({node, op_site});
      paths.push_back(current);
      current.pop_back();
      // A target reached through itself would only repeat nodes.
      return;
    }
    on_path.insert(node);
    for (const CallEdge* e : out_edges[node]) {
      if (on_path.count(e->callee)) continue;
      current.push_back({node, e->location});
      dfs(e->callee, current, on_path);
      current.pop_back();
      if (truncated) break;
    }
    on_path.erase(node);
  }
};

int check_strength(const AuthCheck& c, const Path& path) {
  if (c.timing == AuthTiming::PerInvocation) {
    bool on_path = false;
    bool dominating = false;
    for (const auto& step : path) {
      if (step.function != c.function) continue;
      on_path = true;
      if (c.dominates_function ||
          std::binary_search(c.dominated_sites.begin(), c.dominated_sites.end(), step.site)) {
        dominating = true;
      }
    }
    if (dominating && c.caller_bound) return verdict_rank(Verdict::Secure);
    if (on_path) return verdict_rank(Verdict::AuthRuntime);
    return verdict_rank(Verdict::AuthNone);
  }
  for (const auto& step : path) {
    if (step.function == c.function || c.guarded_functions.count(step.function)) {
      return verdict_rank(Verdict::AuthCache);
    }
  }
  return verdict_rank(Verdict::AuthNone);
}

Verdict verdict_at(int rank) {
  switch (rank) {
    case 0: return Verdict::AuthNone;
    case 1: return Verdict::AuthCache;
    case 2: return Verdict::AuthRuntime;
    default: return Verdict::Secure;
  }
}

}  // namespace

Classification classify_tool(const ToolEntry& entry, const ToolContext& context,
                             const std::vector<AuthCheck>& checks,
                             const std::vector<SensitiveOperation>& sensitive) {
  const auto& related = context.related_functions;
  for (const auto& c : checks) {
    if (c.timing == AuthTiming::PerInvocation && !related.count(c.function)) {
      throw InconsistentInput("per-invocation check outside tool context: " + c.function);
    }
  }
  for (const auto& op : sensitive) {
    for (const auto& f : op.via_path) {
      if (!related.count(f)) throw InconsistentInput("sensitive operation outside tool context: " + f);
    }
    if (op.via_path.empty()) throw InconsistentInput("sensitive operation without call path");
  }

  Classification result;
  result.tool = entry;
  if (sensitive.empty()) {
    result.verdict = Verdict::NoSensitiveOps;
    result.rationale = "no sensitive operation is reachable from the handler";
    return result;
  }

  int overall = verdict_rank(Verdict::Secure);
  std::vector<std::pair<const SensitiveOperation*, Path>> worst_paths;
  std::vector<std::pair<const SensitiveOperation*, int>> per_op;
  for (const auto& op : sensitive) {
    PathSearch search(context, op.function(), op.location);
    search.run();
    if (search.truncated) {
      result.diagnostics.push_back({DiagnosticKind::PathLimit,
                                    "path enumeration capped at " +
                                        std::to_string(kMaxPathsPerOperation) + " for " + op.matched_api,
                                    op.location});
    }
    if (search.paths.empty()) {
      Path fallback;
      for (std::size_t i = 0; i < op.via_path.size(); ++i) {
        fallback.push_back({op.via_path[i], i + 1 == op.via_path.size() ? op.location : SourceLocation{}});
      }
      search.paths.push_back(fallback);
    }
    int op_rank = verdict_rank(Verdict::Secure);
    std::vector<std::pair<Path, int>> scored;
    for (const auto& path : search.paths) {
      int best = verdict_rank(Verdict::AuthNone);
      for (const auto& c : checks) best = std::max(best, check_strength(c, path));
      scored.emplace_back(path, best);
      op_rank = std::min(op_rank, best);
    }
    per_op.emplace_back(&op, op_rank);
    if (op_rank < overall) {
      overall = op_rank;
      worst_paths.clear();
    }
    if (op_rank == overall) {
      for (auto& [path, rank] : scored) {
        if (rank == op_rank) worst_paths.emplace_back(&op, path);
      }
    }
  }
  result.verdict = verdict_at(overall);
  result.unconfirmed = result.verdict == Verdict::AuthRuntime;

  std::set<std::size_t> support;
  for (const auto& [op, path] : worst_paths) {
    for (std::size_t i = 0; i < checks.size(); ++i) {
      if (check_strength(checks[i], path) > verdict_rank(Verdict::AuthNone)) support.insert(i);
    }
  }
  for (std::size_t i : support) result.supporting_checks.push_back(checks[i]);
  for (const auto& [op, rank] : per_op) {
    if (rank < verdict_rank(Verdict::Secure)) result.unguarded_operations.push_back(*op);
  }

  switch (result.verdict) {
    case Verdict::AuthNone:
      result.rationale = "a sensitive operation is reachable with no authorization check on its path";
      break;
    case Verdict::AuthCache:
      result.rationale =
          "the weakest path relies only on credentials acquired once and reused across invocations";
      break;
    case Verdict::AuthRuntime:
      result.rationale =
          "per-invocation checks exist but at least one path is not dominated by a caller-bound check";
      break;
    case Verdict::Secure:
      result.rationale = "every path to every sensitive operation is dominated by a caller-bound "
                         "per-invocation check";
      break;
    case Verdict::NoSensitiveOps:
      break;
  }
  return result;
}

}  // namespace mcpauth
