#pragma once

#include <set>
#include <string>
#include <vector>

#include "mcpauth/dependency.hpp"
#include "mcpauth/sensitive_ops.hpp"

namespace mcpauth {

enum class AuthForm { OAuth, BearerToken, ApiKey, UsernamePassword, CachedCredential, SessionCheck, Other };
enum class AuthTiming { StartupOnce, PerInvocation };
enum class CheckMechanism { Guard, Validator, Acquisition };

const char* to_string(AuthForm form);
const char* to_string(AuthTiming timing);
const char* to_string(CheckMechanism mechanism);
AuthForm auth_form_from_string(std::string_view text);
AuthTiming auth_timing_from_string(std::string_view text);

struct AuthCheck {
  AuthForm form = AuthForm::Other;
  AuthTiming timing = AuthTiming::PerInvocation;
  bool caller_bound = false;
  SourceLocation guard_location;
  std::set<std::string> guarded_functions;
  std::string evidence;  // predicate or call text

  CheckMechanism mechanism = CheckMechanism::Guard;
  /// Function holding the check, or "<file>::<module>" for module scope.
  std::string function;
  /// Call sites inside `function` that execute only after the check passes.
  std::vector<SourceLocation> dominated_sites;
  /// Applies to every call in `function` (handler decorators).
  bool dominates_function = false;
  /// Global or object state holding a startup credential, closed over
  /// derived module-level values.
  std::set<std::string> state_names;
};

/// Identifier patterns naming per-caller identity. Entries are matched as
/// whole-word sequences of snake_case/camelCase identifiers.
class IdentityLexicon {
 public:
  static IdentityLexicon parse(std::string_view text);
  static IdentityLexicon load(const std::string& path);
  static const IdentityLexicon& builtin();

  bool matches(std::string_view identifier) const;
  const std::string& hash() const { return hash_; }
  const std::vector<std::vector<std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::vector<std::string>> entries_;
  std::string hash_;
};

/// Built-in vocabulary of credential-bearing names (token, api_key, ...).
bool names_credential(std::string_view identifier);

std::vector<AuthCheck> detect_auth_checks(const ToolContext& context, const CallResolver& resolver,
                                          const IdentityLexicon& lexicon);
std::vector<AuthCheck> detect_auth_checks(const ToolContext& context, const ProgramModel& model);

/// Ordered by strength: AuthNone < AuthCache < AuthRuntime < Secure.
enum class Verdict { Secure, AuthNone, AuthCache, AuthRuntime, NoSensitiveOps };

const char* to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view text);
/// Position in the strength order; NoSensitiveOps ranks above Secure.
int verdict_rank(Verdict verdict);
bool is_vulnerable(Verdict verdict);

inline constexpr std::size_t kMaxPathsPerOperation = 256;

struct Classification {
  ToolEntry tool;
  Verdict verdict = Verdict::NoSensitiveOps;
  std::vector<AuthCheck> supporting_checks;
  std::vector<SensitiveOperation> unguarded_operations;
  std::string rationale;
  bool unconfirmed = false;  // AuthRuntime from static evidence only
  Diagnostics diagnostics;
};

/// Throws InconsistentInput if a per-invocation check or an operation lies
/// outside the context's related functions.
Classification classify_tool(const ToolEntry& entry, const ToolContext& context,
                             const std::vector<AuthCheck>& checks,
                             const std::vector<SensitiveOperation>& sensitive);

}  // namespace mcpauth
