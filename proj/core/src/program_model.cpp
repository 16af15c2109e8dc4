#include "mcpauth/program_model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "python/lexer.hpp"
#include "python/parser.hpp"

namespace mcpauth {

namespace fs = std::filesystem;

const char* to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::SkippedFile: return "SkippedFile";
    case DiagnosticKind::Ambiguity: return "Ambiguity";
    case DiagnosticKind::Incompleteness: return "Incompleteness";
    case DiagnosticKind::DuplicateRegistration: return "DuplicateRegistration";
    case DiagnosticKind::UnresolvedHandler: return "UnresolvedHandler";
    case DiagnosticKind::UnknownHandler: return "UnknownHandler";
    case DiagnosticKind::DepthLimit: return "DepthLimit";
    case DiagnosticKind::PathLimit: return "PathLimit";
    case DiagnosticKind::UnknownProject: return "UnknownProject";
    case DiagnosticKind::DynamicValidation: return "DynamicValidation";
  }
  return "Unknown";
}

const char* to_string(StatementKind kind) {
  switch (kind) {
    case StatementKind::Assignment: return "Assignment";
    case StatementKind::Call: return "Call";
    case StatementKind::Return: return "Return";
    case StatementKind::Conditional: return "Conditional";
    case StatementKind::Raise: return "Raise";
    case StatementKind::Loop: return "Loop";
    case StatementKind::With: return "With";
    case StatementKind::Other: return "Other";
  }
  return "Other";
}

std::string Expression::dotted() const {
  switch (kind) {
    case ExprKind::Name:
      return name;
    case ExprKind::Attribute: {
      std::string recv = children.empty() ? std::string() : children.front().dotted();
      return recv.empty() ? name : recv + "." + name;
    }
    case ExprKind::Call:
      return children.empty() ? text : children.front().dotted() + "()";
    default:
      return text;
  }
}

const Parameter* FunctionDef::parameter(std::string_view n) const {
  for (const auto& p : parameters) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

const FunctionDef* ProgramModel::find_function(std::string_view qualified_name) const {
  for (const auto& f : functions) {
    if (f.qualified_name == qualified_name) return &f;
  }
  return nullptr;
}

const ClassDef* ProgramModel::find_class(std::string_view qualified_name) const {
  for (const auto& c : classes) {
    if (c.qualified_name == qualified_name) return &c;
  }
  return nullptr;
}

const SourceFile* ProgramModel::find_file(std::string_view path) const {
  for (const auto& f : source_files) {
    if (f.path == path) return &f;
  }
  return nullptr;
}

const FunctionDef* ProgramModel::enclosing_function(const SourceLocation& loc) const {
  const FunctionDef* best = nullptr;
  for (const auto& f : functions) {
    if (f.file != loc.file || loc.line < f.location.line || loc.line > f.end_line) continue;
    if (!best || f.location.line >= best->location.line) best = &f;
  }
  return best;
}

namespace {

class PythonFrontEnd : public FrontEnd {
 public:
  bool accepts(const fs::path& file) const override { return file.extension() == ".py"; }
  void parse_file(const std::string& relative_path, const std::string& content,
                  ProgramModel& model) const override {
    python::parse_python_file(relative_path, content, model);
  }
};

bool skipped_directory(const fs::path& dir) {
  std::string name = dir.filename().string();
  return (!name.empty() && name[0] == '.') || name == "__pycache__" || name == "node_modules" ||
         name == "venv" || name == "site-packages";
}

void parse_one(const std::string& rel, const std::string& content, const FrontEnd& front_end,
               ProgramModel& model) {
  try {
    front_end.parse_file(rel, content, model);
  } catch (const python::SyntaxError& e) {
    model.diagnostics.push_back({DiagnosticKind::SkippedFile, rel + ": " + e.what(),
                                 SourceLocation{rel, e.line(), e.column()}});
  } catch (const std::exception& e) {
    model.diagnostics.push_back(
        {DiagnosticKind::SkippedFile, rel + ": " + e.what(), SourceLocation{rel, 1, 1}});
  }
}

void finalize(ProgramModel& model) {
  auto by_location = [](const auto& a, const auto& b) {
    return std::tie(a.location.file, a.location.line, a.location.column) <
           std::tie(b.location.file, b.location.line, b.location.column);
  };
  std::stable_sort(model.functions.begin(), model.functions.end(), by_location);
  std::stable_sort(model.classes.begin(), model.classes.end(), by_location);
  std::stable_sort(model.source_files.begin(), model.source_files.end(),
                   [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
}

}  // namespace

std::unique_ptr<FrontEnd> make_python_front_end() { return std::make_unique<PythonFrontEnd>(); }

ProgramModel parse_source(const fs::path& project_root) {
  return parse_source(project_root, *make_python_front_end());
}

ProgramModel parse_source(const fs::path& project_root, const FrontEnd& front_end) {
  std::error_code ec;
  if (!fs::is_directory(project_root, ec)) {
    throw ProjectNotFound("project not found: " + project_root.string());
  }
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(project_root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (it->is_directory() && skipped_directory(it->path())) {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && front_end.accepts(it->path())) files.push_back(it->path());
  }
  std::vector<std::pair<std::string, fs::path>> ordered;
  for (const auto& f : files) ordered.emplace_back(fs::relative(f, project_root).generic_string(), f);
  std::sort(ordered.begin(), ordered.end());

  ProgramModel model;
  model.project_id = fs::absolute(project_root).lexically_normal().filename().string();
  if (model.project_id.empty()) {
    model.project_id = fs::absolute(project_root).lexically_normal().parent_path().filename().string();
  }
  for (const auto& [rel, path] : ordered) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      model.diagnostics.push_back({DiagnosticKind::SkippedFile, rel + ": unreadable", std::nullopt});
      continue;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    parse_one(rel, buf.str(), front_end, model);
  }
  finalize(model);
  return model;
}

ProgramModel parse_sources(const std::map<std::string, std::string>& files, std::string project_id) {
  ProgramModel model;
  model.project_id = std::move(project_id);
  auto front_end = make_python_front_end();
  for (const auto& [rel, content] : files) {
    if (!front_end->accepts(rel)) continue;
    parse_one(rel, content, *front_end, model);
  }
  finalize(model);
  return model;
}

}  // namespace mcpauth
