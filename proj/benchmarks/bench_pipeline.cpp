#include <benchmark/benchmark.h>

#include <random>

#include "mcpauth/report.hpp"

using namespace mcpauth;

namespace {

std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(MCPAUTH_FIXTURE_DIR) / rel;
}

// A synthetic server with `n` tools, each calling a shared helper chain.
std::map<std::string, std::string> synthetic_project(int n) {
  std::string src =
      "import subprocess\nimport os\nfrom mcp.server.fastmcp import FastMCP\nmcp = FastMCP(\"bench\")\n"
      "TOKEN = os.environ.get(\"BENCH_TOKEN\")\n\n"
      "def run(cmd):\n    return subprocess.run([\"echo\", cmd], capture_output=True).stdout\n\n"
      "def check(session_id):\n    if session_id not in SESSIONS:\n        raise PermissionError(\"no session\")\n\n"
      "SESSIONS = {}\n\n";
  for (int i = 0; i < n; ++i) {
    std::string k = std::to_string(i);
    src += "def helper_" + k + "(x):\n    y = x + \"" + k + "\"\n    return run(y)\n\n";
    src += "@mcp.tool()\ndef tool_" + k + "(x: str, session_id: str) -> str:\n";
    if (i % 2) src += "    check(session_id)\n";
    src += "    return helper_" + k + "(x)\n\n";
  }
  return {{"server.py", src}};
}

void BM_ParseFixture(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(parse_source(fixture("reference/session_registry")));
}
BENCHMARK(BM_ParseFixture);

void BM_AnalyzeFixture(benchmark::State& state) {
  AnalysisOptions o;
  o.deterministic = true;
  for (auto _ : state) benchmark::DoNotOptimize(analyze_project(fixture("auth_timing/subsequent_call"), o));
}
BENCHMARK(BM_AnalyzeFixture);

void BM_AnalyzeSynthetic(benchmark::State& state) {
  auto files = synthetic_project(static_cast<int>(state.range(0)));
  std::size_t bytes = files.begin()->second.size();
  for (auto _ : state) {
    ProgramModel m = parse_sources(files, "bench");
    benchmark::DoNotOptimize(analyze_model(m));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AnalyzeSynthetic)->RangeMultiplier(4)->Range(4, 256)->Complexity();

void BM_Reachability(benchmark::State& state) {
  std::mt19937 rng(7);
  int n = static_cast<int>(state.range(0));
  CallGraph g;
  for (int i = 0; i < n; ++i) g.add_node("g.py::f" + std::to_string(i));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && std::bernoulli_distribution(4.0 / n)(rng))
        g.add_edge("g.py::f" + std::to_string(i), "g.py::f" + std::to_string(j));
  for (auto _ : state) benchmark::DoNotOptimize(reachable_functions("g.py::f0", g));
}
BENCHMARK(BM_Reachability)->RangeMultiplier(8)->Range(16, 4096);

void BM_CorpusManifest(benchmark::State& state) {
  auto manifest = load_manifest(fixture("corpus/manifest.json").string());
  AnalysisOptions o;
  o.deterministic = true;
  for (auto _ : state) benchmark::DoNotOptimize(run_corpus(manifest, o, static_cast<unsigned>(state.range(0))));
}
BENCHMARK(BM_CorpusManifest)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
