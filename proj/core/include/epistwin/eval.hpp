#pragma once
// Benchmark execution and judge-panel scoring: runs every item through the
// agent, collects a complete rating table from a judge panel, and renders
// the reliability report.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epistwin/agent.hpp"
#include "epistwin/metrics.hpp"

namespace epistwin {

enum class QueryDimension { Temporal, CrossSource, FactRetrieval };

const char* dimension_name(QueryDimension dimension);
QueryDimension parse_dimension(const std::string& name);

struct BenchmarkItem {
    std::string id;
    std::string query;
    std::string target_answer;
    std::string system_answer;  // filled by the run
    std::size_t app_span = 1;   // number of sources the gold reasoning touches
    QueryDimension dimension = QueryDimension::FactRetrieval;
};

// Line-delimited records {id, query, answer, dimension, app_span}.
std::vector<BenchmarkItem> load_benchmark_items(const std::string& path);

// Replayable per-item control: a fixed action list for the policy plus a
// verdict queue for the verifier. Items without an entry run the heuristic
// policy with the configured verifier.
struct ItemScript {
    std::vector<ScriptedPolicy::Step> steps;
    std::vector<bool> verdicts;

    // A bare {steps, verdicts} object in its own file.
    static ItemScript from_file(const std::string& path);
};

struct ScriptBook {
    std::map<std::string, ItemScript> by_item;

    static ScriptBook from_file(const std::string& path);
};

struct BenchmarkOutcome {
    BenchmarkItem item;
    AgentTrajectory trajectory;
    std::string error;  // empty on success; failed items still appear

    bool ok() const { return error.empty(); }
};

// Runs every item through a fresh agent over the same graph. Per-item
// failures are recorded on the outcome and the run continues.
std::vector<BenchmarkOutcome> run_benchmark(const std::vector<BenchmarkItem>& items,
                                            const Pkg& graph,
                                            const PersonalKnowledge& knowledge,
                                            const ScriptBook* scripts,
                                            const AgentConfig& config,
                                            ModelGateway* gateway,
                                            const PromptSet* prompts);

// One judge column per panel member; the model name rides on the gateway
// params so backends can vary behavior per judge.
RatingTable score_with_panel(const std::vector<BenchmarkOutcome>& outcomes,
                             const std::vector<std::string>& judges,
                             ModelGateway& gateway, const PromptSet& prompts);

struct JudgeSummary {
    std::string name;
    double pct[5] = {0, 0, 0, 0, 0};  // index 0 = score 1
    double mean = 0.0;
};

struct PairwiseRow {
    std::string a;
    std::string b;
    double ac1 = 0.0;
    double agreement = 0.0;
    std::optional<double> kappa;  // empty when the denominator degenerates
    std::optional<double> rho;    // empty under zero variance
};

struct EvalReport {
    MetricLevel agreement_level = MetricLevel::Category;
    std::vector<JudgeSummary> judges;
    double category_pct[3] = {0, 0, 0};  // pooled over all cells
    std::vector<PairwiseRow> pairs;
    std::optional<AlphaResult> alpha;  // needs at least 2 judges and 2 items
    std::string text;     // aligned tables for standard output
    std::string machine;  // the same numbers as a JSON document
};

// The agreement level applies to %Agr, kappa, and AC1; rho and alpha always
// read the raw scores.
EvalReport build_report(const RatingTable& table,
                        MetricLevel agreement_level = MetricLevel::Category);

}  // namespace epistwin
