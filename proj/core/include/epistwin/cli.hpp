#pragma once
// Operator surface: subcommand dispatch over the whole pipeline (ingest,
// communities, query, evaluate, forget, stats) plus the run configuration
// shared by all of them.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "epistwin/agent.hpp"
#include "epistwin/metrics.hpp"
#include "epistwin/retrieval.hpp"
#include "epistwin/transduction.hpp"

namespace epistwin {

enum class GatewayMode { Live, Stub, Replay, Record };
enum class PolicyKind { Llm, Scripted, Heuristic };

const char* gateway_mode_name(GatewayMode mode);
GatewayMode parse_gateway_mode(std::string_view name);
const char* policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);
const char* extractor_name(ExtractorBackend backend);
ExtractorBackend parse_extractor(std::string_view name);

// Everything a command needs beyond its own positionals. Values come from an
// optional config file with command-line flags taking precedence.
struct RunConfig {
    std::string fixture;
    std::string owner;          // empty accepts whatever the fixture header says
    std::string graph = "graph.pkg";
    std::string registry;       // defaults to registry.json beside the fixture
    std::string prompts_dir;    // empty = built-in templates
    std::string transcript;     // replay input / record output
    std::string script;         // scripted policy steps and verdicts
    std::string stub_script;    // extra digest-keyed stub responses
    GatewayMode gateway = GatewayMode::Stub;
    PolicyKind policy = PolicyKind::Heuristic;
    ExtractorBackend extractor = ExtractorBackend::Rule;
    std::uint64_t seed = 7;
    std::size_t budget = 8;
    RetrievalMode retrieval = RetrievalMode::Local;
    MetricLevel metric_level = MetricLevel::Category;
};

// The cross-field rules: replay and record gateways need a transcript path,
// a scripted policy needs a script path. Raises Usage naming the flag.
void validate_run_config(const RunConfig& config);

// Full command dispatch. Writes results to `out` and diagnostics to `err`;
// returns 0 on success, 1 on a domain error, 2 on a usage error. `args` is
// argv without the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace epistwin
