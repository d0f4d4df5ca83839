#include "epistwin/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"

#include "epistwin/community.hpp"
#include "epistwin/domain.hpp"
#include "epistwin/errors.hpp"
#include "epistwin/eval.hpp"
#include "epistwin/gateway.hpp"
#include "epistwin/pkg.hpp"
#include "epistwin/schema_registry.hpp"
#include "epistwin/util.hpp"

namespace epistwin {

const char* gateway_mode_name(GatewayMode mode) {
    switch (mode) {
        case GatewayMode::Live: return "live";
        case GatewayMode::Stub: return "stub";
        case GatewayMode::Replay: return "replay";
        case GatewayMode::Record: return "record";
    }
    return "stub";
}

GatewayMode parse_gateway_mode(std::string_view name) {
    if (name == "live") return GatewayMode::Live;
    if (name == "stub") return GatewayMode::Stub;
    if (name == "replay") return GatewayMode::Replay;
    if (name == "record") return GatewayMode::Record;
    raise(ErrorKind::Usage, "unknown gateway mode '" + std::string(name) + "'");
}

const char* policy_kind_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::Llm: return "llm";
        case PolicyKind::Scripted: return "scripted";
        case PolicyKind::Heuristic: return "heuristic";
    }
    return "heuristic";
}

PolicyKind parse_policy_kind(std::string_view name) {
    if (name == "llm") return PolicyKind::Llm;
    if (name == "scripted") return PolicyKind::Scripted;
    if (name == "heuristic") return PolicyKind::Heuristic;
    raise(ErrorKind::Usage, "unknown policy '" + std::string(name) + "'");
}

const char* extractor_name(ExtractorBackend backend) {
    return backend == ExtractorBackend::Llm ? "llm" : "rule";
}

ExtractorBackend parse_extractor(std::string_view name) {
    if (name == "llm") return ExtractorBackend::Llm;
    if (name == "rule") return ExtractorBackend::Rule;
    raise(ErrorKind::Usage, "unknown extractor '" + std::string(name) + "'");
}

void validate_run_config(const RunConfig& config) {
    if (config.gateway == GatewayMode::Replay && config.transcript.empty())
        raise(ErrorKind::Usage, "--gateway replay requires --transcript");
    if (config.gateway == GatewayMode::Record && config.transcript.empty())
        raise(ErrorKind::Usage, "--gateway record requires --transcript");
    if (config.policy == PolicyKind::Scripted && config.script.empty())
        raise(ErrorKind::Usage, "--policy scripted requires --script");
}

namespace {

void require_flag(const std::string& value, const char* flag) {
    if (value.empty())
        raise(ErrorKind::Usage, std::string(flag) + " is required for this command");
}

// Re-raises a value parse failure with the flag it came from.
template <typename Parser>
auto parse_flag_value(const char* flag, const std::string& value, Parser parser) {
    try {
        return parser(value);
    } catch (const EtError& e) {
        raise(ErrorKind::Usage, std::string(flag) + ": " + e.message());
    }
}

SchemaRegistry load_registry_for(const RunConfig& config) {
    std::string path = config.registry;
    if (path.empty()) {
        require_flag(config.fixture, "--fixture");
        namespace fs = std::filesystem;
        path = (fs::path(config.fixture).parent_path() / "registry.json").string();
    }
    return SchemaRegistry::from_file(path);
}

PersonalKnowledge load_knowledge(const RunConfig& config, const SchemaRegistry& registry) {
    require_flag(config.fixture, "--fixture");
    return load_personal_knowledge(config.fixture, config.owner, registry);
}

std::unique_ptr<ModelGateway> make_gateway(const RunConfig& config) {
    switch (config.gateway) {
        case GatewayMode::Stub: {
            auto stub = std::make_unique<StubGateway>();
            if (!config.stub_script.empty())
                *stub = StubGateway::from_file(config.stub_script);
            return stub;
        }
        case GatewayMode::Replay:
            return std::make_unique<ReplayGateway>(config.transcript);
        case GatewayMode::Live:
            return std::make_unique<LiveGateway>();
        case GatewayMode::Record:
            return std::make_unique<RecordingGateway>(std::make_unique<LiveGateway>(),
                                                      config.transcript);
    }
    return std::make_unique<StubGateway>();
}

PromptSet make_prompts(const RunConfig& config) {
    if (config.prompts_dir.empty()) return PromptSet::builtin();
    return PromptSet::from_dir(config.prompts_dir);
}

AgentConfig agent_config(const RunConfig& config) {
    AgentConfig agent;
    agent.budget = config.budget;
    agent.initial_mode = config.retrieval;
    return agent;
}

void print_source_counts(std::ostream& out, const std::map<std::string, std::size_t>& counts) {
    for (const auto& [source, count] : counts)
        out << "  " << source << ": " << count << "\n";
}

int cmd_ingest(const RunConfig& config, const std::string& out_path, std::ostream& out) {
    SchemaRegistry registry = load_registry_for(config);
    PersonalKnowledge pk = load_knowledge(config, registry);
    PromptSet prompts = make_prompts(config);
    auto gateway = make_gateway(config);
    Transducer transducer(registry, prompts, gateway.get(), config.extractor);
    Pkg graph = build_graph(pk, transducer);

    const std::string target = out_path.empty() ? config.graph : out_path;
    graph.persist(target);

    out << "ingested " << pk.objects.size() << " objects from " << config.fixture << "\n";
    print_source_counts(out, pk.counts_by_source());
    out << "nodes: " << graph.node_count() << "\n";
    out << "triples: " << graph.triple_count() << "\n";
    out << "reachability violations: " << graph.audit().reachability_violations << "\n";
    out << "graph written to " << target << "\n";
    return 0;
}

int cmd_communities(const RunConfig& config, const std::string& out_path,
                    const std::string& summaries, std::ostream& out) {
    Pkg graph = Pkg::load(config.graph);
    PromptSet prompts = make_prompts(config);
    auto gateway = make_gateway(config);

    SummaryBackend backend = SummaryBackend::Template;
    if (summaries == "llm")
        backend = SummaryBackend::Llm;
    else if (summaries != "template")
        raise(ErrorKind::Usage, "--summaries: unknown backend '" + summaries + "'");

    CommunityOptions options;
    auto reports = build_communities(graph, derive_seed(config.seed, "communities"), options,
                                     backend, gateway.get(), &prompts);
    const std::string target = out_path.empty() ? config.graph : out_path;
    graph.persist(target);

    out << "communities: " << reports.size() << "\n";
    for (const CommunityReport& report : reports)
        out << "  " << report.community_id << "  members: " << report.member_ids.size()
            << "\n";
    out << "graph written to " << target << "\n";
    return 0;
}

int cmd_query(const RunConfig& config, const std::string& question, bool trace,
              std::ostream& out) {
    Pkg graph = Pkg::load(config.graph);
    SchemaRegistry registry = load_registry_for(config);
    PersonalKnowledge pk = load_knowledge(config, registry);
    PromptSet prompts = make_prompts(config);
    auto gateway = make_gateway(config);

    AgentConfig agent_cfg = agent_config(config);
    std::unique_ptr<Policy> policy;
    std::optional<ItemScript> script;
    const std::vector<bool>* verdicts = nullptr;
    switch (config.policy) {
        case PolicyKind::Heuristic:
            policy = std::make_unique<HeuristicPolicy>(config.retrieval);
            break;
        case PolicyKind::Scripted:
            script = ItemScript::from_file(config.script);
            policy = std::make_unique<ScriptedPolicy>(script->steps);
            if (!script->verdicts.empty()) {
                agent_cfg.verifier = VerifierBackend::Scripted;
                verdicts = &script->verdicts;
            }
            break;
        case PolicyKind::Llm:
            policy = std::make_unique<LlmPolicy>(*gateway);
            break;
    }

    Agent agent(graph, pk, agent_cfg, gateway.get(), &prompts);
    AgentResult result = agent.run(question, *policy, verdicts);
    if (trace)
        out << export_trajectory(result.trajectory);
    else
        out << result.answer << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& config, const std::string& items_path,
                 const std::string& judges_csv, const std::string& report_out,
                 std::ostream& out) {
    Pkg graph = Pkg::load(config.graph);
    SchemaRegistry registry = load_registry_for(config);
    PersonalKnowledge pk = load_knowledge(config, registry);
    PromptSet prompts = make_prompts(config);
    auto gateway = make_gateway(config);

    std::vector<BenchmarkItem> items = load_benchmark_items(items_path);
    std::optional<ScriptBook> book;
    if (!config.script.empty()) book = ScriptBook::from_file(config.script);

    auto outcomes = run_benchmark(items, graph, pk, book ? &*book : nullptr,
                                  agent_config(config), gateway.get(), &prompts);
    std::size_t failed = 0;
    for (const BenchmarkOutcome& outcome : outcomes)
        if (!outcome.ok()) ++failed;

    std::vector<std::string> judges;
    for (const std::string& piece : split(judges_csv, ',')) {
        std::string name = trim(piece);
        if (!name.empty()) judges.push_back(std::move(name));
    }
    if (judges.empty()) raise(ErrorKind::Usage, "--judges names no judge models");

    RatingTable table = score_with_panel(outcomes, judges, *gateway, prompts);
    EvalReport report = build_report(table, config.metric_level);

    out << "items: " << outcomes.size() << " (ok: " << outcomes.size() - failed
        << ", failed: " << failed << ")\n\n";
    out << report.text;
    if (!report_out.empty()) {
        std::ofstream sink(report_out, std::ios::binary);
        if (!sink) raise(ErrorKind::Io, "cannot write report to '" + report_out + "'");
        sink << report.machine;
    }
    return 0;
}

int cmd_forget(const RunConfig& config, const std::string& object_id,
               const std::string& out_path, std::ostream& out) {
    Pkg graph = Pkg::load(config.graph);
    ForgetReport report = graph.forget(object_id);
    const std::string target = out_path.empty() ? config.graph : out_path;
    graph.persist(target);

    out << "forgot " << object_id << "\n";
    out << "deleted triples: " << report.deleted_triples.size() << "\n";
    for (const std::string& key : report.deleted_triples) {
        std::string display = key;
        std::replace(display.begin(), display.end(), '\x1f', '\t');
        out << "  " << display << "\n";
    }
    out << "deleted nodes: " << report.deleted_nodes.size() << "\n";
    for (const std::string& id : report.deleted_nodes) out << "  " << id << "\n";
    if (report.overlay_dropped) out << "community overlay dropped\n";
    out << "graph written to " << target << "\n";
    return 0;
}

int cmd_stats(const RunConfig& config, std::ostream& out) {
    Pkg graph = Pkg::load(config.graph);
    std::size_t communities = 0;
    std::size_t objects = 0;
    std::map<std::string, std::size_t> by_source;
    for (const Node* node : graph.nodes_canonical()) {
        if (node->kind == NodeKind::Community) ++communities;
        if (node->kind == NodeKind::InfoObject) {
            ++objects;
            ++by_source[node->type_tag];
        }
    }

    out << "owner: " << graph.owner() << "\n";
    out << "nodes: " << graph.node_count() << "\n";
    out << "triples: " << graph.triple_count() << "\n";
    out << "communities: " << communities << "\n";
    out << "objects: " << objects << "\n";
    print_source_counts(out, by_source);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"personal knowledge graph engine"};
    app.name("epistwin");
    app.fallthrough();
    app.require_subcommand(1);
    app.set_config("--config", "", "read option defaults from a file");

    RunConfig config;
    std::string gateway_str = gateway_mode_name(config.gateway);
    std::string policy_str = policy_kind_name(config.policy);
    std::string extractor_str = extractor_name(config.extractor);
    std::string retrieval_str = retrieval_mode_name(config.retrieval);
    std::string level_str = metric_level_name(config.metric_level);

    app.add_option("--graph", config.graph, "graph store path")->capture_default_str();
    app.add_option("--fixture", config.fixture, "fixture file of information objects");
    app.add_option("--owner", config.owner, "expected fixture owner");
    app.add_option("--registry", config.registry,
                   "schema registry file (default: registry.json beside the fixture)");
    app.add_option("--prompts", config.prompts_dir, "directory of prompt template overrides");
    app.add_option("--transcript", config.transcript,
                   "gateway transcript (replay input, record output)");
    app.add_option("--script", config.script, "agent script file");
    app.add_option("--stub-script", config.stub_script,
                   "digest-keyed responses for the stub gateway");
    app.add_option("--gateway", gateway_str, "gateway mode: live, stub, replay, record")
        ->capture_default_str();
    app.add_option("--policy", policy_str, "agent policy: llm, scripted, heuristic")
        ->capture_default_str();
    app.add_option("--extractor", extractor_str, "triple extractor: llm, rule")
        ->capture_default_str();
    app.add_option("--seed", config.seed, "root seed for all derived randomness")
        ->capture_default_str();
    app.add_option("--budget", config.budget, "agent step budget")->capture_default_str();
    app.add_option("--retrieval", retrieval_str, "default retrieval mode: local, global")
        ->capture_default_str();
    app.add_option("--level", level_str, "agreement metric level: raw, category")
        ->capture_default_str();

    std::string out_path;
    std::string summaries = "template";
    std::string question;
    bool trace = false;
    std::string items_path;
    std::string judges_csv = "judge-1,judge-2,judge-3,judge-4";
    std::string report_out;
    std::string object_id;

    CLI::App* ingest = app.add_subcommand("ingest", "build the graph from a fixture");
    ingest->add_option("--out", out_path, "output graph path (default: --graph)");

    CLI::App* communities =
        app.add_subcommand("communities", "detect, reify, and summarize communities");
    communities->add_option("--out", out_path, "output graph path (default: --graph)");
    communities->add_option("--summaries", summaries, "summary backend: template, llm")
        ->capture_default_str();

    CLI::App* query = app.add_subcommand("query", "answer one question with the agent");
    query->add_option("question", question, "the question to answer")->required();
    query->add_flag("--trace", trace, "print the full trajectory instead of the answer");

    CLI::App* evaluate = app.add_subcommand("evaluate", "run the benchmark and judge panel");
    evaluate->add_option("--items", items_path, "benchmark item file")->required();
    evaluate->add_option("--judges", judges_csv, "comma-separated judge model names")
        ->capture_default_str();
    evaluate->add_option("--report-out", report_out, "write the machine-readable report here");

    CLI::App* forget =
        app.add_subcommand("forget", "remove an information object and its traces");
    forget->add_option("object", object_id, "information object id")->required();
    forget->add_option("--out", out_path, "output graph path (default: --graph)");

    app.add_subcommand("stats", "print graph size and per-source object counts");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        config.gateway = parse_flag_value("--gateway", gateway_str, parse_gateway_mode);
        config.policy = parse_flag_value("--policy", policy_str, parse_policy_kind);
        config.extractor = parse_flag_value("--extractor", extractor_str, parse_extractor);
        config.retrieval = parse_flag_value("--retrieval", retrieval_str, parse_retrieval_mode);
        config.metric_level = parse_flag_value("--level", level_str, parse_metric_level);
        validate_run_config(config);

        if (ingest->parsed()) return cmd_ingest(config, out_path, out);
        if (communities->parsed()) return cmd_communities(config, out_path, summaries, out);
        if (query->parsed()) return cmd_query(config, question, trace, out);
        if (evaluate->parsed())
            return cmd_evaluate(config, items_path, judges_csv, report_out, out);
        if (forget->parsed()) return cmd_forget(config, object_id, out_path, out);
        return cmd_stats(config, out);
    } catch (const EtError& e) {
        if (e.kind() == ErrorKind::Usage) {
            err << "usage error: " << e.message() << "\n";
            return 2;
        }
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace epistwin
