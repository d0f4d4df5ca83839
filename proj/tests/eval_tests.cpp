#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <memory>
#include <optional>

#include "epistwin/eval.hpp"
#include "epistwin/transduction.hpp"
#include "epistwin/util.hpp"
#include "test_support.hpp"

#include "json.hpp"

using namespace epistwin;
using test_support::fixture_path;
using test_support::TempDir;

namespace {

SchemaRegistry shipped_registry() {
    return SchemaRegistry::from_file(fixture_path("registry.json"));
}

// same shape as the agent suite's corpus: a few calendar entries, a note,
// and one captioned photo with a vision sidecar
struct Corpus {
    TempDir dir;
    SchemaRegistry registry = shipped_registry();
    StubGateway gateway;
    PersonalKnowledge pk;
    std::optional<Pkg> graph;

    Corpus() {
        dir.write("crane.png",
                  "Sagrada Familia:Place | shows | construction cranes:Thing.\n");
        dir.write("crane.png.vqa", "yes, two cranes are visible\n");
        std::string lines =
            std::string(R"({"owner":"alex","t_global":"2025-09-01T13:00Z"})") + "\n" +
            R"({"id":"cal-02","source":"Calendar","metadata":{"title":"Flight home","date":"2025-09-01"}})" +
            "\n" +
            R"({"id":"n-01","source":"Note","metadata":{},"payload":{"kind":"text","text":"Sagrada Familia:Place | located_in | Barcelona:Place."}})" +
            "\n" +
            R"({"id":"ph-01","source":"Photos","metadata":{"date":"2025-07-02","location":"Sagrada Familia"},"payload":{"kind":"image","path":"crane.png"}})" +
            "\n";
        auto file = dir.write("k.fxt", lines);
        pk = load_personal_knowledge(file, "alex", registry);
        Transducer t(registry, PromptSet::builtin(), &gateway, ExtractorBackend::Rule);
        graph.emplace(build_graph(pk, t));
    }
};

const char* kItemsText =
    R"({"id":"q-01","query":"where is the sagrada familia?","answer":"Barcelona","dimension":"fact_retrieval","app_span":1})"
    "\n"
    "\n"
    R"({"id":"q-02","query":"what is happening today?","answer":"Flight home","dimension":"temporal","app_span":1})"
    "\n"
    R"({"id":"q-03","query":"do cranes appear at the sagrada familia?","answer":"yes, two cranes are visible","dimension":"cross_source","app_span":2})"
    "\n"
    R"({"id":"q-04","query":"zyzzyva gargoyle","answer":"nothing","dimension":"fact_retrieval","app_span":1})"
    "\n";

const char* kScriptText = R"({
  "q-01": {"steps": [{"thought": "look", "action": "graph_rag_local"}]},
  "q-03": {"steps": [{"action": "graph_rag_local"}], "verdicts": [false]},
  "q-04": {"steps": [{"action": "graph_rag_local"}]}
})";

RatingTable make_table(std::vector<std::string> judges,
                       std::vector<std::vector<int>> rows) {
    RatingTable table;
    table.judges = std::move(judges);
    table.scores = std::move(rows);
    return table;
}

}  // namespace

TEST_CASE("query dimensions round-trip by name") {
    for (QueryDimension d : {QueryDimension::Temporal, QueryDimension::CrossSource,
                             QueryDimension::FactRetrieval})
        CHECK(parse_dimension(dimension_name(d)) == d);
    CHECK_THROWS_WITH_AS(parse_dimension("spatial"), doctest::Contains("dimension"),
                         EtError);
}

TEST_CASE("benchmark items load from line-delimited records") {
    TempDir dir;
    auto path = dir.write("items.fxt", kItemsText);
    auto items = load_benchmark_items(path);
    REQUIRE(items.size() == 4);
    CHECK(items[0].id == "q-01");
    CHECK(items[0].query == "where is the sagrada familia?");
    CHECK(items[0].target_answer == "Barcelona");
    CHECK(items[0].system_answer.empty());
    CHECK(items[0].dimension == QueryDimension::FactRetrieval);
    CHECK(items[1].dimension == QueryDimension::Temporal);
    CHECK(items[2].app_span == 2);

    auto dup = dir.write("dup.fxt",
                         R"({"id":"x","query":"q","answer":"a","dimension":"temporal","app_span":1})"
                         "\n"
                         R"({"id":"x","query":"q","answer":"a","dimension":"temporal","app_span":1})"
                         "\n");
    CHECK_THROWS_WITH_AS(load_benchmark_items(dup), doctest::Contains("duplicate"),
                         EtError);

    auto bad_dim = dir.write("dim.fxt",
                             R"({"id":"x","query":"q","answer":"a","dimension":"odd","app_span":1})"
                             "\n");
    CHECK_THROWS_AS(load_benchmark_items(bad_dim), EtError);

    auto zero_span = dir.write("span.fxt",
                               R"({"id":"x","query":"q","answer":"a","dimension":"temporal","app_span":0})"
                               "\n");
    CHECK_THROWS_WITH_AS(load_benchmark_items(zero_span),
                         doctest::Contains("app_span"), EtError);

    auto not_json = dir.write("broken.fxt", "{nope\n");
    CHECK_THROWS_AS(load_benchmark_items(not_json), EtError);
    CHECK_THROWS_AS(load_benchmark_items(dir.file("absent.fxt")), EtError);
}

TEST_CASE("script books parse per-item steps and verdicts") {
    TempDir dir;
    auto path = dir.write("script.json", kScriptText);
    ScriptBook book = ScriptBook::from_file(path);
    REQUIRE(book.by_item.count("q-01") == 1);
    REQUIRE(book.by_item.count("q-03") == 1);
    CHECK(book.by_item["q-01"].steps.size() == 1);
    CHECK(book.by_item["q-01"].steps[0].thought == "look");
    CHECK(book.by_item["q-01"].steps[0].action.kind == ActionKind::GraphRagLocal);
    CHECK(book.by_item["q-01"].verdicts.empty());
    CHECK(book.by_item["q-03"].verdicts == std::vector<bool>{false});

    auto bad = dir.write("bad.json", "[1,2]");
    CHECK_THROWS_AS(ScriptBook::from_file(bad), EtError);
    CHECK_THROWS_AS(ScriptBook::from_file(dir.file("absent.json")), EtError);
}

TEST_CASE("the benchmark run fills every answer and stays deterministic") {
    Corpus c;
    TempDir dir;
    auto items = load_benchmark_items(dir.write("items.fxt", kItemsText));
    ScriptBook book = ScriptBook::from_file(dir.write("script.json", kScriptText));
    PromptSet prompts = PromptSet::builtin();

    auto outcomes =
        run_benchmark(items, *c.graph, c.pk, &book, {}, &c.gateway, &prompts);
    REQUIRE(outcomes.size() == 4);
    for (const BenchmarkOutcome& outcome : outcomes) {
        CHECK(outcome.ok());
        CHECK_FALSE(outcome.trajectory.steps.empty());
    }

    CHECK(outcomes[0].item.system_answer ==
          "Sagrada Familia —located_in→ Barcelona (source: n-01)");
    // q-02 runs unscripted through the heuristic policy
    CHECK_FALSE(outcomes[1].item.system_answer.empty());
    // q-03's scripted insufficient verdict routes through the image
    CHECK(outcomes[2].item.system_answer == "yes, two cranes are visible");
    bool saw_visual = false;
    for (const AgentStep& step : outcomes[2].trajectory.steps)
        if (step.action.kind == ActionKind::VisualRefine) saw_visual = true;
    CHECK(saw_visual);
    // q-04 anchors nothing and abstains, but the run completes
    CHECK(outcomes[3].item.system_answer == kAbstentionAnswer);

    auto again =
        run_benchmark(items, *c.graph, c.pk, &book, {}, &c.gateway, &prompts);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        CHECK(again[i].item.system_answer == outcomes[i].item.system_answer);
        CHECK(export_trajectory(again[i].trajectory) ==
              export_trajectory(outcomes[i].trajectory));
    }

    CHECK(run_benchmark({}, *c.graph, c.pk, &book, {}, &c.gateway, &prompts).empty());
}

TEST_CASE("per-item failures are recorded and the run continues") {
    Corpus c;
    TempDir dir;
    auto items = load_benchmark_items(dir.write("items.fxt", kItemsText));
    AgentConfig config;
    config.budget = 0;  // every run raises a usage error

    auto outcomes = run_benchmark(items, *c.graph, c.pk, nullptr, config, nullptr, nullptr);
    REQUIRE(outcomes.size() == 4);
    for (const BenchmarkOutcome& outcome : outcomes) {
        CHECK_FALSE(outcome.ok());
        CHECK(outcome.error.find("budget") != std::string::npos);
        CHECK(outcome.item.system_answer.empty());
    }
}

TEST_CASE("the judge panel fills a complete deterministic table") {
    Corpus c;
    TempDir dir;
    auto items = load_benchmark_items(dir.write("items.fxt", kItemsText));
    ScriptBook book = ScriptBook::from_file(dir.write("script.json", kScriptText));
    PromptSet prompts = PromptSet::builtin();
    auto outcomes =
        run_benchmark(items, *c.graph, c.pk, &book, {}, &c.gateway, &prompts);

    std::vector<std::string> judges = {"aria", "brook", "coral", "dune"};
    RatingTable table = score_with_panel(outcomes, judges, c.gateway, prompts);
    CHECK(table.judges == judges);
    REQUIRE(table.items() == 4);
    validate_rating_table(table);

    // q-03's answer equals its gold on the nose: every judge approves
    for (int score : table.scores[2]) CHECK(score >= 4);

    RatingTable again = score_with_panel(outcomes, judges, c.gateway, prompts);
    CHECK(again.scores == table.scores);

    CHECK_THROWS_AS(score_with_panel(outcomes, {}, c.gateway, prompts), EtError);
    CHECK_THROWS_AS(score_with_panel({}, judges, c.gateway, prompts), EtError);
}

TEST_CASE("report means follow the published distribution arithmetic") {
    RatingTable table;
    table.judges = {"solo"};
    for (int i = 0; i < 84; ++i) table.scores.push_back({5});
    for (int i = 0; i < 4; ++i) table.scores.push_back({4});
    for (int i = 0; i < 5; ++i) table.scores.push_back({3});
    for (int i = 0; i < 5; ++i) table.scores.push_back({2});
    for (int i = 0; i < 2; ++i) table.scores.push_back({1});

    EvalReport report = build_report(table);
    REQUIRE(report.judges.size() == 1);
    CHECK(report.judges[0].mean == doctest::Approx(4.63).epsilon(1e-12));
    CHECK(report.judges[0].pct[4] == doctest::Approx(84.0));
    CHECK(report.judges[0].pct[0] == doctest::Approx(2.0));
    CHECK(report.pairs.empty());
    CHECK_FALSE(report.alpha.has_value());

    double recomputed = 0.0;
    for (int s = 1; s <= 5; ++s)
        recomputed += s * report.judges[0].pct[s - 1] / 100.0;
    CHECK(recomputed == doctest::Approx(report.judges[0].mean).epsilon(1e-9));
}

TEST_CASE("a uniform table reports the degenerate conventions") {
    RatingTable table;
    table.judges = {"a", "b", "c", "d"};
    for (int i = 0; i < 10; ++i) table.scores.push_back({5, 5, 5, 5});

    EvalReport report = build_report(table);
    for (const JudgeSummary& judge : report.judges)
        CHECK(judge.mean == doctest::Approx(5.0));
    CHECK(report.category_pct[2] == doctest::Approx(100.0));
    REQUIRE(report.pairs.size() == 6);
    for (const PairwiseRow& row : report.pairs) {
        CHECK(row.ac1 == doctest::Approx(1.0));
        CHECK(row.agreement == doctest::Approx(1.0));
        REQUIRE(row.kappa.has_value());
        CHECK(*row.kappa == doctest::Approx(1.0));
        CHECK_FALSE(row.rho.has_value());
    }
    REQUIRE(report.alpha.has_value());
    CHECK(report.alpha->value == 1.0);
    CHECK(report.alpha->degenerate);
    CHECK(report.text.find("n/a") != std::string::npos);
    CHECK(report.text.find("degenerate: one repeated value") != std::string::npos);
}

TEST_CASE("the paradox table shows its three metrics side by side") {
    RatingTable table;
    table.judges = {"left", "right"};
    for (int i = 0; i < 9; ++i) table.scores.push_back({5, 5});
    table.scores.push_back({5, 1});

    EvalReport report = build_report(table);
    REQUIRE(report.pairs.size() == 1);
    const PairwiseRow& row = report.pairs[0];
    CHECK(row.agreement == doctest::Approx(0.9));
    CHECK(std::abs(row.ac1 - 0.8950) < 5e-5);
    REQUIRE(row.kappa.has_value());
    CHECK(std::abs(*row.kappa) < 1e-12);

    CHECK(report.text.find("0.8950") != std::string::npos);
    CHECK(report.text.find("0.9000") != std::string::npos);
    CHECK(report.text.find("0.0000") != std::string::npos);
    CHECK(report.text.find("category level") != std::string::npos);
}

TEST_CASE("the level flag moves the agreement metrics to raw scores") {
    RatingTable table = make_table({"a", "b"}, {{5, 4}, {4, 5}});
    EvalReport category = build_report(table, MetricLevel::Category);
    EvalReport raw = build_report(table, MetricLevel::Raw);
    CHECK(category.pairs[0].agreement == doctest::Approx(1.0));
    CHECK(raw.pairs[0].agreement == doctest::Approx(0.0));
    CHECK(raw.text.find("raw level") != std::string::npos);
}

TEST_CASE("the machine report mirrors the text report") {
    RatingTable table;
    table.judges = {"left", "right"};
    for (int i = 0; i < 9; ++i) table.scores.push_back({5, 5});
    table.scores.push_back({5, 1});

    EvalReport report = build_report(table);
    nlohmann::json doc = nlohmann::json::parse(report.machine);
    CHECK(doc["level"] == "category");
    REQUIRE(doc["judges"].size() == 2);
    CHECK(doc["judges"][0]["name"] == "left");
    CHECK(doc["judges"][0]["mean"].get<double>() == doctest::Approx(5.0));
    CHECK(doc["judges"][1]["distribution_pct"]["1"].get<double>() ==
          doctest::Approx(10.0));
    REQUIRE(doc["pairs"].size() == 1);
    CHECK(doc["pairs"][0]["percent_agreement"].get<double>() == doctest::Approx(0.9));
    CHECK(doc["pairs"][0]["rho"].is_null());
    CHECK(doc["alpha"]["degenerate"] == false);

    EvalReport again = build_report(table);
    CHECK(again.machine == report.machine);
    CHECK(again.text == report.text);
}
