#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <functional>
#include <random>

#include "epistwin/community.hpp"
#include "epistwin/transduction.hpp"
#include "epistwin/util.hpp"
#include "test_support.hpp"

using namespace epistwin;
using test_support::TempDir;
using test_support::fixture_path;

namespace {

// Builds a projection directly from an edge list, bypassing the graph store,
// for algorithm-level cases.
UndirectedProjection make_projection(
    std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges) {
    UndirectedProjection p;
    for (std::size_t i = 0; i < n; ++i) p.vertex_ids.push_back("v" + std::to_string(i));
    p.adjacency.assign(n, {});
    p.degree.assign(n, 0.0);
    for (const auto& [a, b, w] : edges) {
        p.adjacency[a].emplace_back(b, w);
        p.adjacency[b].emplace_back(a, w);
        p.degree[a] += w;
        p.degree[b] += w;
        p.total_weight += w;
    }
    return p;
}

Partition assignment_partition(const UndirectedProjection& p,
                               const std::vector<std::size_t>& assignment) {
    Partition part;
    part.vertex_ids = p.vertex_ids;
    part.content_epoch = p.content_epoch;
    part.assignment = assignment;
    std::size_t clusters = 0;
    for (std::size_t c : assignment) clusters = std::max(clusters, c + 1);
    part.clusters.assign(clusters, {});
    for (std::size_t v = 0; v < assignment.size(); ++v)
        part.clusters[assignment[v]].push_back(v);
    return part;
}

// Best modularity over every partition of the vertex set, enumerated as
// restricted growth strings. Tractable for n <= 8 (4140 partitions).
double exhaustive_best(const UndirectedProjection& p) {
    std::vector<std::size_t> assign(p.vertex_count(), 0);
    double best = -2.0;
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t v,
                                                             std::size_t used) {
        if (v == p.vertex_count()) {
            best = std::max(best, modularity(p, assignment_partition(p, assign)));
            return;
        }
        for (std::size_t c = 0; c <= used; ++c) {
            assign[v] = c;
            walk(v + 1, std::max(used, c + 1));
        }
    };
    walk(0, 0);
    return best;
}

UndirectedProjection random_projection(std::mt19937_64& rng) {
    std::size_t n = 2 + rng() % 7;
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng() % 2 == 0) edges.emplace_back(i, j, 1.0 + rng() % 3);
    if (edges.empty()) edges.emplace_back(0, 1, 1.0);
    return make_projection(n, edges);
}

bool cluster_connected(const UndirectedProjection& p,
                       const std::vector<std::size_t>& cluster) {
    if (cluster.empty()) return true;
    std::set<std::size_t> members(cluster.begin(), cluster.end());
    std::set<std::size_t> seen{cluster.front()};
    std::vector<std::size_t> frontier{cluster.front()};
    while (!frontier.empty()) {
        std::size_t v = frontier.back();
        frontier.pop_back();
        for (const auto& [u, w] : p.adjacency[v]) {
            (void)w;
            if (members.count(u) && !seen.count(u)) {
                seen.insert(u);
                frontier.push_back(u);
            }
        }
    }
    return seen.size() == members.size();
}

SchemaRegistry shipped_registry() {
    return SchemaRegistry::from_file(fixture_path("registry.json"));
}

// Small personal graph with an obvious two-community shape: a health cluster
// and a trip cluster, joined through nothing.
Pkg two_theme_graph() {
    SchemaRegistry registry = shipped_registry();
    Transducer t(registry, PromptSet::builtin(), nullptr, ExtractorBackend::Rule);
    Pkg g = Pkg::create("alex");
    auto add = [&](const std::string& record) {
        t.apply_update(g, parse_information_object(record, registry, "."));
    };
    add(R"({"id":"n-1","source":"Note","metadata":{},"payload":{"kind":"text","text":"Dr Soler:Person | works_at | Clinic Sant Jordi:Place.\nDr Soler:Person | treats | Alex Torres:Person."}})");
    add(R"({"id":"n-2","source":"Note","metadata":{},"payload":{"kind":"text","text":"Sagrada Familia:Place | located_in | Barcelona:Place.\nPark Guell:Place | located_in | Barcelona:Place."}})");
    return g;
}

}  // namespace

TEST_CASE("projection symmetrizes and accumulates parallel triples") {
    Pkg g = Pkg::create("alex");
    Fragment f;
    f.add(NodeDescriptor::entity("a", "T"), "r1", NodeDescriptor::entity("b", "T"),
          TripleOrigin::Content, {"o1"});
    f.add(NodeDescriptor::entity("b", "T"), "r2", NodeDescriptor::entity("a", "T"),
          TripleOrigin::Content, {"o1"});
    f.add(NodeDescriptor::entity("a", "T"), "r3", NodeDescriptor::entity("b", "T"),
          TripleOrigin::Content, {"o1"});
    g.merge(f);

    UndirectedProjection p = project(g);
    REQUIRE(p.vertex_count() == 2);
    CHECK(p.total_weight == doctest::Approx(3.0));
    CHECK(p.edge_weight(0, 1) == doctest::Approx(3.0));
    CHECK(p.degree[0] == doctest::Approx(3.0));
}

TEST_CASE("fresh graphs project to nothing") {
    Pkg g = Pkg::create("alex");
    UndirectedProjection p = project(g);
    CHECK(p.vertex_count() == 0);
    CHECK(p.total_weight == 0.0);
}

TEST_CASE("projection counts every entity and object node as a vertex") {
    Pkg g = two_theme_graph();
    std::size_t expected = 0;
    for (const Node* node : g.nodes_canonical())
        if (node->kind == NodeKind::Entity || node->kind == NodeKind::InfoObject)
            ++expected;
    UndirectedProjection p = project(g);
    CHECK(p.vertex_count() == expected);
    // anchors from the root never show up as edges
    for (std::size_t v = 0; v < p.vertex_count(); ++v)
        for (const auto& [u, w] : p.adjacency[v]) CHECK(w > 0.0);
}

TEST_CASE("modularity matches the hand-computed landmarks") {
    // all vertices in one cluster cancel the null model exactly
    auto p = make_projection(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 0, 1}});
    CHECK(modularity(p, assignment_partition(p, {0, 0, 0, 0})) ==
          doctest::Approx(0.0).epsilon(1e-15));

    // two disjoint triangles split by triangle
    auto tri = make_projection(
        6, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}, {3, 4, 1}, {4, 5, 1}, {5, 3, 1}});
    CHECK(modularity(tri, assignment_partition(tri, {0, 0, 0, 1, 1, 1})) ==
          doctest::Approx(0.5).epsilon(1e-15));

    // a single edge with singleton clusters
    auto edge = make_projection(2, {{0, 1, 1}});
    CHECK(modularity(edge, assignment_partition(edge, {0, 1})) ==
          doctest::Approx(-0.5).epsilon(1e-15));

    auto empty = make_projection(3, {});
    CHECK_THROWS_AS((void)modularity(empty, assignment_partition(empty, {0, 1, 2})),
                    EtError);
}

TEST_CASE("singleton partitions never score above zero") {
    std::mt19937_64 rng(fnv1a64("singleton-floor"));
    for (int i = 0; i < 30; ++i) {
        UndirectedProjection p = random_projection(rng);
        CHECK(singleton_partition(p).quality <= 1e-15);
    }
}

TEST_CASE("detection recovers two cliques joined by a bridge") {
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            edges.emplace_back(i, j, 1.0);
            edges.emplace_back(i + 4, j + 4, 1.0);
        }
    edges.emplace_back(3, 4, 1.0);
    UndirectedProjection p = make_projection(8, edges);

    Partition part = leiden(p, 7);
    REQUIRE(part.clusters.size() == 2);
    CHECK(part.clusters[0] == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(part.clusters[1] == std::vector<std::size_t>{4, 5, 6, 7});
    CHECK(part.quality == doctest::Approx(12.0 / 13.0 - 0.5).epsilon(1e-12));
    CHECK(part.quality == doctest::Approx(exhaustive_best(p)).epsilon(1e-12));
}

TEST_CASE("complete graphs collapse into one community") {
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) edges.emplace_back(i, j, 1.0);
    UndirectedProjection p = make_projection(4, edges);
    Partition part = leiden(p, 3);
    REQUIRE(part.clusters.size() == 1);
    CHECK(part.quality == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("isolated edges become their own communities") {
    UndirectedProjection p = make_projection(4, {{0, 1, 1}, {2, 3, 1}});
    Partition part = leiden(p, 11);
    REQUIRE(part.clusters.size() == 2);
    CHECK(part.clusters[0] == std::vector<std::size_t>{0, 1});
    CHECK(part.clusters[1] == std::vector<std::size_t>{2, 3});
    CHECK(part.quality == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("empty projections are rejected") {
    UndirectedProjection none;
    CHECK_THROWS_AS((void)leiden(none, 1), EtError);
    UndirectedProjection edgeless = make_projection(3, {});
    CHECK_THROWS_AS((void)leiden(edgeless, 1), EtError);
}

TEST_CASE("detection hits the exhaustive optimum on small random graphs") {
    std::mt19937_64 rng(fnv1a64("leiden-oracle-corpus"));
    for (int trial = 0; trial < 50; ++trial) {
        UndirectedProjection p = random_projection(rng);
        Partition part = leiden(p, derive_seed(99, "trial" + std::to_string(trial)));
        double best = exhaustive_best(p);
        INFO("trial ", trial, " n=", p.vertex_count());
        CHECK(part.quality == doctest::Approx(best).epsilon(1e-12));
        CHECK(part.quality >= singleton_partition(p).quality - 1e-12);
        for (const auto& cluster : part.clusters)
            CHECK(cluster_connected(p, cluster));
    }
}

TEST_CASE("same seed gives byte-identical partitions") {
    std::mt19937_64 rng(fnv1a64("determinism"));
    UndirectedProjection p = random_projection(rng);
    Partition a = leiden(p, 42);
    Partition b = leiden(p, 42);
    CHECK(a.clusters == b.clusters);
    CHECK(a.assignment == b.assignment);
    CHECK(a.quality == b.quality);
}

TEST_CASE("weighted graphs follow the heavier pull") {
    // vertex 2 sits between a heavy pair and a light pair
    UndirectedProjection p =
        make_projection(4, {{0, 1, 3}, {1, 2, 3}, {2, 3, 1}});
    Partition part = leiden(p, 5);
    CHECK(part.quality == doctest::Approx(exhaustive_best(p)).epsilon(1e-12));
}

TEST_CASE("reify writes the overlay and reports exact counts") {
    Pkg g = two_theme_graph();
    UndirectedProjection p = project(g);
    Partition part = leiden(p, 17);
    std::size_t before = g.triple_count();

    ReifyStats stats = reify(g, part, 2);
    CHECK(stats.communities >= 1);
    std::size_t expected_members = 0;
    for (const auto& cluster : part.clusters)
        if (cluster.size() >= 2) expected_members += cluster.size();
    CHECK(stats.membership_triples == expected_members);
    CHECK(stats.anchor_triples == stats.communities);
    CHECK(g.triple_count() == before + expected_members + stats.communities);

    CHECK(g.has_overlay());
    CHECK_FALSE(g.overlay_stale());
    AuditReport audit = g.audit();
    CHECK(audit.problems.empty());
    CHECK(audit.reachability_violations == 0);

    std::size_t membership = 0;
    for (const Triple& t : g.triples())
        if (t.relation == "in_community") {
            ++membership;
            CHECK(t.origin == TripleOrigin::Community);
            CHECK(t.provenance.empty());
        }
    CHECK(membership == expected_members);
}

TEST_CASE("reifying twice with one partition is idempotent") {
    Pkg g = two_theme_graph();
    Partition part = leiden(project(g), 17);
    reify(g, part, 2);
    std::string first = g.canonical_dump();
    reify(g, part, 2);
    CHECK(g.canonical_dump() == first);
}

TEST_CASE("content mutations invalidate existing partitions") {
    Pkg g = two_theme_graph();
    Partition part = leiden(project(g), 17);

    Fragment f;
    f.add(NodeDescriptor::entity("Late Arrival", "Event"), "happened_in",
          NodeDescriptor::entity("Barcelona", "Place"), TripleOrigin::Content,
          {"n-9"});
    g.merge(f);

    try {
        reify(g, part, 2);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::StalePartition);
    }
}

TEST_CASE("the overlay is replaced, never accreted") {
    Pkg g = two_theme_graph();
    Partition part = leiden(project(g), 17);
    reify(g, part, 2);
    std::size_t with_overlay = g.triple_count();

    // a coarser partition: everything in one cluster
    Partition whole;
    whole.vertex_ids = part.vertex_ids;
    whole.content_epoch = part.content_epoch;
    whole.assignment.assign(part.assignment.size(), 0);
    whole.clusters.assign(1, {});
    for (std::size_t v = 0; v < part.assignment.size(); ++v)
        whole.clusters[0].push_back(v);

    ReifyStats stats = reify(g, whole, 2);
    CHECK(stats.communities == 1);
    CHECK(g.triple_count() < with_overlay + stats.membership_triples + 1);
    std::size_t community_nodes = 0;
    for (const Node* node : g.nodes_canonical())
        if (node->kind == NodeKind::Community) ++community_nodes;
    CHECK(community_nodes == 1);
}

TEST_CASE("min_size filters singleton clusters unless disabled") {
    Pkg g = Pkg::create("alex");
    Fragment f;
    f.add(NodeDescriptor::entity("a", "T"), "r", NodeDescriptor::entity("b", "T"),
          TripleOrigin::Content, {"o1"});
    f.add(NodeDescriptor::entity("c", "T"), "r", NodeDescriptor::literal("x"),
          TripleOrigin::Content, {"o1"});
    g.merge(f);

    UndirectedProjection p = project(g);
    REQUIRE(p.vertex_count() == 3);  // c is an isolated vertex
    Partition part = leiden(p, 23);

    ReifyStats filtered = reify(g, part, 2);
    CHECK(filtered.communities == 1);
    CHECK(filtered.membership_triples == 2);

    ReifyStats all = reify(g, part, 1);
    CHECK(all.communities == 2);
    CHECK(all.membership_triples == 3);
}

TEST_CASE("induced triples keep only fully internal edges") {
    Pkg g = Pkg::create("alex");
    Fragment f;
    f.add(NodeDescriptor::entity("a", "T"), "r1", NodeDescriptor::entity("b", "T"),
          TripleOrigin::Content, {"o1"});
    f.add(NodeDescriptor::entity("b", "T"), "r2", NodeDescriptor::entity("c", "T"),
          TripleOrigin::Content, {"o1"});
    f.add(NodeDescriptor::entity("c", "T"), "r3", NodeDescriptor::entity("a", "T"),
          TripleOrigin::Content, {"o1"});
    g.merge(f);

    std::string a = Node::entity_id("a", "T"), b = Node::entity_id("b", "T"),
                c = Node::entity_id("c", "T");
    CHECK(induced_triples(g, {}).empty());
    auto pair = induced_triples(g, {a, b});
    REQUIRE(pair.size() == 1);
    CHECK(pair[0].relation == "r1");
    auto all = induced_triples(g, {a, b, c});
    CHECK(all.size() == 3);
}

TEST_CASE("template summaries linearize members and facts") {
    Pkg g = Pkg::create("alex");
    Fragment f;
    f.add(NodeDescriptor::entity("Football Match", "Event"), "starts_after",
          NodeDescriptor::entity("Alarm 07:00", "Event"), TripleOrigin::Content,
          {"o1"});
    g.merge(f);
    std::string match = Node::entity_id("Football Match", "Event");
    std::string alarm = Node::entity_id("Alarm 07:00", "Event");

    auto induced = induced_triples(g, {match, alarm});
    std::string summary = summarize_community(g, {match, alarm}, induced,
                                              SummaryBackend::Template, nullptr,
                                              nullptr);
    CHECK(summary ==
          "Community of Alarm 07:00, Football Match: Football Match "
          "starts_after Alarm 07:00");

    std::string bare = summarize_community(g, {match, alarm}, {},
                                           SummaryBackend::Template, nullptr,
                                           nullptr);
    CHECK(bare == "Community of Alarm 07:00, Football Match");
}

TEST_CASE("llm summaries go through the gateway seam") {
    Pkg g = Pkg::create("alex");
    Fragment f;
    f.add(NodeDescriptor::entity("a", "T"), "r", NodeDescriptor::entity("b", "T"),
          TripleOrigin::Content, {"o1"});
    g.merge(f);
    std::string a = Node::entity_id("a", "T"), b = Node::entity_id("b", "T");
    auto induced = induced_triples(g, {a, b});

    PromptSet prompts = PromptSet::builtin();
    StubGateway gateway;
    GatewayRequest expected;
    expected.role = GatewayRole::Summarizer;
    expected.prompt = render_template(
        prompts.summary(), {{"content", linearize_community(g, {a, b}, induced)}});
    gateway.add_script(expected.digest(), " A tight little pair. ");

    CHECK(summarize_community(g, {a, b}, induced, SummaryBackend::Llm, &gateway,
                              &prompts) == "A tight little pair.");

    try {
        (void)summarize_community(g, {a, b}, induced, SummaryBackend::Llm, nullptr,
                                  &prompts);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::ExtractionUnavailable);
    }
}

TEST_CASE("partition export is sorted and tab-delimited") {
    Pkg g = two_theme_graph();
    UndirectedProjection p = project(g);
    Partition part = leiden(p, 17);
    std::string exported = export_partition(g, part);
    CHECK(!exported.empty());
    CHECK(exported.back() == '\n');
    std::vector<std::string> lines = split(exported.substr(0, exported.size() - 1), '\n');
    CHECK(lines.size() == part.clusters.size());
    std::vector<std::string> sorted_lines = lines;
    std::sort(sorted_lines.begin(), sorted_lines.end());
    CHECK(lines == sorted_lines);
    for (const auto& line : lines) {
        std::vector<std::string> labels = split(line, '\t');
        std::vector<std::string> sorted_labels = labels;
        std::sort(sorted_labels.begin(), sorted_labels.end());
        CHECK(labels == sorted_labels);
    }
}

TEST_CASE("the full community pipeline reifies and stores summaries") {
    Pkg g = two_theme_graph();
    CommunityOptions options;
    auto reports =
        build_communities(g, 31, options, SummaryBackend::Template, nullptr, nullptr);
    REQUIRE(!reports.empty());
    CHECK(g.has_overlay());
    CHECK_FALSE(g.overlay_stale());
    for (const auto& report : reports) {
        CHECK(report.member_ids.size() >= options.min_size);
        CHECK(!report.summary.empty());
        CHECK(g.node(report.community_id).attrs.at("summary") == report.summary);
    }
    CHECK(g.audit().problems.empty());

    // rebuilding from the overlay alone reproduces the reports
    auto rebuilt = overlay_reports(g);
    REQUIRE(rebuilt.size() == reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        CHECK(rebuilt[i].community_id == reports[i].community_id);
        CHECK(rebuilt[i].member_ids == reports[i].member_ids);
        CHECK(rebuilt[i].summary == reports[i].summary);
    }
}

TEST_CASE("nothing to cluster means no communities and no overlay") {
    Pkg g = Pkg::create("alex");
    CommunityOptions options;
    auto reports =
        build_communities(g, 1, options, SummaryBackend::Template, nullptr, nullptr);
    CHECK(reports.empty());
    CHECK_FALSE(g.has_overlay());
    CHECK(overlay_reports(g).empty());
}

TEST_CASE("stale overlays refuse to serve reports") {
    Pkg g = two_theme_graph();
    build_communities(g, 31, CommunityOptions{}, SummaryBackend::Template, nullptr,
                      nullptr);
    Fragment f;
    f.add(NodeDescriptor::entity("new", "T"), "r", NodeDescriptor::entity("thing", "T"),
          TripleOrigin::Content, {"n-3"});
    g.merge(f);
    CHECK(g.overlay_stale());
    try {
        (void)overlay_reports(g);
        FAIL("expected an error");
    } catch (const EtError& e) {
        CHECK(e.kind() == ErrorKind::CommunitiesStale);
    }
}
