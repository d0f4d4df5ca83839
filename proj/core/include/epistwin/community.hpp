#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "epistwin/gateway.hpp"
#include "epistwin/pkg.hpp"

namespace epistwin {

// Undirected, weighted, literal-free view of the graph that community
// detection runs on. Entity and InfoObject nodes are the vertices; every
// non-anchor triple between two of them contributes weight one to the edge,
// so parallel triples and reverse directions accumulate.
struct UndirectedProjection {
    std::vector<std::string> vertex_ids;  // sorted node ids
    std::vector<std::vector<std::pair<std::size_t, double>>> adjacency;
    std::vector<double> degree;   // weighted degree k_i
    double total_weight = 0.0;    // m, the sum of edge weights
    std::uint64_t content_epoch = 0;

    std::size_t vertex_count() const { return vertex_ids.size(); }
    double edge_weight(std::size_t a, std::size_t b) const;
};

struct Partition {
    // Each cluster's vertex indices ascending; clusters ordered by their
    // lowest member.
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> assignment;  // vertex index -> cluster index
    double quality = 0.0;
    std::vector<std::string> vertex_ids;  // copied from the projection
    std::uint64_t content_epoch = 0;
};

struct CommunityOptions {
    std::size_t min_size = 2;
    double resolution = 1.0;
    std::size_t restarts = 4;
};

struct ReifyStats {
    std::size_t communities = 0;
    std::size_t membership_triples = 0;
    std::size_t anchor_triples = 0;
};

enum class SummaryBackend { Template, Llm };

struct CommunityReport {
    std::string community_id;
    std::vector<std::string> member_ids;  // sorted node ids
    std::vector<Triple> induced;
    std::string summary;
};

UndirectedProjection project(const Pkg& graph);

// Newman-Girvan modularity of the partition at the given resolution.
double modularity(const UndirectedProjection& projection, const Partition& partition,
                  double resolution = 1.0);

Partition singleton_partition(const UndirectedProjection& projection);

// Local moving, refinement, and aggregation iterated to a fixed point, with
// a connectivity check on every output cluster. Deterministic for a fixed
// seed; several seeded restarts keep the best-quality result.
Partition leiden(const UndirectedProjection& projection, std::uint64_t seed,
                 double resolution = 1.0, std::size_t restarts = 4);

// Writes the partition into the graph as the community overlay: one
// community node per cluster of at least min_size members, `in_community`
// membership triples, and an owns-anchor per community node. Any prior
// overlay is replaced wholesale.
ReifyStats reify(Pkg& graph, const Partition& partition, std::size_t min_size = 2);

// Triples with both endpoints inside the member set, overlay excluded.
std::vector<Triple> induced_triples(const Pkg& graph,
                                    const std::set<std::string>& members);

// "Community of {labels}: {facts}" serialization fed to summarization.
std::string linearize_community(const Pkg& graph,
                                const std::vector<std::string>& member_ids,
                                const std::vector<Triple>& induced);

std::string summarize_community(const Pkg& graph,
                                const std::vector<std::string>& member_ids,
                                const std::vector<Triple>& induced,
                                SummaryBackend backend, ModelGateway* gateway,
                                const PromptSet* prompts);

// One line per cluster, tab-delimited sorted member labels, lines sorted.
std::string export_partition(const Pkg& graph, const Partition& partition);

// Full pipeline: project, detect, reify, summarize, and pin the summaries on
// the community nodes. A graph with nothing to cluster just loses any stale
// overlay and yields no reports.
std::vector<CommunityReport> build_communities(Pkg& graph, std::uint64_t seed,
                                               const CommunityOptions& options,
                                               SummaryBackend backend,
                                               ModelGateway* gateway,
                                               const PromptSet* prompts);

// Reports reconstructed from an existing fresh overlay (no detection run).
std::vector<CommunityReport> overlay_reports(const Pkg& graph);

}  // namespace epistwin
