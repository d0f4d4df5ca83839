#include "epistwin/community.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "epistwin/util.hpp"

namespace epistwin {

double UndirectedProjection::edge_weight(std::size_t a, std::size_t b) const {
    for (const auto& [u, w] : adjacency[a])
        if (u == b) return w;
    return 0.0;
}

UndirectedProjection project(const Pkg& graph) {
    UndirectedProjection p;
    p.content_epoch = graph.content_epoch();
    for (const Node* node : graph.nodes_canonical())
        if (node->kind == NodeKind::Entity || node->kind == NodeKind::InfoObject)
            p.vertex_ids.push_back(node->id);
    std::sort(p.vertex_ids.begin(), p.vertex_ids.end());

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < p.vertex_ids.size(); ++i) index[p.vertex_ids[i]] = i;

    std::map<std::pair<std::size_t, std::size_t>, double> edges;
    for (const Triple& t : graph.triples()) {
        if (t.origin == TripleOrigin::Anchor || t.origin == TripleOrigin::Community)
            continue;
        auto h = index.find(t.head);
        auto ta = index.find(t.tail);
        if (h == index.end() || ta == index.end()) continue;
        if (h->second == ta->second) continue;
        auto key = std::minmax(h->second, ta->second);
        edges[{key.first, key.second}] += 1.0;
    }

    p.adjacency.assign(p.vertex_ids.size(), {});
    p.degree.assign(p.vertex_ids.size(), 0.0);
    for (const auto& [pair, w] : edges) {
        p.adjacency[pair.first].emplace_back(pair.second, w);
        p.adjacency[pair.second].emplace_back(pair.first, w);
        p.degree[pair.first] += w;
        p.degree[pair.second] += w;
        p.total_weight += w;
    }
    return p;
}

double modularity(const UndirectedProjection& projection, const Partition& partition,
                  double resolution) {
    if (projection.vertex_count() == 0 || projection.total_weight <= 0.0)
        raise(ErrorKind::EmptyGraph, "modularity needs at least one edge");
    if (partition.assignment.size() != projection.vertex_count())
        raise(ErrorKind::InvariantViolation,
              "partition does not cover the projection");

    const double m = projection.total_weight;
    std::size_t clusters = partition.clusters.size();
    for (std::size_t c : partition.assignment)
        clusters = std::max(clusters, c + 1);
    std::vector<double> internal(clusters, 0.0), total(clusters, 0.0);
    for (std::size_t v = 0; v < projection.vertex_count(); ++v) {
        total[partition.assignment[v]] += projection.degree[v];
        for (const auto& [u, w] : projection.adjacency[v])
            if (u > v && partition.assignment[u] == partition.assignment[v])
                internal[partition.assignment[v]] += w;
    }
    double q = 0.0;
    for (std::size_t c = 0; c < clusters; ++c) {
        double frac = total[c] / (2.0 * m);
        q += internal[c] / m - resolution * frac * frac;
    }
    return q;
}

Partition singleton_partition(const UndirectedProjection& projection) {
    Partition part;
    part.vertex_ids = projection.vertex_ids;
    part.content_epoch = projection.content_epoch;
    part.assignment.resize(projection.vertex_count());
    for (std::size_t v = 0; v < projection.vertex_count(); ++v) {
        part.assignment[v] = v;
        part.clusters.push_back({v});
    }
    if (projection.total_weight > 0.0)
        part.quality = modularity(projection, part);
    return part;
}

namespace {

NodeDescriptor descriptor_for(const Node& node) {
    if (node.kind == NodeKind::InfoObject)
        return NodeDescriptor::info_object(node.label, node.type_tag);
    return NodeDescriptor::entity(node.label, node.type_tag);
}

std::string community_label(const Pkg& graph,
                            const std::vector<std::string>& member_ids) {
    std::string joined;
    for (const auto& id : member_ids) {
        joined += id;
        joined.push_back('\x1f');
    }
    (void)graph;
    return "community-" + to_hex64(fnv1a64(joined));
}

}  // namespace

ReifyStats reify(Pkg& graph, const Partition& partition, std::size_t min_size) {
    if (partition.content_epoch != graph.content_epoch())
        raise(ErrorKind::StalePartition,
              "partition was computed against an older graph state");
    graph.drop_overlay();

    ReifyStats stats;
    Fragment fragment;
    for (const auto& cluster : partition.clusters) {
        if (cluster.size() < min_size) continue;
        std::vector<std::string> member_ids;
        for (std::size_t v : cluster) member_ids.push_back(partition.vertex_ids[v]);
        std::sort(member_ids.begin(), member_ids.end());

        NodeDescriptor community =
            NodeDescriptor::community(community_label(graph, member_ids));
        fragment.add(NodeDescriptor::user_root(), "owns", community,
                     TripleOrigin::Community, {});
        ++stats.anchor_triples;
        for (const auto& id : member_ids) {
            fragment.add(descriptor_for(graph.node(id)), "in_community", community,
                         TripleOrigin::Community, {});
            ++stats.membership_triples;
        }
        ++stats.communities;
    }
    if (!fragment.triples.empty()) graph.merge(fragment);
    graph.mark_overlay_fresh();
    return stats;
}

std::vector<Triple> induced_triples(const Pkg& graph,
                                    const std::set<std::string>& members) {
    std::vector<Triple> out;
    for (const Triple& t : graph.triples()) {
        if (t.origin == TripleOrigin::Community) continue;
        if (members.count(t.head) && members.count(t.tail)) out.push_back(t);
    }
    std::sort(out.begin(), out.end(), [](const Triple& a, const Triple& b) {
        return std::tie(a.head, a.relation, a.tail) <
               std::tie(b.head, b.relation, b.tail);
    });
    return out;
}

std::string linearize_community(const Pkg& graph,
                                const std::vector<std::string>& member_ids,
                                const std::vector<Triple>& induced) {
    std::vector<std::string> labels;
    for (const auto& id : member_ids) labels.push_back(graph.node(id).label);
    std::sort(labels.begin(), labels.end());

    std::ostringstream out;
    out << "Community of ";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out << ", ";
        out << labels[i];
    }
    if (!induced.empty()) {
        out << ": ";
        for (std::size_t i = 0; i < induced.size(); ++i) {
            if (i) out << "; ";
            out << graph.node(induced[i].head).label << ' ' << induced[i].relation
                << ' ' << graph.node(induced[i].tail).label;
        }
    }
    return out.str();
}

std::string summarize_community(const Pkg& graph,
                                const std::vector<std::string>& member_ids,
                                const std::vector<Triple>& induced,
                                SummaryBackend backend, ModelGateway* gateway,
                                const PromptSet* prompts) {
    std::string lin = linearize_community(graph, member_ids, induced);
    if (backend == SummaryBackend::Template) return lin;
    if (!gateway || !prompts)
        raise(ErrorKind::ExtractionUnavailable, "llm summaries need a gateway");
    GatewayRequest request;
    request.role = GatewayRole::Summarizer;
    request.prompt = render_template(prompts->summary(), {{"content", lin}});
    return trim(gateway->complete(request));
}

std::string export_partition(const Pkg& graph, const Partition& partition) {
    std::vector<std::string> lines;
    for (const auto& cluster : partition.clusters) {
        std::vector<std::string> labels;
        for (std::size_t v : cluster)
            labels.push_back(graph.node(partition.vertex_ids[v]).label);
        std::sort(labels.begin(), labels.end());
        std::string line;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (i) line.push_back('\t');
            line += labels[i];
        }
        lines.push_back(std::move(line));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& line : lines) {
        out += line;
        out.push_back('\n');
    }
    return out;
}

std::vector<CommunityReport> build_communities(Pkg& graph, std::uint64_t seed,
                                               const CommunityOptions& options,
                                               SummaryBackend backend,
                                               ModelGateway* gateway,
                                               const PromptSet* prompts) {
    UndirectedProjection projection = project(graph);
    if (projection.vertex_count() == 0 || projection.total_weight <= 0.0) {
        graph.drop_overlay();
        return {};
    }
    Partition partition =
        leiden(projection, seed, options.resolution, options.restarts);
    reify(graph, partition, options.min_size);

    std::vector<CommunityReport> reports;
    for (const auto& cluster : partition.clusters) {
        if (cluster.size() < options.min_size) continue;
        CommunityReport report;
        for (std::size_t v : cluster)
            report.member_ids.push_back(partition.vertex_ids[v]);
        std::sort(report.member_ids.begin(), report.member_ids.end());
        report.community_id =
            Node::community_id(community_label(graph, report.member_ids));
        std::set<std::string> member_set(report.member_ids.begin(),
                                         report.member_ids.end());
        report.induced = induced_triples(graph, member_set);
        report.summary = summarize_community(graph, report.member_ids,
                                             report.induced, backend, gateway,
                                             prompts);
        graph.set_node_attr(report.community_id, "summary", report.summary);
        reports.push_back(std::move(report));
    }
    std::sort(reports.begin(), reports.end(),
              [](const CommunityReport& a, const CommunityReport& b) {
                  return a.community_id < b.community_id;
              });
    return reports;
}

std::vector<CommunityReport> overlay_reports(const Pkg& graph) {
    if (!graph.has_overlay()) return {};
    if (graph.overlay_stale())
        raise(ErrorKind::CommunitiesStale,
              "community overlay is stale; rebuild communities first");

    std::map<std::string, CommunityReport> by_community;
    for (const Triple& t : graph.triples()) {
        if (t.relation != "in_community") continue;
        CommunityReport& report = by_community[t.tail];
        report.community_id = t.tail;
        report.member_ids.push_back(t.head);
    }
    std::vector<CommunityReport> reports;
    for (auto& [id, report] : by_community) {
        std::sort(report.member_ids.begin(), report.member_ids.end());
        std::set<std::string> member_set(report.member_ids.begin(),
                                         report.member_ids.end());
        report.induced = induced_triples(graph, member_set);
        const Node& node = graph.node(id);
        auto summary = node.attrs.find("summary");
        if (summary != node.attrs.end()) report.summary = summary->second;
        reports.push_back(std::move(report));
    }
    return reports;
}

}  // namespace epistwin
