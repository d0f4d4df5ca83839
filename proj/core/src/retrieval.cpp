#include "epistwin/retrieval.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "epistwin/community.hpp"
#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

namespace epistwin {

namespace {

bool anchorable(NodeKind kind) {
    return kind == NodeKind::Entity || kind == NodeKind::InfoObject ||
           kind == NodeKind::Community;
}

std::set<std::string> node_tokens(const Node& node) {
    std::set<std::string> tokens;
    for (const std::string& t : tokenize(node.label)) tokens.insert(t);
    for (const auto& [key, value] : node.attrs) {
        (void)key;
        for (const std::string& t : tokenize(value)) tokens.insert(t);
    }
    return tokens;
}

std::string flatten(std::string text) {
    for (char& c : text)
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    return trim(text);
}

}  // namespace

ContextFact context_fact(const Pkg& graph, const Triple& triple) {
    ContextFact fact;
    fact.head_label = graph.node(triple.head).label;
    fact.relation = triple.relation;
    fact.tail_label = graph.node(triple.tail).label;
    if (triple.provenance.empty()) {
        fact.source = "derived";
    } else {
        std::ostringstream joined;
        bool first = true;
        for (const std::string& id : triple.provenance) {
            if (!first) joined << ", ";
            joined << id;
            first = false;
        }
        fact.source = joined.str();
    }
    return fact;
}

const char* retrieval_mode_name(RetrievalMode mode) {
    return mode == RetrievalMode::Local ? "local" : "global";
}

RetrievalMode parse_retrieval_mode(std::string_view name) {
    if (name == "local") return RetrievalMode::Local;
    if (name == "global") return RetrievalMode::Global;
    raise(ErrorKind::Usage, "unknown retrieval mode: " + std::string(name));
}

std::vector<ScoredAnchor> anchor_entities(const std::string& query, const Pkg& graph,
                                          std::size_t top_k) {
    std::vector<std::string> query_tokens = tokenize(query);
    std::set<std::string> wanted(query_tokens.begin(), query_tokens.end());
    if (wanted.empty()) return {};

    struct Candidate {
        const Node* node;
        std::set<std::string> tokens;
    };
    std::vector<Candidate> candidates;
    std::map<std::string, std::size_t> frequency;
    for (const Node* node : graph.nodes_canonical()) {
        if (!anchorable(node->kind)) continue;
        Candidate c{node, node_tokens(*node)};
        for (const std::string& t : c.tokens) frequency[t] += 1;
        candidates.push_back(std::move(c));
    }

    std::vector<ScoredAnchor> scored;
    for (const Candidate& c : candidates) {
        double score = 0.0;
        for (const std::string& t : wanted)
            if (c.tokens.count(t)) score += 1.0 / static_cast<double>(frequency[t]);
        if (score <= 0.0) continue;
        scored.push_back({c.node->id, c.node->label, c.node->kind, score});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredAnchor& a, const ScoredAnchor& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.node_id < b.node_id;
    });
    if (scored.size() > top_k) scored.resize(top_k);
    return scored;
}

RetrievedContext assemble_context(const std::string& query, const Pkg& graph,
                                  RetrievalMode mode, const RetrievalOptions& options) {
    RetrievedContext ctx;
    ctx.mode = mode;
    ctx.budget = options.budget_tokens;
    ctx.anchors = anchor_entities(query, graph, options.top_k);

    if (mode == RetrievalMode::Global && graph.overlay_stale())
        raise(ErrorKind::CommunitiesStale,
              "global retrieval needs a fresh community overlay");
    if (ctx.budget == 0) return ctx;

    std::set<std::string> nodes;
    for (const ScoredAnchor& anchor : ctx.anchors) nodes.insert(anchor.node_id);

    bool full = false;
    if (mode == RetrievalMode::Global && graph.has_overlay()) {
        std::set<std::string> anchor_ids;
        for (const ScoredAnchor& anchor : ctx.anchors) anchor_ids.insert(anchor.node_id);
        for (const CommunityReport& report : overlay_reports(graph)) {
            if (!anchor_ids.empty()) {
                bool touches = anchor_ids.count(report.community_id) > 0;
                for (const std::string& member : report.member_ids)
                    if (!touches && anchor_ids.count(member)) touches = true;
                if (!touches) continue;
            }
            std::string summary = flatten(report.summary);
            std::size_t cost = estimate_tokens(summary);
            if (ctx.budget_used + cost > ctx.budget) {
                full = true;
                break;
            }
            ctx.community_notes.push_back({report.community_id, summary});
            ctx.budget_used += cost;
            nodes.insert(report.community_id);
        }
    }

    std::set<std::string> seen_lines;
    for (const ScoredAnchor& anchor : ctx.anchors) {
        if (full) break;
        Subgraph ego = graph.ego_network(anchor.node_id, options.radius);
        for (const Triple& triple : ego.triples) {
            ContextFact fact = context_fact(graph, triple);
            std::string line = fact_line(fact);
            if (!seen_lines.insert(line).second) continue;
            std::size_t cost = estimate_tokens(line);
            if (ctx.budget_used + cost > ctx.budget) {
                full = true;
                break;
            }
            ctx.facts.push_back(std::move(fact));
            ctx.budget_used += cost;
            nodes.insert(triple.head);
            nodes.insert(triple.tail);
        }
    }

    ctx.node_ids.assign(nodes.begin(), nodes.end());
    return ctx;
}

std::string fact_line(const ContextFact& fact) {
    std::ostringstream out;
    out << fact.head_label << " —" << fact.relation << "→ " << fact.tail_label
        << " (source: " << fact.source << ")";
    return out.str();
}

std::string linearize(const RetrievedContext& ctx) {
    std::ostringstream out;
    for (const CommunityNote& note : ctx.community_notes) out << note.summary << "\n";
    for (const ContextFact& fact : ctx.facts) out << fact_line(fact) << "\n";
    return out.str();
}

std::string generate_answer(const std::string& query, const RetrievedContext& ctx,
                            GeneratorBackend backend, ModelGateway* gateway,
                            const PromptSet* prompts) {
    std::string context_text = linearize(ctx);
    if (backend == GeneratorBackend::Echo) {
        if (context_text.empty()) return kAbstentionAnswer;
        std::vector<std::string> query_tokens = tokenize(query);
        std::set<std::string> wanted(query_tokens.begin(), query_tokens.end());

        std::vector<std::string> lines = split(context_text.substr(0, context_text.size() - 1), '\n');
        std::size_t best_overlap = 0;
        std::size_t best_index = 0;
        bool best_cited = false;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::set<std::string> have;
            for (const std::string& t : tokenize(lines[i])) have.insert(t);
            std::size_t overlap = 0;
            for (const std::string& t : wanted)
                if (have.count(t)) ++overlap;
            // ties go to a fact that cites real objects over an overlay fact
            bool cited = lines[i].find("(source: derived)") == std::string::npos;
            bool better = overlap > best_overlap ||
                          (overlap == best_overlap && overlap > 0 && cited && !best_cited);
            if (better) {
                best_overlap = overlap;
                best_index = i;
                best_cited = cited;
            }
        }
        return lines[best_index];
    }

    if (gateway == nullptr || prompts == nullptr)
        raise(ErrorKind::ExtractionUnavailable,
              "llm answer generation needs a gateway and prompts");
    GatewayRequest request;
    request.role = GatewayRole::Generator;
    request.prompt = render_template(prompts->answer(),
                                     {{"query", query}, {"context", context_text}});
    return trim(gateway->complete(request));
}

}  // namespace epistwin
