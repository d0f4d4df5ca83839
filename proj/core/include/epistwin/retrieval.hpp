#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "epistwin/gateway.hpp"
#include "epistwin/pkg.hpp"

namespace epistwin {

// Fixed answer used whenever generation has nothing grounded to quote.
inline constexpr const char* kAbstentionAnswer = "insufficient grounded context";

enum class RetrievalMode { Local, Global };

const char* retrieval_mode_name(RetrievalMode mode);
RetrievalMode parse_retrieval_mode(std::string_view name);

enum class GeneratorBackend { Echo, Llm };

struct ScoredAnchor {
    std::string node_id;
    std::string label;
    NodeKind kind = NodeKind::Entity;
    double score = 0.0;
};

// One grounded statement, resolved to labels so the context stays readable
// and self-contained after the graph moves on.
struct ContextFact {
    std::string head_label;
    std::string relation;
    std::string tail_label;
    std::string source;  // provenance object ids, or "derived" for overlay facts
};

struct CommunityNote {
    std::string community_id;
    std::string summary;
};

struct RetrievalOptions {
    std::size_t top_k = 8;
    std::size_t radius = 2;
    std::size_t budget_tokens = 2000;
};

struct RetrievedContext {
    RetrievalMode mode = RetrievalMode::Local;
    std::vector<ScoredAnchor> anchors;
    std::vector<CommunityNote> community_notes;
    std::vector<ContextFact> facts;
    std::vector<std::string> node_ids;  // subgraph nodes, sorted
    std::size_t budget = 0;
    std::size_t budget_used = 0;

    bool empty() const { return community_notes.empty() && facts.empty(); }
};

// Scores entity, object, and community nodes by case-folded token overlap
// with the query, each shared token weighted by its inverse frequency across
// node texts. Returns the top_k positive scorers, best first, ties to the
// lower node id.
std::vector<ScoredAnchor> anchor_entities(const std::string& query, const Pkg& graph,
                                          std::size_t top_k = 8);

// Builds a grounded context around the anchors. Local mode walks each
// anchor's ego network in rank order; global mode spends budget on community
// summaries first, then ego networks. Assembly stops at the first element
// that would overflow the budget.
RetrievedContext assemble_context(const std::string& query, const Pkg& graph,
                                  RetrievalMode mode,
                                  const RetrievalOptions& options = {});

std::string fact_line(const ContextFact& fact);

// Resolves a stored triple to labels and provenance text.
ContextFact context_fact(const Pkg& graph, const Triple& triple);

// Canonical text form: community summaries first, then one fact per line.
std::string linearize(const RetrievedContext& ctx);

// Echo backend answers with the context line sharing the most tokens with
// the query (abstaining on an empty context); the llm backend prompts the
// generator role with the linearized context.
std::string generate_answer(const std::string& query, const RetrievedContext& ctx,
                            GeneratorBackend backend, ModelGateway* gateway = nullptr,
                            const PromptSet* prompts = nullptr);

}  // namespace epistwin
