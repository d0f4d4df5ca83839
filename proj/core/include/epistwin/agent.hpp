#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epistwin/domain.hpp"
#include "epistwin/gateway.hpp"
#include "epistwin/pkg.hpp"
#include "epistwin/retrieval.hpp"

namespace epistwin {

enum class ActionKind {
    GraphRagLocal,
    GraphRagGlobal,
    EgoExpand,
    CommunityLookup,
    VisualRefine,
    Answer,
};

const char* action_kind_name(ActionKind kind);
ActionKind parse_action_kind(std::string_view name);

struct ActionRecord {
    ActionKind kind = ActionKind::Answer;
    std::map<std::string, std::string> args;
};

struct Verdict {
    bool sufficient = false;
    std::string rationale;
};

struct AgentStep {
    std::size_t index = 0;
    std::string thought;
    ActionRecord action;
    std::string observation;
    std::optional<Verdict> verdict;
};

struct AgentState {
    std::string query;
    std::string resolved_query;  // indexicals rewritten against the fixture clock
    std::vector<AgentStep> history;
    std::size_t budget = 8;
};

struct AgentTrajectory {
    std::string query;
    std::string resolved_query;
    std::vector<AgentStep> steps;
    std::string answer;
    std::vector<std::string> warnings;
};

struct PolicyDecision {
    std::string thought;
    ActionRecord action;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyDecision decide(const AgentState& state) = 0;
    virtual const char* name() const = 0;
};

// Rule cascade: retrieve in the opening mode, switch to the other mode if
// verification is unhappy, then answer.
class HeuristicPolicy : public Policy {
public:
    explicit HeuristicPolicy(RetrievalMode opening = RetrievalMode::Local)
        : opening_(opening) {}

    PolicyDecision decide(const AgentState& state) override;
    const char* name() const override { return "heuristic"; }

private:
    RetrievalMode opening_;
};

// Replays a fixed action list; once the list runs out it answers.
class ScriptedPolicy : public Policy {
public:
    struct Step {
        std::string thought;
        ActionRecord action;
    };

    explicit ScriptedPolicy(std::vector<Step> steps) : steps_(std::move(steps)) {}

    PolicyDecision decide(const AgentState& state) override;
    const char* name() const override { return "scripted"; }
    void rewind() { next_ = 0; }

private:
    std::vector<Step> steps_;
    std::size_t next_ = 0;
};

// Asks the gateway to choose the next action by name.
class LlmPolicy : public Policy {
public:
    LlmPolicy(ModelGateway& gateway, GatewayParams params = {})
        : gateway_(&gateway), params_(std::move(params)) {}

    PolicyDecision decide(const AgentState& state) override;
    const char* name() const override { return "llm"; }

private:
    ModelGateway* gateway_;
    GatewayParams params_;
};

enum class VerifierBackend { Heuristic, Llm, Scripted };

// Epistemic sufficiency check over the gathered history. The scripted
// backend consumes a per-run verdict queue and defaults to sufficient once
// the queue is empty; an unreadable llm verdict degrades to insufficient
// with a logged warning.
class Verifier {
public:
    explicit Verifier(VerifierBackend backend, ModelGateway* gateway = nullptr,
                      const PromptSet* prompts = nullptr)
        : backend_(backend), gateway_(gateway), prompts_(prompts) {}

    void queue_scripted(const std::vector<bool>& verdicts);
    Verdict verify(const AgentState& state, const Pkg& graph);

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    VerifierBackend backend_;
    ModelGateway* gateway_;
    const PromptSet* prompts_;
    std::deque<bool> scripted_;
    std::vector<std::string> warnings_;
};

struct VisualEvidence {
    std::string object_id;
    std::string image_path;
};

// Image-backed information objects that anchor the query directly or
// mention one of its anchor entities, in anchor rank order, capped.
std::vector<VisualEvidence> visual_evidence(const std::string& query, const Pkg& graph,
                                            const PersonalKnowledge& knowledge,
                                            std::size_t cap = 5);

struct VisualReport {
    struct Entry {
        std::string object_id;
        std::string text;
        bool ok = true;
    };
    std::vector<Entry> entries;  // sorted by object id

    std::string aggregate() const;  // count header plus one line per image
};

// Re-reads the raw images behind the relevant objects with the vision role.
// Per-image failures become inline error entries; the result is ephemeral
// and never written to the graph.
VisualReport visual_refine(const std::string& query, const Pkg& graph,
                           const PersonalKnowledge& knowledge, ModelGateway* gateway,
                           const PromptSet* prompts, std::size_t cap = 5);

// Rewrites "today", "yesterday", and "tomorrow" to calendar dates using the
// knowledge fixture's reference clock.
std::string resolve_indexicals(const std::string& query, const Timestamp& now);

struct AgentConfig {
    std::size_t budget = 8;
    RetrievalOptions retrieval;
    RetrievalMode initial_mode = RetrievalMode::Local;  // forced grounding step
    GeneratorBackend generator = GeneratorBackend::Echo;
    VerifierBackend verifier = VerifierBackend::Heuristic;
    std::size_t visual_cap = 5;
};

struct AgentResult {
    std::string answer;
    AgentTrajectory trajectory;
};

// The reasoning loop: policy-chosen retrieval actions with verification
// after each one, forced visual refinement when verification fails and
// image-backed evidence exists, and a terminal answer step. Read-only over
// the graph.
class Agent {
public:
    Agent(const Pkg& graph, const PersonalKnowledge& knowledge, AgentConfig config = {},
          ModelGateway* gateway = nullptr, const PromptSet* prompts = nullptr)
        : graph_(&graph),
          knowledge_(&knowledge),
          config_(std::move(config)),
          gateway_(gateway),
          prompts_(prompts) {}

    AgentResult run(const std::string& query, Policy& policy,
                    const std::vector<bool>* scripted_verdicts = nullptr);

private:
    const Pkg* graph_;
    const PersonalKnowledge* knowledge_;
    AgentConfig config_;
    ModelGateway* gateway_;
    const PromptSet* prompts_;
};

std::string export_trajectory(const AgentTrajectory& trajectory);

}  // namespace epistwin
