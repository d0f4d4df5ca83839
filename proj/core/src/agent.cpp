#include "epistwin/agent.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "epistwin/community.hpp"
#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

namespace epistwin {

namespace {

constexpr const char* kActionNames[] = {
    "graph_rag_local", "graph_rag_global", "ego_expand",
    "community_lookup", "visual_refine",   "answer",
};

std::string flatten(std::string text) {
    for (char& c : text)
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    return trim(text);
}

// One line per prior observation, newest last, for prompt templates.
std::string render_history(const AgentState& state) {
    std::ostringstream out;
    for (const AgentStep& step : state.history)
        out << "- " << action_kind_name(step.action.kind) << ": "
            << flatten(step.observation) << "\n";
    std::string text = out.str();
    if (text.empty()) text = "- (no steps taken yet)\n";
    return text;
}

constexpr const char* kPolicyTemplate =
    "You are a personal-memory agent planning its next step.\n"
    "[Question]\n"
    "{query}\n"
    "[History]\n"
    "{history}\n"
    "[Instructions]\n"
    "Reply with exactly one action name from: graph_rag_local, "
    "graph_rag_global, ego_expand, community_lookup, visual_refine, answer. "
    "An ego_expand or community_lookup may be followed by one node id.\n";

std::set<std::string> token_set(const std::string& text) {
    std::vector<std::string> tokens = tokenize(text);
    return {tokens.begin(), tokens.end()};
}

std::size_t overlap_size(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const std::string& t : a)
        if (b.count(t)) ++n;
    return n;
}

bool image_backed(const Node& node) {
    if (node.kind != NodeKind::InfoObject) return false;
    auto it = node.attrs.find("payload");
    return it != node.attrs.end() && it->second == "image";
}

}  // namespace

const char* action_kind_name(ActionKind kind) {
    return kActionNames[static_cast<int>(kind)];
}

ActionKind parse_action_kind(std::string_view name) {
    for (int i = 0; i < 6; ++i)
        if (name == kActionNames[i]) return static_cast<ActionKind>(i);
    raise(ErrorKind::PolicyError, "unknown action: " + std::string(name));
}

PolicyDecision HeuristicPolicy::decide(const AgentState& state) {
    const bool global_first = opening_ == RetrievalMode::Global;
    if (state.history.empty()) {
        if (global_first)
            return {"survey the query's community context", {ActionKind::GraphRagGlobal, {}}};
        return {"survey the query's local neighborhood", {ActionKind::GraphRagLocal, {}}};
    }

    const AgentStep& last = state.history.back();
    if (last.verdict && !last.verdict->sufficient) {
        const ActionKind fallback =
            global_first ? ActionKind::GraphRagLocal : ActionKind::GraphRagGlobal;
        bool tried = false;
        for (const AgentStep& step : state.history)
            if (step.action.kind == fallback) tried = true;
        if (!tried) {
            if (global_first)
                return {"community context fell short; narrow to the local neighborhood",
                        {ActionKind::GraphRagLocal, {}}};
            return {"local context fell short; widen to community context",
                    {ActionKind::GraphRagGlobal, {}}};
        }
    }
    return {"answer from the gathered context", {ActionKind::Answer, {}}};
}

PolicyDecision ScriptedPolicy::decide(const AgentState& state) {
    (void)state;
    if (next_ >= steps_.size())
        return {"script exhausted; answer", {ActionKind::Answer, {}}};
    const Step& step = steps_[next_];
    ++next_;
    PolicyDecision decision;
    decision.thought = step.thought.empty()
                           ? "scripted step " + std::to_string(next_ - 1)
                           : step.thought;
    decision.action = step.action;
    return decision;
}

PolicyDecision LlmPolicy::decide(const AgentState& state) {
    GatewayRequest request;
    request.role = GatewayRole::Generator;
    request.params = params_;
    request.prompt = render_template(
        kPolicyTemplate, {{"query", state.query}, {"history", render_history(state)}});
    std::string response = trim(gateway_->complete(request));

    std::istringstream words(response);
    std::string first, second;
    words >> first >> second;
    if (first.empty())
        raise(ErrorKind::PolicyError, "policy model returned an empty action");
    ActionKind kind = parse_action_kind(first);

    PolicyDecision decision;
    decision.thought = "model selected " + first;
    decision.action.kind = kind;
    if (!second.empty() &&
        (kind == ActionKind::EgoExpand || kind == ActionKind::CommunityLookup))
        decision.action.args["node"] = second;
    return decision;
}

void Verifier::queue_scripted(const std::vector<bool>& verdicts) {
    scripted_.assign(verdicts.begin(), verdicts.end());
}

Verdict Verifier::verify(const AgentState& state, const Pkg& graph) {
    if (state.history.empty())
        raise(ErrorKind::InvariantViolation, "verification needs at least one step");

    if (backend_ == VerifierBackend::Scripted) {
        if (scripted_.empty()) return {true, "scripted verdicts exhausted"};
        bool sufficient = scripted_.front();
        scripted_.pop_front();
        return {sufficient, "scripted verdict"};
    }

    if (backend_ == VerifierBackend::Heuristic) {
        const std::string& observation = state.history.back().observation;
        if (trim(observation) == kAbstentionAnswer)
            return {false, "latest observation is the abstention answer"};

        // tokens the query shares with its own anchor entities
        std::set<std::string> query_tokens = token_set(state.resolved_query);
        std::set<std::string> anchor_tokens;
        for (const ScoredAnchor& anchor :
             anchor_entities(state.resolved_query, graph)) {
            for (const std::string& t : tokenize(anchor.label))
                if (query_tokens.count(t)) anchor_tokens.insert(t);
        }
        std::set<std::string> seen = token_set(observation);
        if (overlap_size(anchor_tokens, seen) == 0)
            return {false, "observation shares no anchor tokens with the query"};
        return {true, "observation mentions anchored entities"};
    }

    if (gateway_ == nullptr || prompts_ == nullptr)
        raise(ErrorKind::ExtractionUnavailable, "llm verification needs a gateway");
    GatewayRequest request;
    request.role = GatewayRole::Verifier;
    request.prompt = render_template(
        prompts_->verify(),
        {{"query", state.query}, {"history", render_history(state)}});
    std::string response = gateway_->complete(request);

    // strict word scan; both or neither token present is unreadable
    bool sufficient_seen = false, insufficient_seen = false;
    std::string word;
    for (char c : response + " ") {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word.push_back(c);
            continue;
        }
        if (word == "SUFFICIENT") sufficient_seen = true;
        if (word == "INSUFFICIENT") insufficient_seen = true;
        word.clear();
    }
    if (sufficient_seen == insufficient_seen) {
        warnings_.push_back("unreadable verdict treated as insufficient: " +
                            flatten(response));
        return {false, "verdict unreadable"};
    }
    return {sufficient_seen, flatten(response)};
}

std::vector<VisualEvidence> visual_evidence(const std::string& query, const Pkg& graph,
                                            const PersonalKnowledge& knowledge,
                                            std::size_t cap) {
    std::vector<std::string> ordered;
    std::set<std::string> taken;
    auto consider = [&](const Node& node) {
        if (!image_backed(node)) return;
        if (taken.insert(node.label).second) ordered.push_back(node.label);
    };

    for (const ScoredAnchor& anchor : anchor_entities(query, graph)) {
        if (ordered.size() >= cap) break;
        consider(graph.node(anchor.node_id));
        std::vector<std::string> mentioners;
        for (std::size_t position : graph.incident(anchor.node_id)) {
            const Triple& triple = graph.triples()[position];
            if (triple.relation != "mentions" || triple.tail != anchor.node_id) continue;
            mentioners.push_back(triple.head);
        }
        std::sort(mentioners.begin(), mentioners.end());
        for (const std::string& id : mentioners) {
            if (ordered.size() >= cap) break;
            consider(graph.node(id));
        }
    }
    if (ordered.size() > cap) ordered.resize(cap);
    std::sort(ordered.begin(), ordered.end());

    std::vector<VisualEvidence> evidence;
    for (const std::string& object_id : ordered) {
        const InformationObject* io = knowledge.find(object_id);
        if (io == nullptr || !io->payload.has_value()) continue;
        if (io->payload->kind != PayloadKind::Image) continue;
        evidence.push_back({object_id, io->payload->path});
    }
    return evidence;
}

std::string VisualReport::aggregate() const {
    std::ostringstream out;
    out << entries.size() << (entries.size() == 1 ? " image" : " images")
        << " inspected.";
    for (const Entry& entry : entries)
        out << "\nimage " << entry.object_id << ": " << entry.text;
    return out.str();
}

VisualReport visual_refine(const std::string& query, const Pkg& graph,
                           const PersonalKnowledge& knowledge, ModelGateway* gateway,
                           const PromptSet* prompts, std::size_t cap) {
    std::vector<VisualEvidence> evidence = visual_evidence(query, graph, knowledge, cap);
    if (evidence.empty())
        raise(ErrorKind::NoVisualEvidence,
              "no image-backed objects are relevant to the query");
    if (gateway == nullptr || prompts == nullptr)
        raise(ErrorKind::ExtractionUnavailable, "visual refinement needs a gateway");

    VisualReport report;
    for (const VisualEvidence& item : evidence) {
        VisualReport::Entry entry;
        entry.object_id = item.object_id;
        try {
            entry.text = flatten(vision_answer(*gateway, *prompts, query, item.image_path));
        } catch (const EtError& e) {
            entry.text = "error: " + flatten(e.message());
            entry.ok = false;
        }
        report.entries.push_back(std::move(entry));
    }
    std::sort(report.entries.begin(), report.entries.end(),
              [](const VisualReport::Entry& a, const VisualReport::Entry& b) {
                  return a.object_id < b.object_id;
              });
    return report;
}

std::string resolve_indexicals(const std::string& query, const Timestamp& now) {
    auto shifted_date = [&](int64_t days) {
        Timestamp t = now;
        t.epoch_seconds += days * 86400;
        return t.date_string();
    };

    std::string out;
    std::string run;
    auto flush = [&]() {
        if (run.empty()) return;
        std::string folded = to_lower(run);
        if (folded == "today")
            out += shifted_date(0);
        else if (folded == "yesterday")
            out += shifted_date(-1);
        else if (folded == "tomorrow")
            out += shifted_date(1);
        else
            out += run;
        run.clear();
    };
    for (char c : query) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            run.push_back(c);
        } else {
            flush();
            out.push_back(c);
        }
    }
    flush();
    return out;
}

AgentResult Agent::run(const std::string& query, Policy& policy,
                       const std::vector<bool>* scripted_verdicts) {
    if (config_.budget < 1) raise(ErrorKind::Usage, "agent budget must be at least 1");

    AgentState state;
    state.query = query;
    state.resolved_query = resolve_indexicals(query, knowledge_->now);
    state.budget = config_.budget;

    Verifier verifier(config_.verifier, gateway_, prompts_);
    if (scripted_verdicts != nullptr) verifier.queue_scripted(*scripted_verdicts);

    std::vector<RetrievedContext> contexts;
    std::vector<VisualReport::Entry> visual_hits;
    bool delegated = false;
    bool pending_visual = false;
    std::string answer;

    while (state.history.size() < state.budget) {
        bool last_slot = state.history.size() + 1 == state.budget;

        PolicyDecision decision;
        if (pending_visual && !delegated && !last_slot) {
            decision.thought = "verification flagged missing visual evidence";
            decision.action = {ActionKind::VisualRefine, {}};
        } else {
            decision = policy.decide(state);
        }
        if (last_slot && decision.action.kind != ActionKind::Answer) {
            decision.thought = "budget exhausted; answer from the best context";
            decision.action = {ActionKind::Answer, {}};
        }
        if (!last_slot && state.history.empty() &&
            decision.action.kind == ActionKind::Answer) {
            decision.thought = "ground the answer before giving it";
            decision.action = {config_.initial_mode == RetrievalMode::Global
                                   ? ActionKind::GraphRagGlobal
                                   : ActionKind::GraphRagLocal,
                               {}};
        }
        if (pending_visual && !delegated &&
            decision.action.kind == ActionKind::Answer && !last_slot) {
            decision.thought = "verification flagged missing visual evidence";
            decision.action = {ActionKind::VisualRefine, {}};
        }

        AgentStep step;
        step.index = state.history.size();
        step.thought = decision.thought;
        step.action = decision.action;

        switch (decision.action.kind) {
            case ActionKind::GraphRagLocal:
            case ActionKind::GraphRagGlobal: {
                RetrievalMode mode = decision.action.kind == ActionKind::GraphRagLocal
                                         ? RetrievalMode::Local
                                         : RetrievalMode::Global;
                try {
                    RetrievedContext ctx = assemble_context(state.resolved_query, *graph_,
                                                            mode, config_.retrieval);
                    std::string text = linearize(ctx);
                    step.observation =
                        text.empty() ? kAbstentionAnswer : trim(text);
                    contexts.push_back(std::move(ctx));
                } catch (const EtError& e) {
                    step.observation = "error: " + e.message();
                }
                break;
            }
            case ActionKind::EgoExpand: {
                auto it = decision.action.args.find("node");
                if (it == decision.action.args.end() || it->second.empty()) {
                    step.observation = "error: ego_expand needs a node argument";
                    break;
                }
                if (!graph_->has_node(it->second)) {
                    step.observation = "error: unknown node: " + it->second;
                    break;
                }
                RetrievedContext ctx;
                ctx.mode = RetrievalMode::Local;
                ctx.budget = config_.retrieval.budget_tokens;
                std::set<std::string> nodes;
                Subgraph ego = graph_->ego_network(it->second, config_.retrieval.radius);
                for (const Triple& triple : ego.triples) {
                    ContextFact fact = context_fact(*graph_, triple);
                    std::size_t cost = estimate_tokens(fact_line(fact));
                    if (ctx.budget_used + cost > ctx.budget) break;
                    ctx.budget_used += cost;
                    ctx.facts.push_back(std::move(fact));
                    nodes.insert(triple.head);
                    nodes.insert(triple.tail);
                }
                ctx.node_ids.assign(nodes.begin(), nodes.end());
                std::string text = linearize(ctx);
                step.observation = text.empty() ? kAbstentionAnswer : trim(text);
                contexts.push_back(std::move(ctx));
                break;
            }
            case ActionKind::CommunityLookup: {
                try {
                    std::string wanted;
                    if (auto it = decision.action.args.find("node");
                        it != decision.action.args.end())
                        wanted = it->second;
                    RetrievedContext ctx;
                    ctx.mode = RetrievalMode::Global;
                    ctx.budget = config_.retrieval.budget_tokens;
                    for (const CommunityReport& report : overlay_reports(*graph_)) {
                        bool matches = wanted.empty() || report.community_id == wanted;
                        for (const std::string& member : report.member_ids)
                            if (!matches && member == wanted) matches = true;
                        if (!matches) continue;
                        std::string summary = flatten(report.summary);
                        std::size_t cost = estimate_tokens(summary);
                        if (ctx.budget_used + cost > ctx.budget) break;
                        ctx.budget_used += cost;
                        ctx.community_notes.push_back({report.community_id, summary});
                    }
                    std::string text = linearize(ctx);
                    step.observation = text.empty() ? kAbstentionAnswer : trim(text);
                    contexts.push_back(std::move(ctx));
                } catch (const EtError& e) {
                    step.observation = "error: " + e.message();
                }
                break;
            }
            case ActionKind::VisualRefine: {
                try {
                    VisualReport report = visual_refine(state.resolved_query, *graph_,
                                                        *knowledge_, gateway_, prompts_,
                                                        config_.visual_cap);
                    step.observation = report.aggregate();
                    for (const VisualReport::Entry& entry : report.entries)
                        if (entry.ok) visual_hits.push_back(entry);
                } catch (const EtError& e) {
                    step.observation = "error: " + e.message();
                }
                delegated = true;
                pending_visual = false;
                break;
            }
            case ActionKind::Answer: {
                if (!visual_hits.empty()) {
                    // the delegated visual answer drives the final answer
                    if (visual_hits.size() == 1) {
                        answer = visual_hits[0].text;
                    } else {
                        std::ostringstream joined;
                        for (std::size_t i = 0; i < visual_hits.size(); ++i) {
                            if (i > 0) joined << "; ";
                            joined << "image " << visual_hits[i].object_id << ": "
                                   << visual_hits[i].text;
                        }
                        answer = joined.str();
                    }
                } else {
                    // answer from the context that overlaps the query most
                    std::set<std::string> query_tokens = token_set(state.resolved_query);
                    const RetrievedContext* best = nullptr;
                    std::size_t best_overlap = 0;
                    for (const RetrievedContext& ctx : contexts) {
                        std::size_t overlap =
                            overlap_size(query_tokens, token_set(linearize(ctx)));
                        if (best == nullptr || overlap > best_overlap) {
                            best = &ctx;
                            best_overlap = overlap;
                        }
                    }
                    RetrievedContext empty;
                    answer = generate_answer(state.resolved_query,
                                             best ? *best : empty, config_.generator,
                                             gateway_, prompts_);
                }
                step.observation = answer;
                break;
            }
        }

        bool terminal = decision.action.kind == ActionKind::Answer;
        state.history.push_back(std::move(step));

        if (!terminal) {
            Verdict verdict = verifier.verify(state, *graph_);
            state.history.back().verdict = verdict;
            if (!verdict.sufficient && !delegated &&
                !visual_evidence(state.resolved_query, *graph_, *knowledge_,
                                 config_.visual_cap)
                     .empty())
                pending_visual = true;
        } else {
            break;
        }
    }

    AgentResult result;
    result.answer = answer;
    result.trajectory.query = state.query;
    result.trajectory.resolved_query = state.resolved_query;
    result.trajectory.steps = std::move(state.history);
    result.trajectory.answer = answer;
    result.trajectory.warnings = verifier.warnings();
    return result;
}

std::string export_trajectory(const AgentTrajectory& trajectory) {
    std::ostringstream out;
    out << "query: " << trajectory.query << "\n";
    if (trajectory.resolved_query != trajectory.query)
        out << "resolved: " << trajectory.resolved_query << "\n";
    for (const AgentStep& step : trajectory.steps) {
        out << "[step " << step.index << "]\n";
        out << "thought: " << step.thought << "\n";
        out << "action: " << action_kind_name(step.action.kind);
        for (const auto& [key, value] : step.action.args)
            out << " " << key << "=" << value;
        out << "\n";
        out << "observation:\n";
        for (const std::string& line : split(step.observation, '\n'))
            out << "  " << line << "\n";
        if (step.verdict)
            out << "verdict: " << (step.verdict->sufficient ? "sufficient" : "insufficient")
                << " (" << step.verdict->rationale << ")\n";
    }
    for (const std::string& warning : trajectory.warnings)
        out << "warning: " << warning << "\n";
    out << "[final]\n" << trajectory.answer << "\n";
    return out.str();
}

}  // namespace epistwin
