#include "epistwin/pkg.hpp"

#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace epistwin {

const char* node_kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::UserRoot: return "user_root";
        case NodeKind::Entity: return "entity";
        case NodeKind::Literal: return "literal";
        case NodeKind::Blank: return "blank";
        case NodeKind::Community: return "community";
        case NodeKind::InfoObject: return "info_object";
    }
    return "?";
}

NodeKind parse_node_kind(std::string_view name) {
    if (name == "user_root") return NodeKind::UserRoot;
    if (name == "entity") return NodeKind::Entity;
    if (name == "literal") return NodeKind::Literal;
    if (name == "blank") return NodeKind::Blank;
    if (name == "community") return NodeKind::Community;
    if (name == "info_object") return NodeKind::InfoObject;
    raise(ErrorKind::CorruptDump, "unknown node kind: " + std::string(name));
}

const char* triple_origin_name(TripleOrigin origin) {
    switch (origin) {
        case TripleOrigin::Metadata: return "metadata";
        case TripleOrigin::Content: return "content";
        case TripleOrigin::Community: return "community";
        case TripleOrigin::Anchor: return "anchor";
    }
    return "?";
}

TripleOrigin parse_triple_origin(std::string_view name) {
    if (name == "metadata") return TripleOrigin::Metadata;
    if (name == "content") return TripleOrigin::Content;
    if (name == "community") return TripleOrigin::Community;
    if (name == "anchor") return TripleOrigin::Anchor;
    raise(ErrorKind::CorruptDump, "unknown triple origin: " + std::string(name));
}

std::string Node::user_root_id(std::string_view owner) { return "U:" + std::string(owner); }

std::string Node::entity_id(std::string_view label, std::string_view type_tag) {
    return "E:" + normalize_label(label) + "|" + std::string(type_tag);
}

std::string Node::literal_id(std::string_view text) { return "L:" + std::string(text); }

std::string Node::info_object_id(std::string_view object_id) {
    return "I:" + std::string(object_id);
}

std::string Node::community_id(std::string_view label) { return "C:" + std::string(label); }

std::string Triple::key() const { return head + '\x1f' + relation + '\x1f' + tail; }

NodeDescriptor NodeDescriptor::entity(std::string_view label, std::string_view type_tag) {
    NodeDescriptor d;
    d.kind = NodeKind::Entity;
    d.label = std::string(label);
    d.type_tag = std::string(type_tag);
    return d;
}

NodeDescriptor NodeDescriptor::literal(std::string_view text) {
    NodeDescriptor d;
    d.kind = NodeKind::Literal;
    d.label = std::string(text);
    return d;
}

NodeDescriptor NodeDescriptor::info_object(std::string_view object_id,
                                           std::string_view source_tag) {
    NodeDescriptor d;
    d.kind = NodeKind::InfoObject;
    d.label = std::string(object_id);
    d.type_tag = std::string(source_tag);
    return d;
}

NodeDescriptor NodeDescriptor::community(std::string_view label) {
    NodeDescriptor d;
    d.kind = NodeKind::Community;
    d.label = std::string(label);
    return d;
}

NodeDescriptor NodeDescriptor::user_root() {
    NodeDescriptor d;
    d.kind = NodeKind::UserRoot;
    return d;
}

NodeDescriptor NodeDescriptor::blank(std::string_view local_ref, std::string_view label) {
    NodeDescriptor d;
    d.kind = NodeKind::Blank;
    d.local_ref = std::string(local_ref);
    d.label = std::string(label);
    return d;
}

void Fragment::add(NodeDescriptor head, std::string relation, NodeDescriptor tail,
                   TripleOrigin origin, std::set<std::string> provenance) {
    FragmentTriple ft;
    ft.head = std::move(head);
    ft.relation = std::move(relation);
    ft.tail = std::move(tail);
    ft.origin = origin;
    ft.provenance = std::move(provenance);
    triples.push_back(std::move(ft));
}

Pkg Pkg::create(const std::string& owner) {
    if (owner.empty()) raise(ErrorKind::MalformedRecord, "owner must be non-empty");
    Pkg g;
    g.owner_ = owner;
    g.root_id_ = Node::user_root_id(owner);
    Node root;
    root.id = g.root_id_;
    root.kind = NodeKind::UserRoot;
    root.label = owner;
    g.nodes_.emplace(root.id, std::move(root));
    return g;
}

bool Pkg::has_node(const std::string& id) const { return nodes_.find(id) != nodes_.end(); }

const Node& Pkg::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) raise(ErrorKind::UnknownNode, "no node with id: " + id);
    return it->second;
}

const std::vector<std::size_t>& Pkg::incident(const std::string& node_id) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = incident_.find(node_id);
    return it == incident_.end() ? kEmpty : it->second;
}

std::vector<const Node*> Pkg::nodes_canonical() const {
    std::vector<const Node*> out;
    out.reserve(nodes_.size());
    for (const auto& [id, node] : nodes_) out.push_back(&node);
    std::sort(out.begin(), out.end(), [](const Node* a, const Node* b) {
        if (a->kind != b->kind) return static_cast<int>(a->kind) < static_cast<int>(b->kind);
        return a->id < b->id;
    });
    return out;
}

Node& Pkg::ensure_node(const Node& candidate, MergeStats* stats) {
    auto it = nodes_.find(candidate.id);
    if (it == nodes_.end()) {
        it = nodes_.emplace(candidate.id, candidate).first;
        if (stats) ++stats->nodes_added;
    } else {
        // Existing label and tag win; only missing attrs are filled in.
        for (const auto& [k, v] : candidate.attrs) it->second.attrs.emplace(k, v);
    }
    return it->second;
}

std::string Pkg::resolve_descriptor(const NodeDescriptor& desc,
                                    std::map<std::string, std::string>& blank_map,
                                    MergeStats* stats) {
    switch (desc.kind) {
        case NodeKind::UserRoot:
            return root_id_;
        case NodeKind::Blank: {
            if (!desc.local_ref.empty()) {
                auto it = blank_map.find(desc.local_ref);
                if (it != blank_map.end()) return it->second;
            }
            Node fresh;
            fresh.id = "B:b" + std::to_string(next_blank_++);
            fresh.kind = NodeKind::Blank;
            fresh.label = desc.label.empty() ? "_" + std::to_string(next_blank_ - 1) : desc.label;
            fresh.attrs = desc.attrs;
            ensure_node(fresh, stats);
            if (!desc.local_ref.empty()) blank_map[desc.local_ref] = fresh.id;
            return fresh.id;
        }
        default: {
            Node n;
            n.kind = desc.kind;
            n.label = desc.label;
            n.type_tag = desc.type_tag;
            n.attrs = desc.attrs;
            switch (desc.kind) {
                case NodeKind::Entity: n.id = Node::entity_id(desc.label, desc.type_tag); break;
                case NodeKind::Literal: n.id = Node::literal_id(desc.label); break;
                case NodeKind::Community: n.id = Node::community_id(desc.label); break;
                case NodeKind::InfoObject: n.id = Node::info_object_id(desc.label); break;
                default: break;
            }
            ensure_node(n, stats);
            return n.id;
        }
    }
}

void Pkg::add_triple_raw(Triple triple, MergeStats* stats) {
    std::string key = triple.key();
    auto it = triple_index_.find(key);
    if (it != triple_index_.end()) {
        Triple& existing = triples_[it->second];
        std::size_t before = existing.provenance.size();
        existing.provenance.insert(triple.provenance.begin(), triple.provenance.end());
        if (existing.provenance.size() != before) {
            if (stats) ++stats->provenance_unions;
            for (const auto& obj : triple.provenance) by_object_[obj].insert(key);
        }
        return;
    }
    std::size_t pos = triples_.size();
    for (const auto& obj : triple.provenance) by_object_[obj].insert(key);
    incident_[triple.head].push_back(pos);
    if (triple.tail != triple.head) incident_[triple.tail].push_back(pos);
    triple_index_.emplace(std::move(key), pos);
    triples_.push_back(std::move(triple));
    if (stats) ++stats->triples_added;
}

std::set<std::string> Pkg::reachable_from_root() const {
    std::set<std::string> seen;
    std::deque<std::string> frontier;
    seen.insert(root_id_);
    frontier.push_back(root_id_);
    while (!frontier.empty()) {
        std::string current = std::move(frontier.front());
        frontier.pop_front();
        auto it = incident_.find(current);
        if (it == incident_.end()) continue;
        for (std::size_t pos : it->second) {
            const Triple& t = triples_[pos];
            if (t.head == current && seen.insert(t.tail).second) frontier.push_back(t.tail);
        }
    }
    return seen;
}

void Pkg::restore_reachability(MergeStats* stats) {
    while (true) {
        std::set<std::string> reachable = reachable_from_root();
        std::set<std::string> bad_tails;
        std::set<std::string> has_incoming;
        for (const Triple& t : triples_) {
            has_incoming.insert(t.tail);
            if (reachable.find(t.tail) == reachable.end()) bad_tails.insert(t.tail);
        }
        if (bad_tails.empty()) return;

        std::vector<std::string> roots_of_islands;
        for (const Triple& t : triples_) {
            if (reachable.count(t.head) != 0) continue;
            if (has_incoming.count(t.head) != 0) continue;
            roots_of_islands.push_back(t.head);
        }
        std::sort(roots_of_islands.begin(), roots_of_islands.end());
        roots_of_islands.erase(std::unique(roots_of_islands.begin(), roots_of_islands.end()),
                               roots_of_islands.end());
        bool single = false;
        if (roots_of_islands.empty()) {
            // Pure cycle: anchor the lowest-id unreachable head, one per pass.
            std::set<std::string> heads;
            for (const Triple& t : triples_)
                if (reachable.find(t.head) == reachable.end()) heads.insert(t.head);
            roots_of_islands.assign(heads.begin(), heads.end());
            roots_of_islands.resize(1);
            single = true;
        }
        for (const std::string& h : roots_of_islands) {
            Triple anchor;
            anchor.head = root_id_;
            anchor.relation = "anchors";
            anchor.tail = h;
            for (std::size_t pos : incident_.at(h)) {
                const Triple& t = triples_[pos];
                if (t.head == h)
                    anchor.provenance.insert(t.provenance.begin(), t.provenance.end());
            }
            anchor.origin =
                anchor.provenance.empty() ? TripleOrigin::Community : TripleOrigin::Anchor;
            add_triple_raw(std::move(anchor), stats);
            if (single) break;
        }
    }
}

MergeStats Pkg::merge(const Fragment& fragment) {
    MergeStats stats;
    if (fragment.triples.empty()) return stats;

    for (const FragmentTriple& ft : fragment.triples) {
        if (ft.head.kind == NodeKind::Literal)
            raise(ErrorKind::InvariantViolation, "literal nodes cannot be triple heads");
        if (ft.tail.kind == NodeKind::UserRoot)
            raise(ErrorKind::InvariantViolation, "the user root cannot be a triple tail");
        if (ft.relation.empty())
            raise(ErrorKind::InvariantViolation, "triple relation must be non-empty");
        if (ft.provenance.empty() && ft.origin != TripleOrigin::Community)
            raise(ErrorKind::InvariantViolation,
                  "non-community triples must carry provenance");
        for (const auto& obj : ft.provenance)
            if (obj.empty() || obj.find_first_of(",\t\n") != std::string::npos)
                raise(ErrorKind::InvariantViolation, "bad provenance object id: " + obj);
    }

    std::map<std::string, std::string> blank_map;
    for (const FragmentTriple& ft : fragment.triples) {
        Triple t;
        t.head = resolve_descriptor(ft.head, blank_map, &stats);
        t.relation = ft.relation;
        t.tail = resolve_descriptor(ft.tail, blank_map, &stats);
        t.origin = ft.origin;
        t.provenance = ft.provenance;
        add_triple_raw(std::move(t), &stats);
    }
    restore_reachability(&stats);
    ++epoch_;
    bool touches_content = false;
    for (const FragmentTriple& ft : fragment.triples)
        if (ft.origin != TripleOrigin::Community) touches_content = true;
    if (touches_content) {
        ++content_epoch_;
        if (has_overlay()) overlay_stale_ = true;
    }
    return stats;
}

void Pkg::set_node_attr(const std::string& node_id, const std::string& key,
                        const std::string& value) {
    auto it = nodes_.find(node_id);
    if (it == nodes_.end())
        raise(ErrorKind::UnknownNode, "no node with id: " + node_id);
    it->second.attrs[key] = value;
    ++epoch_;
}

Subgraph Pkg::ego_network(const std::string& center, std::size_t radius) const {
    if (!has_node(center)) raise(ErrorKind::UnknownNode, "no node with id: " + center);
    std::set<std::string> members;
    members.insert(center);
    std::deque<std::pair<std::string, std::size_t>> frontier;
    frontier.emplace_back(center, 0);
    while (!frontier.empty()) {
        auto [current, depth] = frontier.front();
        frontier.pop_front();
        if (depth == radius) continue;
        auto it = incident_.find(current);
        if (it == incident_.end()) continue;
        for (std::size_t pos : it->second) {
            const Triple& t = triples_[pos];
            const std::string& other = (t.head == current) ? t.tail : t.head;
            if (members.insert(other).second) frontier.emplace_back(other, depth + 1);
        }
    }

    Subgraph sub;
    sub.node_ids.assign(members.begin(), members.end());
    std::set<std::size_t> chosen;
    for (const std::string& id : members) {
        auto it = incident_.find(id);
        if (it == incident_.end()) continue;
        for (std::size_t pos : it->second) {
            const Triple& t = triples_[pos];
            if (members.count(t.head) != 0 && members.count(t.tail) != 0) chosen.insert(pos);
        }
    }
    for (std::size_t pos : chosen) sub.triples.push_back(triples_[pos]);
    std::sort(sub.triples.begin(), sub.triples.end(), [](const Triple& a, const Triple& b) {
        if (a.head != b.head) return a.head < b.head;
        if (a.relation != b.relation) return a.relation < b.relation;
        return a.tail < b.tail;
    });
    return sub;
}

bool Pkg::knows_object(const std::string& object_id) const {
    if (nodes_.find(Node::info_object_id(object_id)) != nodes_.end()) return true;
    auto it = by_object_.find(object_id);
    return it != by_object_.end() && !it->second.empty();
}

std::vector<std::string> Pkg::object_ids() const {
    std::set<std::string> ids;
    for (const auto& [obj, keys] : by_object_)
        if (!keys.empty()) ids.insert(obj);
    for (const auto& [id, node] : nodes_)
        if (node.kind == NodeKind::InfoObject) ids.insert(node.label);
    return std::vector<std::string>(ids.begin(), ids.end());
}

bool Pkg::has_overlay() const {
    for (const auto& [id, node] : nodes_)
        if (node.kind == NodeKind::Community) return true;
    return false;
}

std::size_t Pkg::drop_overlay() {
    std::set<std::string> community_nodes;
    for (const auto& [id, node] : nodes_)
        if (node.kind == NodeKind::Community) community_nodes.insert(id);
    if (community_nodes.empty() && !overlay_stale_) return 0;

    std::vector<Triple> kept;
    std::size_t removed = 0;
    for (Triple& t : triples_) {
        bool community_edge = t.origin == TripleOrigin::Community ||
                              community_nodes.count(t.head) != 0 ||
                              community_nodes.count(t.tail) != 0;
        if (community_edge) {
            ++removed;
        } else {
            kept.push_back(std::move(t));
        }
    }
    triples_ = std::move(kept);
    for (const std::string& id : community_nodes) nodes_.erase(id);
    reindex();
    overlay_stale_ = false;
    if (removed != 0 || !community_nodes.empty()) ++epoch_;
    return removed;
}

void Pkg::reindex() {
    triple_index_.clear();
    incident_.clear();
    by_object_.clear();
    for (std::size_t pos = 0; pos < triples_.size(); ++pos) {
        const Triple& t = triples_[pos];
        triple_index_.emplace(t.key(), pos);
        incident_[t.head].push_back(pos);
        if (t.tail != t.head) incident_[t.tail].push_back(pos);
        for (const auto& obj : t.provenance) by_object_[obj].insert(t.key());
    }
}

ForgetReport Pkg::forget(const std::string& object_id) {
    if (!knows_object(object_id))
        raise(ErrorKind::UnknownObject, "no information object with id: " + object_id);

    ForgetReport report;
    report.object_id = object_id;

    // A deletion invalidates any community partition, so the overlay goes
    // first and must be rebuilt explicitly afterwards.
    if (has_overlay()) {
        drop_overlay();
        report.overlay_dropped = true;
    }

    std::vector<Triple> kept;
    for (Triple& t : triples_) {
        auto it = t.provenance.find(object_id);
        if (it != t.provenance.end()) {
            t.provenance.erase(it);
            if (t.provenance.empty() && t.origin != TripleOrigin::Community) {
                report.deleted_triples.push_back(t.key());
                continue;
            }
        }
        kept.push_back(std::move(t));
    }
    triples_ = std::move(kept);

    std::string io_node = Node::info_object_id(object_id);
    if (nodes_.find(io_node) != nodes_.end()) {
        nodes_.erase(io_node);
        report.deleted_nodes.push_back(io_node);
        // Any triple still touching the deleted object node goes too.
        std::vector<Triple> survivors;
        for (Triple& t : triples_) {
            if (t.head == io_node || t.tail == io_node) {
                report.deleted_triples.push_back(t.key());
            } else {
                survivors.push_back(std::move(t));
            }
        }
        triples_ = std::move(survivors);
    }
    reindex();

    // Garbage-collect nodes left with no incident triples.
    std::vector<std::string> isolated;
    for (const auto& [id, node] : nodes_) {
        if (node.kind == NodeKind::UserRoot) continue;
        auto it = incident_.find(id);
        if (it == incident_.end() || it->second.empty()) isolated.push_back(id);
    }
    for (const std::string& id : isolated) {
        nodes_.erase(id);
        report.deleted_nodes.push_back(id);
    }

    restore_reachability(nullptr);
    ++epoch_;
    ++content_epoch_;
    std::sort(report.deleted_triples.begin(), report.deleted_triples.end());
    std::sort(report.deleted_nodes.begin(), report.deleted_nodes.end());
    return report;
}

AuditReport Pkg::audit() const {
    AuditReport report;
    std::size_t roots = 0;
    for (const auto& [id, node] : nodes_) {
        if (node.id != id) report.problems.push_back("node table key mismatch for " + id);
        switch (node.kind) {
            case NodeKind::UserRoot:
                ++roots;
                if (id != root_id_) report.problems.push_back("foreign user root: " + id);
                break;
            case NodeKind::Entity:
                if (id != Node::entity_id(node.label, node.type_tag))
                    report.problems.push_back("entity id does not match its canonical key: " + id);
                break;
            case NodeKind::Literal:
                if (id != Node::literal_id(node.label))
                    report.problems.push_back("literal id does not match its text: " + id);
                break;
            case NodeKind::Community:
                if (id != Node::community_id(node.label))
                    report.problems.push_back("community id does not match its label: " + id);
                break;
            case NodeKind::InfoObject:
                if (id != Node::info_object_id(node.label))
                    report.problems.push_back("object node id does not match its label: " + id);
                break;
            case NodeKind::Blank:
                break;
        }
    }
    if (roots != 1)
        report.problems.push_back("expected exactly one user root, found " +
                                  std::to_string(roots));

    for (const Triple& t : triples_) {
        auto head_it = nodes_.find(t.head);
        auto tail_it = nodes_.find(t.tail);
        if (head_it == nodes_.end())
            report.problems.push_back("dangling head: " + t.head);
        else if (head_it->second.kind == NodeKind::Literal)
            report.problems.push_back("literal head: " + t.key());
        if (tail_it == nodes_.end())
            report.problems.push_back("dangling tail: " + t.tail);
        else if (tail_it->second.kind == NodeKind::UserRoot)
            report.problems.push_back("user root tail: " + t.key());
        if (t.provenance.empty() && t.origin != TripleOrigin::Community)
            report.problems.push_back("provenance missing: " + t.key());
    }

    std::set<std::string> reachable = reachable_from_root();
    std::set<std::string> bad_tails;
    for (const Triple& t : triples_)
        if (reachable.find(t.tail) == reachable.end()) bad_tails.insert(t.tail);
    report.reachability_violations = bad_tails.size();
    for (const std::string& id : bad_tails)
        report.problems.push_back("tail not reachable from user root: " + id);

    // Index consistency.
    std::unordered_map<std::string, std::size_t> want_index;
    std::unordered_map<std::string, std::set<std::size_t>> want_incident;
    std::unordered_map<std::string, std::set<std::string>> want_by_object;
    for (std::size_t pos = 0; pos < triples_.size(); ++pos) {
        const Triple& t = triples_[pos];
        if (!want_index.emplace(t.key(), pos).second)
            report.problems.push_back("duplicate triple: " + t.key());
        want_incident[t.head].insert(pos);
        want_incident[t.tail].insert(pos);
        for (const auto& obj : t.provenance) want_by_object[obj].insert(t.key());
    }
    if (want_index.size() != triple_index_.size())
        report.problems.push_back("triple index size drift");
    for (const auto& [key, pos] : want_index) {
        auto it = triple_index_.find(key);
        if (it == triple_index_.end() || it->second != pos) {
            report.problems.push_back("triple index entry drift: " + key);
            break;
        }
    }
    std::size_t incident_nodes = 0;
    for (const auto& [id, list] : incident_)
        if (!list.empty()) ++incident_nodes;
    if (incident_nodes != want_incident.size()) {
        report.problems.push_back("incidence index size drift");
    } else {
        for (const auto& [id, want] : want_incident) {
            auto it = incident_.find(id);
            if (it == incident_.end() ||
                std::set<std::size_t>(it->second.begin(), it->second.end()) != want) {
                report.problems.push_back("incidence index drift at node: " + id);
                break;
            }
        }
    }
    std::size_t provenance_objects = 0;
    for (const auto& [obj, keys] : by_object_)
        if (!keys.empty()) ++provenance_objects;
    if (provenance_objects != want_by_object.size()) {
        report.problems.push_back("provenance index size drift");
    } else {
        for (const auto& [obj, want] : want_by_object) {
            auto it = by_object_.find(obj);
            if (it == by_object_.end() || it->second != want) {
                report.problems.push_back("provenance index drift for object: " + obj);
                break;
            }
        }
    }
    return report;
}

std::string Pkg::canonical_dump() const {
    std::ostringstream body;
    for (const Node* n : nodes_canonical()) {
        nlohmann::json attrs(n->attrs);
        body << "N\t" << node_kind_name(n->kind) << '\t' << escape_field(n->id) << '\t'
             << escape_field(n->label) << '\t' << escape_field(n->type_tag) << '\t'
             << escape_field(attrs.dump()) << '\n';
    }
    std::vector<const Triple*> ordered;
    ordered.reserve(triples_.size());
    for (const Triple& t : triples_) ordered.push_back(&t);
    std::sort(ordered.begin(), ordered.end(), [](const Triple* a, const Triple* b) {
        if (a->head != b->head) return a->head < b->head;
        if (a->relation != b->relation) return a->relation < b->relation;
        return a->tail < b->tail;
    });
    for (const Triple* t : ordered) {
        body << "T\t" << escape_field(t->head) << '\t' << escape_field(t->relation) << '\t'
             << escape_field(t->tail) << '\t' << triple_origin_name(t->origin) << '\t';
        if (t->provenance.empty()) {
            body << '-';
        } else {
            bool first = true;
            for (const auto& obj : t->provenance) {
                if (!first) body << ',';
                body << escape_field(obj);
                first = false;
            }
        }
        body << '\n';
    }
    std::string body_text = body.str();
    std::ostringstream out;
    out << "#pkg\towner=" << escape_field(owner_) << "\tnodes=" << nodes_.size()
        << "\ttriples=" << triples_.size() << "\tstale=" << (overlay_stale_ ? 1 : 0)
        << "\tnextblank=" << next_blank_ << "\tchecksum=" << to_hex64(fnv1a64(body_text)) << '\n'
        << body_text;
    return out.str();
}

void Pkg::persist(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot open for writing: " + path);
    out << canonical_dump();
    if (!out) raise(ErrorKind::Io, "write failed: " + path);
}

Pkg Pkg::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();

    std::size_t eol = text.find('\n');
    if (eol == std::string::npos) raise(ErrorKind::CorruptDump, "missing header line");
    std::string header = text.substr(0, eol);
    std::string body = text.substr(eol + 1);

    auto fields = split(header, '\t');
    if (fields.empty() || fields[0] != "#pkg")
        raise(ErrorKind::CorruptDump, "not a graph dump: bad magic");
    std::map<std::string, std::string> hdr;
    for (std::size_t i = 1; i < fields.size(); ++i) {
        std::size_t eq = fields[i].find('=');
        if (eq == std::string::npos) raise(ErrorKind::CorruptDump, "bad header field");
        hdr[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
    }
    for (const char* need : {"owner", "nodes", "triples", "stale", "nextblank", "checksum"})
        if (hdr.find(need) == hdr.end())
            raise(ErrorKind::CorruptDump, std::string("header missing ") + need);

    if (to_hex64(fnv1a64(body)) != hdr["checksum"])
        raise(ErrorKind::CorruptDump, "checksum mismatch");

    Pkg g;
    g.owner_ = unescape_field(hdr["owner"]);
    g.root_id_ = Node::user_root_id(g.owner_);
    g.next_blank_ = std::stoull(hdr["nextblank"]);
    g.overlay_stale_ = hdr["stale"] == "1";

    std::size_t want_nodes = std::stoull(hdr["nodes"]);
    std::size_t want_triples = std::stoull(hdr["triples"]);

    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f[0] == "N") {
            if (f.size() != 6) raise(ErrorKind::CorruptDump, "bad node record: " + line);
            Node n;
            n.kind = parse_node_kind(f[1]);
            n.id = unescape_field(f[2]);
            n.label = unescape_field(f[3]);
            n.type_tag = unescape_field(f[4]);
            nlohmann::json attrs;
            try {
                attrs = nlohmann::json::parse(unescape_field(f[5]));
            } catch (const nlohmann::json::exception&) {
                raise(ErrorKind::CorruptDump, "bad attrs record: " + line);
            }
            for (const auto& [k, v] : attrs.items()) n.attrs[k] = v.get<std::string>();
            if (!g.nodes_.emplace(n.id, n).second)
                raise(ErrorKind::CorruptDump, "duplicate node id: " + n.id);
        } else if (f[0] == "T") {
            if (f.size() != 6) raise(ErrorKind::CorruptDump, "bad triple record: " + line);
            Triple t;
            t.head = unescape_field(f[1]);
            t.relation = unescape_field(f[2]);
            t.tail = unescape_field(f[3]);
            t.origin = parse_triple_origin(f[4]);
            if (f[5] != "-")
                for (const auto& obj : split(f[5], ','))
                    t.provenance.insert(unescape_field(obj));
            if (g.nodes_.find(t.head) == g.nodes_.end() ||
                g.nodes_.find(t.tail) == g.nodes_.end())
                raise(ErrorKind::CorruptDump, "triple references unknown node: " + line);
            if (g.triple_index_.find(t.key()) != g.triple_index_.end())
                raise(ErrorKind::CorruptDump, "duplicate triple: " + t.key());
            g.triple_index_.emplace(t.key(), g.triples_.size());
            g.triples_.push_back(std::move(t));
        } else {
            raise(ErrorKind::CorruptDump, "unknown record type: " + line);
        }
    }
    if (g.nodes_.size() != want_nodes || g.triples_.size() != want_triples)
        raise(ErrorKind::CorruptDump, "record counts disagree with header");
    g.reindex();
    AuditReport audit = g.audit();
    if (!audit.clean())
        raise(ErrorKind::CorruptDump, "dump fails audit: " + audit.problems.front());
    return g;
}

}  // namespace epistwin
