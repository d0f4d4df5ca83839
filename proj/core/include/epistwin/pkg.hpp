#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace epistwin {

enum class NodeKind { UserRoot, Entity, Literal, Blank, Community, InfoObject };

const char* node_kind_name(NodeKind kind);
NodeKind parse_node_kind(std::string_view name);

// Graph node. The id is a kind-prefixed canonical key, so identity is stable
// across rebuilds and independent of insertion order.
struct Node {
    std::string id;
    NodeKind kind = NodeKind::Entity;
    std::string label;
    std::string type_tag;  // entity tag, source tag for info objects
    std::map<std::string, std::string> attrs;

    static std::string user_root_id(std::string_view owner);
    static std::string entity_id(std::string_view label, std::string_view type_tag);
    static std::string literal_id(std::string_view text);
    static std::string info_object_id(std::string_view object_id);
    static std::string community_id(std::string_view label);
};

enum class TripleOrigin { Metadata, Content, Community, Anchor };

const char* triple_origin_name(TripleOrigin origin);
TripleOrigin parse_triple_origin(std::string_view name);

struct Triple {
    std::string head;  // node id
    std::string relation;
    std::string tail;  // node id
    TripleOrigin origin = TripleOrigin::Content;
    std::set<std::string> provenance;  // information-object ids

    std::string key() const;  // identity is (head, relation, tail)
};

// Fragment nodes are descriptors (label + kind), not internal ids; the merge
// operator resolves them against the graph. Blank descriptors sharing a
// local_ref within one fragment resolve to the same fresh node.
struct NodeDescriptor {
    NodeKind kind = NodeKind::Entity;
    std::string label;
    std::string type_tag;
    std::map<std::string, std::string> attrs;
    std::string local_ref;  // blanks only

    static NodeDescriptor entity(std::string_view label, std::string_view type_tag = "");
    static NodeDescriptor literal(std::string_view text);
    static NodeDescriptor info_object(std::string_view object_id, std::string_view source_tag = "");
    static NodeDescriptor community(std::string_view label);
    static NodeDescriptor user_root();
    static NodeDescriptor blank(std::string_view local_ref, std::string_view label = "");
};

struct FragmentTriple {
    NodeDescriptor head;
    std::string relation;
    NodeDescriptor tail;
    TripleOrigin origin = TripleOrigin::Content;
    std::set<std::string> provenance;
};

struct Fragment {
    std::vector<FragmentTriple> triples;

    void add(NodeDescriptor head, std::string relation, NodeDescriptor tail, TripleOrigin origin,
             std::set<std::string> provenance);
};

struct MergeStats {
    std::size_t nodes_added = 0;
    std::size_t triples_added = 0;
    std::size_t provenance_unions = 0;
};

struct Subgraph {
    std::vector<std::string> node_ids;  // sorted
    std::vector<Triple> triples;        // canonical (head, relation, tail) order
};

struct ForgetReport {
    std::string object_id;
    std::vector<std::string> deleted_triples;  // canonical keys
    std::vector<std::string> deleted_nodes;    // node ids
    bool overlay_dropped = false;
};

struct AuditReport {
    std::size_t reachability_violations = 0;
    std::vector<std::string> problems;

    bool clean() const { return problems.empty(); }
};

// The personal knowledge graph. Single-writer, multiple-reader contract:
// mutations (merge, forget) must be serialized by the caller; const reads may
// run concurrently against a quiescent instance.
class Pkg {
public:
    static Pkg create(const std::string& owner);

    const std::string& owner() const { return owner_; }
    const std::string& root_id() const { return root_id_; }

    bool has_node(const std::string& id) const;
    const Node& node(const std::string& id) const;  // throws UnknownNode
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t triple_count() const { return triples_.size(); }
    const std::vector<Triple>& triples() const { return triples_; }
    const std::vector<std::size_t>& incident(const std::string& node_id) const;

    // Nodes in canonical (kind, canonical key) order.
    std::vector<const Node*> nodes_canonical() const;

    MergeStats merge(const Fragment& fragment);
    Subgraph ego_network(const std::string& center, std::size_t radius) const;
    ForgetReport forget(const std::string& object_id);

    // True once any information object with the given id contributed to the
    // graph and has not been forgotten.
    bool knows_object(const std::string& object_id) const;
    std::vector<std::string> object_ids() const;

    bool has_overlay() const;
    bool overlay_stale() const { return overlay_stale_; }
    void mark_overlay_fresh() { overlay_stale_ = false; }
    // Removes all community nodes and community-origin triples.
    std::size_t drop_overlay();

    uint64_t mutation_epoch() const { return epoch_; }

    // Moves only when the underlying knowledge changes (object merges,
    // forgetting), not when the community overlay is rebuilt or annotated.
    // Partitions are validated against this counter.
    uint64_t content_epoch() const { return content_epoch_; }

    // Overwrites one attribute on an existing node (community summaries).
    // Does not advance the content epoch.
    void set_node_attr(const std::string& node_id, const std::string& key,
                       const std::string& value);

    AuditReport audit() const;
    std::string canonical_dump() const;
    void persist(const std::string& path) const;
    static Pkg load(const std::string& path);

private:
    Pkg() = default;

    Node& ensure_node(const Node& candidate, MergeStats* stats);
    std::string resolve_descriptor(const NodeDescriptor& desc,
                                   std::map<std::string, std::string>& blank_map,
                                   MergeStats* stats);
    void add_triple_raw(Triple triple, MergeStats* stats);
    void reindex();
    void restore_reachability(MergeStats* stats);
    std::set<std::string> reachable_from_root() const;

    std::string owner_;
    std::string root_id_;
    std::unordered_map<std::string, Node> nodes_;
    std::vector<Triple> triples_;
    std::unordered_map<std::string, std::size_t> triple_index_;           // key -> position
    std::unordered_map<std::string, std::vector<std::size_t>> incident_;  // node -> positions
    std::unordered_map<std::string, std::set<std::string>> by_object_;    // object id -> keys
    uint64_t next_blank_ = 0;
    bool overlay_stale_ = false;
    uint64_t epoch_ = 0;
    uint64_t content_epoch_ = 0;
};

}  // namespace epistwin
