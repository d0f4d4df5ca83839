#pragma once

#include <string>
#include <vector>

#include "epistwin/domain.hpp"
#include "epistwin/gateway.hpp"
#include "epistwin/pkg.hpp"
#include "epistwin/schema_registry.hpp"

namespace epistwin {

// Which engine turns normalized content text into triples. The rule backend
// parses the controlled "<Subject> | <relation> | <Object>." fixture grammar
// deterministically; the llm backend prompts the extractor role and parses
// its tab-separated output.
enum class ExtractorBackend { Rule, Llm };

struct ExtractedTriple {
    std::string head;
    std::string relation;
    std::string tail;
    std::string head_tag = "Entity";
    std::string tail_tag = "Entity";

    bool operator==(const ExtractedTriple& other) const = default;
};

struct ExtractedTripleSet {
    std::vector<ExtractedTriple> triples;
    std::string source_text;
    // One entry per dropped or repaired line; extraction never fails on a
    // malformed line.
    std::vector<std::string> warnings;
};

// Relation names from open extraction get folded to snake_case and capped.
std::string normalize_relation(const std::string& raw, std::vector<std::string>* warnings);

// Lifts information objects into mergeable graph fragments: metadata becomes
// one triple per entry under the registry's key-to-predicate map, content is
// normalized to text (captioning images through the gateway) and mined for
// entity triples hung off the object node.
class Transducer {
public:
    Transducer(const SchemaRegistry& registry, PromptSet prompts,
               ModelGateway* gateway, ExtractorBackend extractor);

    // One triple per metadata entry: (object node, predicate, cast value).
    Fragment lift_metadata(const InformationObject& io) const;

    // Text payloads pass through untouched; images go through caption().
    std::string normalize_content(const InformationObject& io) const;

    // Single caption string for an image payload via the captioner role.
    std::string caption(const InformationObject& io) const;

    ExtractedTripleSet extract_triples(const std::string& text, Source source) const;

    // Extraction triples plus one (object, mentions, head) link per distinct
    // extracted head. Objects without payload yield an empty fragment.
    Fragment content_graph(const InformationObject& io,
                           std::vector<std::string>* warnings = nullptr) const;

    // Anchors the object under the user root and merges the metadata and
    // content fragments in one shot.
    MergeStats apply_update(Pkg& graph, const InformationObject& io,
                            std::vector<std::string>* warnings = nullptr) const;

    // The object node mirrors its source, payload kind, and metadata as
    // searchable attributes.
    NodeDescriptor object_descriptor(const InformationObject& io) const;

private:
    const SchemaRegistry* registry_;
    PromptSet prompts_;
    ModelGateway* gateway_;
    ExtractorBackend extractor_;
};

// Fresh graph for the whole knowledge base, objects applied in file order.
Pkg build_graph(const PersonalKnowledge& pk, const Transducer& transducer);

}  // namespace epistwin
