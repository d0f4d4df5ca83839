#include "epistwin/transduction.hpp"

#include <cctype>
#include <filesystem>
#include <set>
#include <sstream>

#include "epistwin/util.hpp"

namespace epistwin {

namespace {

constexpr std::size_t kMaxRelationLength = 64;

bool valid_entity_tag(const std::string& tag) {
    if (tag.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(tag.front()))) return false;
    for (char c : tag)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

// "Sarah Green:Person" → ("Sarah Green", "Person"); no recognizable tag
// leaves the default in place.
void split_tag(const std::string& field, std::string& label, std::string& tag) {
    auto colon = field.rfind(':');
    if (colon != std::string::npos) {
        std::string candidate = trim(field.substr(colon + 1));
        if (valid_entity_tag(candidate)) {
            label = trim(field.substr(0, colon));
            tag = candidate;
            return;
        }
    }
    label = trim(field);
}

}  // namespace

std::string normalize_relation(const std::string& raw,
                               std::vector<std::string>* warnings) {
    std::string out;
    out.reserve(raw.size());
    bool pending_sep = false;
    for (char c : raw) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            pending_sep = true;
        }
    }
    if (out.size() > kMaxRelationLength) {
        out.resize(kMaxRelationLength);
        if (warnings)
            warnings->push_back("relation truncated to " +
                                std::to_string(kMaxRelationLength) + " chars: '" +
                                raw + "'");
    }
    return out;
}

Transducer::Transducer(const SchemaRegistry& registry, PromptSet prompts,
                       ModelGateway* gateway, ExtractorBackend extractor)
    : registry_(&registry),
      prompts_(std::move(prompts)),
      gateway_(gateway),
      extractor_(extractor) {}

NodeDescriptor Transducer::object_descriptor(const InformationObject& io) const {
    NodeDescriptor node = NodeDescriptor::info_object(io.id, source_name(io.source));
    node.attrs["source"] = source_name(io.source);
    if (!io.payload) {
        node.attrs["payload"] = "none";
    } else if (io.payload->kind == PayloadKind::Image) {
        node.attrs["payload"] = "image";
    } else {
        node.attrs["payload"] = "text";
    }
    for (const auto& entry : io.metadata) {
        if (entry.key == "source" || entry.key == "payload") continue;
        std::string& slot = node.attrs[entry.key];
        if (slot.empty())
            slot = entry.value.canonical();
        else
            slot += "; " + entry.value.canonical();
    }
    return node;
}

Fragment Transducer::lift_metadata(const InformationObject& io) const {
    Fragment fragment;
    NodeDescriptor head = NodeDescriptor::info_object(io.id, source_name(io.source));
    for (const auto& entry : io.metadata) {
        const FieldRule& rule = registry_->rule(io.source, entry.key);
        NodeDescriptor tail;
        switch (rule.cast) {
            case CastKind::Entity:
                tail = NodeDescriptor::entity(trim(entry.value.raw), rule.entity_tag);
                break;
            case CastKind::TimestampLiteral:
                tail = NodeDescriptor::literal(entry.value.canonical());
                tail.type_tag = "timestamp";
                break;
            case CastKind::Literal:
                tail = NodeDescriptor::literal(entry.value.canonical());
                break;
        }
        fragment.add(head, rule.predicate, tail, TripleOrigin::Metadata, {io.id});
    }
    return fragment;
}

std::string Transducer::normalize_content(const InformationObject& io) const {
    if (!io.payload) return "";
    if (io.payload->kind == PayloadKind::Text) return io.payload->text;
    return caption(io);
}

std::string Transducer::caption(const InformationObject& io) const {
    if (!io.payload || io.payload->kind != PayloadKind::Image)
        raise(ErrorKind::Usage, "object '" + io.id + "' has no image payload");
    if (!gateway_)
        raise(ErrorKind::ExtractionUnavailable,
              "captioning '" + io.id + "' needs a gateway");
    if (!std::filesystem::exists(io.payload->path))
        raise(ErrorKind::GatewayError,
              "image file not found: '" + io.payload->path + "'");
    GatewayRequest request;
    request.role = GatewayRole::Captioner;
    request.prompt =
        render_template(prompts_.caption(), {{"source", source_name(io.source)}});
    request.attachments = {io.payload->path};
    return trim(gateway_->complete(request));
}

ExtractedTripleSet Transducer::extract_triples(const std::string& text,
                                               Source source) const {
    ExtractedTripleSet out;
    out.source_text = text;
    if (trim(text).empty()) return out;

    if (extractor_ == ExtractorBackend::Rule) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            std::string t = trim(line);
            if (t.empty()) continue;
            if (t.back() != '.') {
                out.warnings.push_back("line lacks terminal period: '" + t + "'");
                continue;
            }
            t.pop_back();
            std::vector<std::string> parts = split(t, '|');
            if (parts.size() != 3) {
                out.warnings.push_back("line is not a three-part statement: '" +
                                       trim(line) + "'");
                continue;
            }
            ExtractedTriple triple;
            split_tag(trim(parts[0]), triple.head, triple.head_tag);
            split_tag(trim(parts[2]), triple.tail, triple.tail_tag);
            triple.relation = normalize_relation(trim(parts[1]), &out.warnings);
            if (triple.head.empty() || triple.tail.empty() || triple.relation.empty()) {
                out.warnings.push_back("dropped incomplete statement: '" +
                                       trim(line) + "'");
                continue;
            }
            out.triples.push_back(std::move(triple));
        }
        return out;
    }

    if (!gateway_)
        raise(ErrorKind::ExtractionUnavailable, "llm extraction needs a gateway");
    GatewayRequest request;
    request.role = GatewayRole::Extractor;
    request.prompt = render_template(
        prompts_.extraction(), {{"content", text}, {"source", source_name(source)}});
    std::string response = gateway_->complete(request);

    std::istringstream in(response);
    std::string line;
    bool terminated = false;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t == "###END###") {
            terminated = true;
            break;
        }
        if (t.empty()) continue;
        std::vector<std::string> fields = split(t, '\t');
        if (fields.size() != 3) {
            out.warnings.push_back("dropped non-triple line: '" + t + "'");
            continue;
        }
        ExtractedTriple triple;
        triple.head = trim(fields[0]);
        triple.tail = trim(fields[2]);
        triple.relation = normalize_relation(trim(fields[1]), &out.warnings);
        if (triple.head.empty() || triple.tail.empty() || triple.relation.empty()) {
            out.warnings.push_back("dropped incomplete triple line: '" + t + "'");
            continue;
        }
        out.triples.push_back(std::move(triple));
    }
    if (!terminated)
        out.warnings.push_back("extractor output missing ###END### terminator");
    return out;
}

Fragment Transducer::content_graph(const InformationObject& io,
                                   std::vector<std::string>* warnings) const {
    Fragment fragment;
    if (!io.payload) return fragment;
    ExtractedTripleSet extracted =
        extract_triples(normalize_content(io), io.source);
    if (warnings)
        warnings->insert(warnings->end(), extracted.warnings.begin(),
                         extracted.warnings.end());

    NodeDescriptor object =
        NodeDescriptor::info_object(io.id, source_name(io.source));
    std::set<std::string> seen_heads;
    std::vector<NodeDescriptor> mention_targets;
    for (const ExtractedTriple& t : extracted.triples) {
        NodeDescriptor head = NodeDescriptor::entity(t.head, t.head_tag);
        NodeDescriptor tail = NodeDescriptor::entity(t.tail, t.tail_tag);
        fragment.add(head, t.relation, tail, TripleOrigin::Content, {io.id});
        std::string head_key = normalize_label(t.head) + "|" + t.head_tag;
        if (seen_heads.insert(head_key).second) mention_targets.push_back(head);
    }
    for (const NodeDescriptor& head : mention_targets)
        fragment.add(object, "mentions", head, TripleOrigin::Content, {io.id});
    return fragment;
}

MergeStats Transducer::apply_update(Pkg& graph, const InformationObject& io,
                                    std::vector<std::string>* warnings) const {
    Fragment fragment;
    fragment.add(NodeDescriptor::user_root(), "owns", object_descriptor(io),
                 TripleOrigin::Anchor, {io.id});
    Fragment metadata = lift_metadata(io);
    for (auto& t : metadata.triples) fragment.triples.push_back(std::move(t));
    Fragment content = content_graph(io, warnings);
    for (auto& t : content.triples) fragment.triples.push_back(std::move(t));
    return graph.merge(fragment);
}

Pkg build_graph(const PersonalKnowledge& pk, const Transducer& transducer) {
    Pkg graph = Pkg::create(pk.owner);
    for (const InformationObject& io : pk.objects) transducer.apply_update(graph, io);
    return graph;
}

}  // namespace epistwin
