#pragma once

#include "epistwin/schema_registry.hpp"
#include "epistwin/time_types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace epistwin {

// A typed metadata scalar. `raw` keeps the fixture text; the typed slots are
// filled according to `type` and `canonical()` renders the value the way it
// should appear as a graph label.
struct MetadataValue {
    ValueType type = ValueType::Text;
    std::string raw;
    int64_t integer = 0;
    Timestamp ts;
    Duration dur;
    GeoPoint geo;

    static MetadataValue from_raw(ValueType type, const std::string& raw);
    std::string canonical() const;

    bool operator==(const MetadataValue& other) const {
        return type == other.type && raw == other.raw;
    }
};

struct MetadataEntry {
    std::string key;  // normalized lowercase
    MetadataValue value;

    bool operator==(const MetadataEntry& other) const = default;
};

enum class PayloadKind { Text, Image };

struct Payload {
    PayloadKind kind = PayloadKind::Text;
    std::string text;    // inline text when kind == Text
    std::string path;    // resolved file path when kind == Image
    std::string digest;  // hex hash over the content bytes

    bool operator==(const Payload& other) const = default;
};

struct InformationObject {
    std::string id;
    Source source = Source::Note;
    std::vector<MetadataEntry> metadata;
    std::optional<Payload> payload;

    const MetadataValue* find(const std::string& key) const;

    bool operator==(const InformationObject& other) const = default;
};

struct PersonalKnowledge {
    std::string owner;
    Timestamp now;  // reference clock from the fixture header
    bool benchmark_mode = false;
    std::vector<InformationObject> objects;

    std::map<std::string, std::size_t> counts_by_source() const;
    const InformationObject* find(const std::string& id) const;
};

// Reference clock used when a fixture header omits one.
Timestamp default_now();

// Parses one fixture record line. Image payload paths are resolved against
// base_dir and must point at a readable file; digests are computed over the
// content bytes and verified when the record carries one.
InformationObject parse_information_object(const std::string& record,
                                           const SchemaRegistry& registry,
                                           const std::string& base_dir);

// Inverse of parse_information_object up to key ordering.
std::string serialize_information_object(const InformationObject& io);

// Loads a line-delimited fixture file. The optional first line is a header
// carrying owner, the reference clock, and the mode flag; in benchmark mode
// every timestamp-valued entry must be zone-qualified and precede the clock.
PersonalKnowledge load_personal_knowledge(const std::string& path, const std::string& owner,
                                          const SchemaRegistry& registry);

// Validates metadata against the source schema: required keys present, no
// unknown keys, every value parseable at its declared type.
void validate_metadata(Source source, const std::vector<MetadataEntry>& metadata,
                       const SchemaRegistry& registry);

}  // namespace epistwin
