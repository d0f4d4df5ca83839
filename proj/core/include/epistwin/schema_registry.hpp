#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace epistwin {

// Closed enumeration of personal-data sources. Unknown tags are rejected.
enum class Source { Calendar, Alarm, Photos, Note, Documents, Phone, Contacts };

inline constexpr std::array<Source, 7> kAllSources = {
    Source::Calendar, Source::Alarm,  Source::Photos,   Source::Note,
    Source::Documents, Source::Phone, Source::Contacts,
};

Source parse_source(std::string_view name);
const char* source_name(Source source);

enum class ValueType { Text, Integer, Timestamp, Date, Duration, Geo, Phone };

ValueType parse_value_type(std::string_view name);
const char* value_type_name(ValueType type);

// How a metadata value becomes a graph node when lifted: a plain literal, an
// entity with a type tag, or a literal re-rendered as a canonical timestamp.
enum class CastKind { Literal, Entity, TimestampLiteral };

// Per-key schema rule: the value type accepted at parse time, whether the key
// must be present, the relation name used when lifting, and the node cast.
struct FieldRule {
    ValueType type = ValueType::Text;
    bool required = false;
    std::string predicate;
    CastKind cast = CastKind::Literal;
    std::string entity_tag;  // type tag when cast == Entity
};

// Data-driven per-source schema table, loaded from a small config file so the
// fixture vocabulary can evolve without code changes.
class SchemaRegistry {
public:
    static SchemaRegistry from_file(const std::string& path);
    static SchemaRegistry from_json_text(const std::string& text);

    bool has_rule(Source source, const std::string& key) const;
    const FieldRule& rule(Source source, const std::string& key) const;
    const std::map<std::string, FieldRule>& rules(Source source) const;
    std::vector<std::string> required_keys(Source source) const;

private:
    std::array<std::map<std::string, FieldRule>, 7> rules_;
};

}  // namespace epistwin
