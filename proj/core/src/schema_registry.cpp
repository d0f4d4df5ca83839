#include "epistwin/schema_registry.hpp"

#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace epistwin {

Source parse_source(std::string_view name) {
    for (Source s : kAllSources) {
        if (name == source_name(s)) return s;
    }
    raise(ErrorKind::UnknownSource, "unknown source tag: " + std::string(name));
}

const char* source_name(Source source) {
    switch (source) {
        case Source::Calendar: return "Calendar";
        case Source::Alarm: return "Alarm";
        case Source::Photos: return "Photos";
        case Source::Note: return "Note";
        case Source::Documents: return "Documents";
        case Source::Phone: return "Phone";
        case Source::Contacts: return "Contacts";
    }
    return "?";
}

ValueType parse_value_type(std::string_view name) {
    if (name == "text") return ValueType::Text;
    if (name == "integer") return ValueType::Integer;
    if (name == "timestamp") return ValueType::Timestamp;
    if (name == "date") return ValueType::Date;
    if (name == "duration") return ValueType::Duration;
    if (name == "geo") return ValueType::Geo;
    if (name == "phone") return ValueType::Phone;
    raise(ErrorKind::MalformedRecord, "unknown value type: " + std::string(name));
}

const char* value_type_name(ValueType type) {
    switch (type) {
        case ValueType::Text: return "text";
        case ValueType::Integer: return "integer";
        case ValueType::Timestamp: return "timestamp";
        case ValueType::Date: return "date";
        case ValueType::Duration: return "duration";
        case ValueType::Geo: return "geo";
        case ValueType::Phone: return "phone";
    }
    return "?";
}

SchemaRegistry SchemaRegistry::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open schema registry: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

SchemaRegistry SchemaRegistry::from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::MalformedRecord, std::string("registry is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) raise(ErrorKind::MalformedRecord, "registry root must be an object");

    SchemaRegistry reg;
    for (const auto& [source_tag, table] : doc.items()) {
        Source source = parse_source(source_tag);
        if (!table.is_object())
            raise(ErrorKind::MalformedRecord, "registry entry for " + source_tag +
                                                  " must be an object");
        for (const auto& [key, spec] : table.items()) {
            std::string norm_key = to_lower(trim(key));
            if (norm_key.empty())
                raise(ErrorKind::MalformedRecord, "empty metadata key in registry");
            FieldRule rule;
            if (!spec.is_object())
                raise(ErrorKind::MalformedRecord, "rule for key '" + key + "' must be an object");
            if (spec.contains("type")) rule.type = parse_value_type(spec["type"].get<std::string>());
            if (spec.contains("required")) rule.required = spec["required"].get<bool>();
            if (!spec.contains("predicate"))
                raise(ErrorKind::MalformedRecord, "rule for key '" + key + "' needs a predicate");
            rule.predicate = spec["predicate"].get<std::string>();
            if (rule.predicate.empty())
                raise(ErrorKind::MalformedRecord, "empty predicate for key '" + key + "'");
            std::string cast = spec.value("cast", std::string("literal"));
            if (cast == "literal") {
                rule.cast = CastKind::Literal;
            } else if (cast == "timestamp") {
                rule.cast = CastKind::TimestampLiteral;
            } else if (starts_with(cast, "entity:") && cast.size() > 7) {
                rule.cast = CastKind::Entity;
                rule.entity_tag = cast.substr(7);
            } else {
                raise(ErrorKind::MalformedRecord, "bad cast spec '" + cast + "' for key '" + key +
                                                      "'");
            }
            reg.rules_[static_cast<std::size_t>(source)][norm_key] = std::move(rule);
        }
    }
    return reg;
}

bool SchemaRegistry::has_rule(Source source, const std::string& key) const {
    const auto& table = rules_[static_cast<std::size_t>(source)];
    return table.find(key) != table.end();
}

const FieldRule& SchemaRegistry::rule(Source source, const std::string& key) const {
    const auto& table = rules_[static_cast<std::size_t>(source)];
    auto it = table.find(key);
    if (it == table.end())
        raise(ErrorKind::UnmappedKey, std::string("no rule for key '") + key + "' under source " +
                                          source_name(source));
    return it->second;
}

const std::map<std::string, FieldRule>& SchemaRegistry::rules(Source source) const {
    return rules_[static_cast<std::size_t>(source)];
}

std::vector<std::string> SchemaRegistry::required_keys(Source source) const {
    std::vector<std::string> keys;
    for (const auto& [key, rule] : rules_[static_cast<std::size_t>(source)]) {
        if (rule.required) keys.push_back(key);
    }
    return keys;
}

}  // namespace epistwin
