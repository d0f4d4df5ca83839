#include "epistwin/domain.hpp"

#include "epistwin/errors.hpp"
#include "epistwin/util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace epistwin {

namespace fs = std::filesystem;
using nlohmann::json;

MetadataValue MetadataValue::from_raw(ValueType type, const std::string& raw) {
    MetadataValue v;
    v.type = type;
    v.raw = raw;
    switch (type) {
        case ValueType::Text:
            break;
        case ValueType::Integer: {
            std::string t = trim(raw);
            if (t.empty()) raise(ErrorKind::SchemaViolation, "empty integer value");
            std::size_t pos = (t[0] == '-') ? 1 : 0;
            if (pos == t.size()) raise(ErrorKind::SchemaViolation, "bad integer: " + raw);
            for (std::size_t i = pos; i < t.size(); ++i)
                if (t[i] < '0' || t[i] > '9')
                    raise(ErrorKind::SchemaViolation, "bad integer: " + raw);
            v.integer = std::stoll(t);
            break;
        }
        case ValueType::Timestamp:
            v.ts = Timestamp::parse(trim(raw));
            if (v.ts.date_only)
                raise(ErrorKind::SchemaViolation, "expected a full timestamp, got a date: " + raw);
            break;
        case ValueType::Date:
            v.ts = Timestamp::parse(trim(raw));
            if (!v.ts.date_only)
                raise(ErrorKind::SchemaViolation, "expected a date, got a timestamp: " + raw);
            break;
        case ValueType::Duration:
            v.dur = Duration::parse(trim(raw));
            break;
        case ValueType::Geo:
            v.geo = GeoPoint::parse(raw);
            break;
        case ValueType::Phone:
            if (!valid_phone(trim(raw)))
                raise(ErrorKind::SchemaViolation, "bad phone value: " + raw);
            break;
    }
    return v;
}

std::string MetadataValue::canonical() const {
    switch (type) {
        case ValueType::Text: return raw;
        case ValueType::Integer: return std::to_string(integer);
        case ValueType::Timestamp:
        case ValueType::Date: return ts.render();
        case ValueType::Duration: return dur.render();
        case ValueType::Geo: return geo.render();
        case ValueType::Phone: return trim(raw);
    }
    return raw;
}

const MetadataValue* InformationObject::find(const std::string& key) const {
    for (const auto& entry : metadata)
        if (entry.key == key) return &entry.value;
    return nullptr;
}

std::map<std::string, std::size_t> PersonalKnowledge::counts_by_source() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& io : objects) ++counts[source_name(io.source)];
    return counts;
}

const InformationObject* PersonalKnowledge::find(const std::string& id) const {
    for (const auto& io : objects)
        if (io.id == id) return &io;
    return nullptr;
}

Timestamp default_now() { return Timestamp::parse("2025-09-01T13:00Z"); }

void validate_metadata(Source source, const std::vector<MetadataEntry>& metadata,
                       const SchemaRegistry& registry) {
    for (const auto& entry : metadata) {
        if (!registry.has_rule(source, entry.key))
            raise(ErrorKind::SchemaViolation, std::string("key '") + entry.key +
                                                  "' is not in the schema for " +
                                                  source_name(source));
        const FieldRule& rule = registry.rule(source, entry.key);
        if (rule.type != entry.value.type)
            raise(ErrorKind::SchemaViolation,
                  std::string("key '") + entry.key + "' expects " + value_type_name(rule.type) +
                      ", got " + value_type_name(entry.value.type));
    }
    for (const std::string& key : registry.required_keys(source)) {
        bool present = false;
        for (const auto& entry : metadata)
            if (entry.key == key) present = true;
        if (!present)
            raise(ErrorKind::SchemaViolation, std::string("required key '") + key +
                                                  "' missing for " + source_name(source));
    }
}

namespace {

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot read payload file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string scalar_to_string(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number_integer()) return std::to_string(value.get<int64_t>());
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    raise(ErrorKind::MalformedRecord, "metadata value must be a string or integer");
}

MetadataEntry make_entry(Source source, const std::string& key, const std::string& raw,
                         const SchemaRegistry& registry) {
    std::string norm_key = to_lower(trim(key));
    if (norm_key.empty()) raise(ErrorKind::MalformedRecord, "empty metadata key");
    if (!registry.has_rule(source, norm_key))
        raise(ErrorKind::SchemaViolation, std::string("key '") + norm_key +
                                              "' is not in the schema for " + source_name(source));
    const FieldRule& rule = registry.rule(source, norm_key);
    MetadataEntry entry;
    entry.key = norm_key;
    try {
        entry.value = MetadataValue::from_raw(rule.type, raw);
    } catch (const EtError& e) {
        raise(ErrorKind::SchemaViolation, std::string("key '") + norm_key + "' rejects '" + raw +
                                              "' as " + value_type_name(rule.type) + ": " +
                                              e.message());
    }
    return entry;
}

}  // namespace

InformationObject parse_information_object(const std::string& record,
                                           const SchemaRegistry& registry,
                                           const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(record);
    } catch (const json::exception& e) {
        raise(ErrorKind::MalformedRecord, std::string("record is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) raise(ErrorKind::MalformedRecord, "record must be a JSON object");
    if (!doc.contains("id") || !doc["id"].is_string() || doc["id"].get<std::string>().empty())
        raise(ErrorKind::MalformedRecord, "record needs a non-empty string id");
    if (!doc.contains("source") || !doc["source"].is_string())
        raise(ErrorKind::MalformedRecord, "record needs a source tag");

    InformationObject io;
    io.id = doc["id"].get<std::string>();
    io.source = parse_source(doc["source"].get<std::string>());

    if (doc.contains("metadata")) {
        const json& meta = doc["metadata"];
        if (!meta.is_object()) raise(ErrorKind::MalformedRecord, "metadata must be an object");
        for (const auto& [key, value] : meta.items()) {
            if (value.is_array()) {
                for (const auto& element : value)
                    io.metadata.push_back(
                        make_entry(io.source, key, scalar_to_string(element), registry));
            } else {
                io.metadata.push_back(make_entry(io.source, key, scalar_to_string(value), registry));
            }
        }
    }
    validate_metadata(io.source, io.metadata, registry);

    if (doc.contains("payload") && !doc["payload"].is_null()) {
        const json& pl = doc["payload"];
        if (!pl.is_object()) raise(ErrorKind::MalformedRecord, "payload must be an object");
        std::string kind = pl.value("kind", std::string());
        Payload payload;
        if (kind == "text") {
            payload.kind = PayloadKind::Text;
            if (!pl.contains("text") || !pl["text"].is_string())
                raise(ErrorKind::MalformedRecord, "text payload needs a text field");
            payload.text = pl["text"].get<std::string>();
            payload.digest = to_hex64(fnv1a64(payload.text));
        } else if (kind == "image") {
            payload.kind = PayloadKind::Image;
            if (!pl.contains("path") || !pl["path"].is_string())
                raise(ErrorKind::MalformedRecord, "image payload needs a path field");
            fs::path p = pl["path"].get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
            payload.path = p.string();
            payload.digest = to_hex64(fnv1a64(read_file_bytes(payload.path)));
        } else {
            raise(ErrorKind::MalformedRecord, "payload kind must be text or image");
        }
        if (pl.contains("digest")) {
            std::string declared = pl["digest"].get<std::string>();
            if (declared != payload.digest)
                raise(ErrorKind::MalformedRecord,
                      "payload digest mismatch for " + io.id + ": declared " + declared +
                          ", computed " + payload.digest);
        }
        io.payload = std::move(payload);
    }
    return io;
}

std::string serialize_information_object(const InformationObject& io) {
    json doc;
    doc["id"] = io.id;
    doc["source"] = source_name(io.source);
    json meta = json::object();
    for (const auto& entry : io.metadata) {
        if (meta.contains(entry.key)) {
            if (!meta[entry.key].is_array()) {
                json first = meta[entry.key];
                meta[entry.key] = json::array({first});
            }
            meta[entry.key].push_back(entry.value.raw);
        } else {
            meta[entry.key] = entry.value.raw;
        }
    }
    doc["metadata"] = std::move(meta);
    if (io.payload) {
        json pl;
        if (io.payload->kind == PayloadKind::Text) {
            pl["kind"] = "text";
            pl["text"] = io.payload->text;
        } else {
            pl["kind"] = "image";
            pl["path"] = io.payload->path;
        }
        pl["digest"] = io.payload->digest;
        doc["payload"] = std::move(pl);
    }
    return doc.dump();
}

PersonalKnowledge load_personal_knowledge(const std::string& path, const std::string& owner,
                                          const SchemaRegistry& registry) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open fixture: " + path);
    std::string base_dir = fs::path(path).parent_path().string();

    PersonalKnowledge pk;
    pk.owner = owner;
    pk.now = default_now();

    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::map<std::string, std::size_t> seen_ids;

    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;

        if (!saw_header) {
            saw_header = true;
            json doc;
            try {
                doc = json::parse(stripped);
            } catch (const json::exception& e) {
                raise(ErrorKind::MalformedRecord,
                      "line " + std::to_string(line_no) + ": not valid JSON: " + e.what());
            }
            if (doc.is_object() && !doc.contains("id")) {
                // Header line.
                if (doc.contains("owner")) {
                    std::string header_owner = doc["owner"].get<std::string>();
                    if (!owner.empty() && header_owner != owner)
                        raise(ErrorKind::MalformedRecord,
                              "line " + std::to_string(line_no) + ": fixture owner '" +
                                  header_owner + "' does not match requested owner '" + owner +
                                  "'");
                    pk.owner = header_owner;
                }
                if (doc.contains("t_global"))
                    pk.now = Timestamp::parse(doc["t_global"].get<std::string>());
                if (doc.contains("mode"))
                    pk.benchmark_mode = doc["mode"].get<std::string>() == "benchmark";
                continue;
            }
            // No header; fall through and parse as an object record.
        }

        InformationObject io;
        try {
            io = parse_information_object(stripped, registry, base_dir);
        } catch (const EtError& e) {
            throw EtError(e.kind(), "line " + std::to_string(line_no) + ": " + e.message());
        }
        auto [it, inserted] = seen_ids.emplace(io.id, line_no);
        if (!inserted)
            raise(ErrorKind::DuplicateId, "line " + std::to_string(line_no) + ": id '" + io.id +
                                              "' already used on line " +
                                              std::to_string(it->second));
        if (pk.benchmark_mode) {
            for (const auto& entry : io.metadata) {
                if (entry.value.type == ValueType::Timestamp) {
                    if (!entry.value.ts.has_offset)
                        raise(ErrorKind::SchemaViolation,
                              "line " + std::to_string(line_no) + ": timestamp '" +
                                  entry.value.raw + "' lacks a zone offset");
                    if (!(entry.value.ts.epoch_seconds < pk.now.epoch_seconds))
                        raise(ErrorKind::SchemaViolation,
                              "line " + std::to_string(line_no) + ": timestamp '" +
                                  entry.value.raw + "' is not earlier than the fixture clock");
                } else if (entry.value.type == ValueType::Date) {
                    if (!(entry.value.ts.epoch_seconds < pk.now.epoch_seconds))
                        raise(ErrorKind::SchemaViolation,
                              "line " + std::to_string(line_no) + ": date '" + entry.value.raw +
                                  "' is not earlier than the fixture clock");
                }
            }
        }
        pk.objects.push_back(std::move(io));
    }
    return pk;
}

}  // namespace epistwin
