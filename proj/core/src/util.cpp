#include "epistwin/util.hpp"

#include "epistwin/errors.hpp"

#include <algorithm>
#include <cctype>

namespace epistwin {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedRecord: return "MalformedRecord";
        case ErrorKind::UnknownSource: return "UnknownSource";
        case ErrorKind::SchemaViolation: return "SchemaViolation";
        case ErrorKind::DuplicateId: return "DuplicateId";
        case ErrorKind::InvariantViolation: return "InvariantViolation";
        case ErrorKind::UnknownNode: return "UnknownNode";
        case ErrorKind::UnknownObject: return "UnknownObject";
        case ErrorKind::Io: return "Io";
        case ErrorKind::CorruptDump: return "CorruptDump";
        case ErrorKind::UnmappedKey: return "UnmappedKey";
        case ErrorKind::ExtractionUnavailable: return "ExtractionUnavailable";
        case ErrorKind::EmptyGraph: return "EmptyGraph";
        case ErrorKind::StalePartition: return "StalePartition";
        case ErrorKind::CommunitiesStale: return "CommunitiesStale";
        case ErrorKind::NoVisualEvidence: return "NoVisualEvidence";
        case ErrorKind::PolicyError: return "PolicyError";
        case ErrorKind::GatewayError: return "GatewayError";
        case ErrorKind::Timeout: return "Timeout";
        case ErrorKind::HttpStatus: return "HttpStatus";
        case ErrorKind::ReplayMiss: return "ReplayMiss";
        case ErrorKind::ImageUnreadable: return "ImageUnreadable";
        case ErrorKind::UnparseableScore: return "UnparseableScore";
        case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
        case ErrorKind::UnparseableVerdict: return "UnparseableVerdict";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::DegenerateMarginals: return "DegenerateMarginals";
        case ErrorKind::ZeroVariance: return "ZeroVariance";
        case ErrorKind::DegenerateData: return "DegenerateData";
        case ErrorKind::Usage: return "Usage";
    }
    return "UnknownError";
}

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
    uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string to_hex64(uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

uint64_t derive_seed(uint64_t root_seed, std::string_view label) {
    uint64_t hash = fnv1a64(label);
    return fnv1a64(to_hex64(root_seed), hash);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

std::string normalize_label(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string escape_field(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_field(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (i + 1 >= text.size()) raise(ErrorKind::CorruptDump, "dangling escape in field");
        char next = text[++i];
        switch (next) {
            case '\\': out.push_back('\\'); break;
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            default: raise(ErrorKind::CorruptDump, std::string("bad escape \\") + next);
        }
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        // trim hyphens that ended up at token edges
        std::size_t begin = current.find_first_not_of('-');
        std::size_t end = current.find_last_not_of('-');
        if (begin != std::string::npos) tokens.push_back(current.substr(begin, end - begin + 1));
        current.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '-' && !current.empty()) {
            current.push_back('-');
        } else if (!current.empty()) {
            flush();
        }
    }
    if (!current.empty()) flush();
    return tokens;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(text.substr(start));
            break;
        }
        parts.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

bool starts_with(std::string_view text, std::string_view prefix) {
    return text.size() >= prefix.size() && text.substr(0, prefix.size()) == prefix;
}

std::size_t estimate_tokens(std::string_view text) {
    return (text.size() + 3) / 4;
}

std::string base64_encode(std::string_view bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve(((bytes.size() + 2) / 3) * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                     static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 0x3f]);
        out.push_back(alphabet[(v >> 12) & 0x3f]);
        out.push_back(alphabet[(v >> 6) & 0x3f]);
        out.push_back(alphabet[v & 0x3f]);
        i += 3;
    }
    std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 0x3f]);
        out.push_back(alphabet[(v >> 12) & 0x3f]);
        out.push_back('=');
        out.push_back('=');
    } else if (rest == 2) {
        unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                     (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 0x3f]);
        out.push_back(alphabet[(v >> 12) & 0x3f]);
        out.push_back(alphabet[(v >> 6) & 0x3f]);
        out.push_back('=');
    }
    return out;
}

}  // namespace epistwin
