#include "epistwin/gateway.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "epistwin/util.hpp"

namespace epistwin {

namespace {

std::atomic<std::uint64_t> g_network_calls{0};

std::optional<std::string> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string role_env_fragment(GatewayRole role) {
    std::string name = gateway_role_name(role);
    for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

// Pulls the body of a bracket-delimited prompt section: the lines after a
// line equal to `marker`, up to the next line that opens a new section.
std::string extract_section(const std::string& prompt, const std::string& marker) {
    std::istringstream in(prompt);
    std::string line;
    bool collecting = false;
    std::vector<std::string> body;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (collecting) {
            if (!t.empty() && t.front() == '[' && t.back() == ']') break;
            body.push_back(line);
        } else if (t == marker) {
            collecting = true;
        }
    }
    std::string joined;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i) joined.push_back('\n');
        joined += body[i];
    }
    return trim(joined);
}

std::size_t token_overlap(const std::vector<std::string>& a,
                          const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    std::size_t n = 0;
    for (const auto& t : sa)
        if (sb.count(t)) ++n;
    return n;
}

}  // namespace

const char* gateway_role_name(GatewayRole role) {
    switch (role) {
        case GatewayRole::Extractor: return "extractor";
        case GatewayRole::Captioner: return "captioner";
        case GatewayRole::Summarizer: return "summarizer";
        case GatewayRole::Generator: return "generator";
        case GatewayRole::Verifier: return "verifier";
        case GatewayRole::VisionQa: return "vision_qa";
        case GatewayRole::Judge: return "judge";
    }
    return "generator";
}

GatewayRole parse_gateway_role(const std::string& name) {
    for (GatewayRole role : kAllRoles)
        if (name == gateway_role_name(role)) return role;
    raise(ErrorKind::Usage, "unknown gateway role '" + name + "'");
}

std::string GatewayRequest::digest() const {
    std::ostringstream canon;
    char temp[64];
    std::snprintf(temp, sizeof(temp), "%.17g", params.temperature);
    canon << gateway_role_name(role) << '\x1f' << params.model << '\x1f' << temp
          << '\x1f' << params.seed << '\x1f' << params.max_tokens << '\x1f'
          << prompt;
    for (const auto& path : attachments) {
        auto bytes = read_file_bytes(path);
        if (!bytes)
            raise(ErrorKind::Io, "cannot read attachment '" + path + "'");
        canon << '\x1f' << to_hex64(fnv1a64(*bytes));
    }
    return to_hex64(fnv1a64(canon.str()));
}

std::uint64_t gateway_network_calls() { return g_network_calls.load(); }
void reset_gateway_network_calls() { g_network_calls.store(0); }

// ---------------------------------------------------------------------------
// Prompt templates

namespace {

const char* kExtractionTemplate =
    "You convert one record from a personal {source} app into knowledge "
    "triples.\n"
    "\n"
    "Record content:\n"
    "{content}\n"
    "\n"
    "Extract factual triples about the people, places, organizations, and "
    "events the content mentions. Output one triple per line in the form\n"
    "HEAD<TAB>RELATION<TAB>TAIL\n"
    "where <TAB> is a single tab character. Relations must be snake_case "
    "verbs or verb phrases. Do not invent facts that are not in the content. "
    "After the final triple, output a line containing exactly:\n"
    "###END###\n";

const char* kCaptionTemplate =
    "Describe the attached image from the user's {source} library in one or "
    "two factual sentences. Name visible people, places, and objects, and "
    "quote any readable text. Output only the caption.\n";

const char* kSummaryTemplate =
    "Summarize the following group of related facts from one person's "
    "knowledge graph. Keep every concrete name, place, and date; omit "
    "nothing that would be needed to answer questions about these facts.\n"
    "\n"
    "Facts:\n"
    "{content}\n"
    "\n"
    "Output only the summary text.\n";

const char* kAnswerTemplate =
    "You answer a question about the user's personal data. Rely only on the "
    "context lines below; never invent facts.\n"
    "\n"
    "Context:\n"
    "{context}\n"
    "\n"
    "Question: {query}\n"
    "\n"
    "If the context does not contain the information needed, reply with "
    "exactly this line and nothing else:\n"
    "insufficient grounded context\n"
    "Otherwise answer in one short sentence grounded in the context.\n";

const char* kVerifyTemplate =
    "You check whether the evidence gathered so far suffices to answer the "
    "question.\n"
    "\n"
    "Question: {query}\n"
    "\n"
    "Evidence:\n"
    "{history}\n"
    "\n"
    "Reply with exactly one word: SUFFICIENT if the evidence answers the "
    "question, INSUFFICIENT otherwise.\n";

const char* kVqaTemplate =
    "Answer the question using only what is visible in the attached "
    "image.\n"
    "\n"
    "[Question]\n"
    "{query}\n"
    "\n"
    "[Instructions]\n"
    "Answer in one short phrase. If the image does not show the answer, "
    "reply \"not visible\".\n";

const char* kJudgeTemplate =
    "You are an impartial judge grading a candidate answer against a "
    "reference answer for a question about one person's data. Reason step "
    "by step about factual agreement before scoring.\n"
    "\n"
    "Rubric:\n"
    "5: factually matches the reference; wording may differ\n"
    "4: same core fact with a minor omission or drift\n"
    "3: partially correct; misses or muddles part of the fact\n"
    "2: mostly incorrect with a trace of relevant content\n"
    "1: irrelevant to or contradicting the reference\n"
    "\n"
    "[Question]\n"
    "{query}\n"
    "\n"
    "[Reference Answer]\n"
    "{target}\n"
    "\n"
    "[Candidate Answer]\n"
    "{candidate}\n"
    "\n"
    "[Instructions]\n"
    "Write your reasoning, then output the final line exactly as:\n"
    "[RESULT] <score>\n";

}  // namespace

PromptSet PromptSet::builtin() {
    PromptSet p;
    p.extraction_ = kExtractionTemplate;
    p.caption_ = kCaptionTemplate;
    p.summary_ = kSummaryTemplate;
    p.answer_ = kAnswerTemplate;
    p.verify_ = kVerifyTemplate;
    p.vqa_ = kVqaTemplate;
    p.judge_ = kJudgeTemplate;
    return p;
}

PromptSet PromptSet::from_dir(const std::string& dir) {
    PromptSet p = builtin();
    auto load = [&dir](const char* name, std::string& slot) {
        auto bytes = read_file_bytes(dir + "/" + name);
        if (bytes) slot = *bytes;
    };
    load("extraction.txt", p.extraction_);
    load("caption.txt", p.caption_);
    load("summary.txt", p.summary_);
    load("answer.txt", p.answer_);
    load("verify.txt", p.verify_);
    load("vqa.txt", p.vqa_);
    load("judge.txt", p.judge_);
    return p;
}

std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& slots) {
    std::string out = tmpl;
    for (const auto& [key, value] : slots) {
        std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transcript envelope

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (in.gcount() == 0) return false;
    if (in.gcount() != 4)
        raise(ErrorKind::CorruptDump, "truncated transcript record length");
    v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
        (static_cast<std::uint32_t>(bytes[2]) << 16) |
        (static_cast<std::uint32_t>(bytes[3]) << 24);
    return true;
}

}  // namespace

void append_transcript_record(const std::string& path, const std::string& digest,
                              const std::string& response) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) raise(ErrorKind::Io, "cannot open transcript '" + path + "' for append");
    write_u32(out, static_cast<std::uint32_t>(digest.size()));
    out.write(digest.data(), static_cast<std::streamsize>(digest.size()));
    write_u32(out, static_cast<std::uint32_t>(response.size()));
    out.write(response.data(), static_cast<std::streamsize>(response.size()));
    out.flush();
    if (!out) raise(ErrorKind::Io, "failed writing transcript '" + path + "'");
}

std::map<std::string, std::string> load_transcript(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::Io, "cannot open transcript '" + path + "'");
    std::map<std::string, std::string> records;
    std::uint32_t len = 0;
    while (read_u32(in, len)) {
        std::string digest(len, '\0');
        in.read(digest.data(), static_cast<std::streamsize>(len));
        if (static_cast<std::uint32_t>(in.gcount()) != len)
            raise(ErrorKind::CorruptDump, "truncated transcript digest");
        if (!read_u32(in, len))
            raise(ErrorKind::CorruptDump, "transcript record missing response");
        std::string response(len, '\0');
        in.read(response.data(), static_cast<std::streamsize>(len));
        if (static_cast<std::uint32_t>(in.gcount()) != len)
            raise(ErrorKind::CorruptDump, "truncated transcript response");
        records[digest] = response;
    }
    return records;
}

// ---------------------------------------------------------------------------
// Stub backend

StubGateway StubGateway::from_file(const std::string& path) {
    StubGateway gw;
    gw.scripts_ = load_transcript(path);
    return gw;
}

void StubGateway::add_script(const std::string& digest, const std::string& response) {
    scripts_[digest] = response;
}

namespace {

std::string stub_caption(const GatewayRequest& request) {
    if (request.attachments.empty())
        raise(ErrorKind::GatewayError, "captioner request carries no attachment");
    auto bytes = read_file_bytes(request.attachments.front());
    if (!bytes)
        raise(ErrorKind::GatewayError,
              "cannot read attachment '" + request.attachments.front() + "'");
    return trim(*bytes);
}

// Sidecar protocol: "<image path>.vqa" holds either plain answer text or
// question<TAB>answer lines matched against the prompt's [Question] section.
std::string stub_vision(const GatewayRequest& request) {
    if (request.attachments.empty())
        raise(ErrorKind::GatewayError, "vision request carries no attachment");
    const std::string sidecar = request.attachments.front() + ".vqa";
    auto bytes = read_file_bytes(sidecar);
    if (!bytes)
        raise(ErrorKind::GatewayError, "no vision sidecar '" + sidecar + "'");
    std::string question = extract_section(request.prompt, "[Question]");
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream in(*bytes);
    std::string line;
    while (std::getline(in, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        pairs.emplace_back(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
    if (pairs.empty()) return trim(*bytes);
    for (const auto& [q, a] : pairs)
        if (normalize_label(q) == normalize_label(question)) return a;
    auto want = tokenize(question);
    std::size_t best = 0, best_overlap = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::size_t overlap = token_overlap(tokenize(pairs[i].first), want);
        if (overlap > best_overlap) {
            best_overlap = overlap;
            best = i;
        }
    }
    return pairs[best].second;
}

std::string stub_verify(const GatewayRequest& request) {
    if (request.prompt.find("insufficient grounded context") != std::string::npos)
        return "INSUFFICIENT";
    return "SUFFICIENT";
}

// Tiered token-overlap rubric plus a per-model nudge, so several stub judge
// models produce correlated but not identical rating columns.
std::string stub_judge(const GatewayRequest& request) {
    std::string question = extract_section(request.prompt, "[Question]");
    std::string reference = extract_section(request.prompt, "[Reference Answer]");
    std::string candidate = extract_section(request.prompt, "[Candidate Answer]");
    int score;
    if (normalize_label(reference) == normalize_label(candidate)) {
        score = 5;
    } else {
        auto rt = tokenize(reference);
        auto ct = tokenize(candidate);
        std::set<std::string> uni(rt.begin(), rt.end());
        uni.insert(ct.begin(), ct.end());
        std::size_t inter = token_overlap(rt, ct);
        double jaccard = uni.empty() ? 0.0 : static_cast<double>(inter) / uni.size();
        if (jaccard >= 0.75)
            score = 4;
        else if (jaccard >= 0.4)
            score = 3;
        else if (inter > 0)
            score = 2;
        else
            score = 1;
    }
    std::uint64_t lean = fnv1a64(request.params.model + "\x1f" + question);
    if (score >= 2 && lean % 5 == 0) --score;
    std::ostringstream out;
    out << "Compared the candidate against the reference for factual "
           "agreement on the question.\n[RESULT] "
        << score;
    return out.str();
}

}  // namespace

std::string StubGateway::complete(const GatewayRequest& request) {
    auto hit = scripts_.find(request.digest());
    if (hit != scripts_.end()) return hit->second;
    switch (request.role) {
        case GatewayRole::Captioner: return stub_caption(request);
        case GatewayRole::VisionQa: return stub_vision(request);
        case GatewayRole::Verifier: return stub_verify(request);
        case GatewayRole::Judge: return stub_judge(request);
        default:
            raise(ErrorKind::GatewayError,
                  std::string("no scripted response for ") +
                      gateway_role_name(request.role) + " request " +
                      request.digest());
    }
}

// ---------------------------------------------------------------------------
// Replay backend

ReplayGateway::ReplayGateway(const std::string& transcript_path)
    : responses_(load_transcript(transcript_path)) {}

std::string ReplayGateway::complete(const GatewayRequest& request) {
    const std::string digest = request.digest();
    auto hit = responses_.find(digest);
    if (hit == responses_.end())
        raise(ErrorKind::ReplayMiss, "transcript has no response for digest " + digest);
    return hit->second;
}

// ---------------------------------------------------------------------------
// Live backend

LiveGateway::LiveGateway() {
    for (GatewayRole role : kAllRoles) {
        std::string fragment = role_env_fragment(role);
        const char* url = std::getenv(("EPISTWIN_ENDPOINT_" + fragment).c_str());
        if (!url || !*url) continue;
        const char* key = std::getenv(("EPISTWIN_KEY_" + fragment).c_str());
        endpoints_[static_cast<std::size_t>(role)] =
            Endpoint{url, key ? key : ""};
    }
}

void LiveGateway::set_endpoint(GatewayRole role, Endpoint endpoint) {
    endpoints_[static_cast<std::size_t>(role)] = std::move(endpoint);
}

namespace {

const char* mime_for_path(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : to_lower(path.substr(dot + 1));
    if (ext == "png") return "image/png";
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "gif") return "image/gif";
    if (ext == "webp") return "image/webp";
    return "application/octet-stream";
}

}  // namespace

std::string LiveGateway::complete(const GatewayRequest& request) {
    const auto& slot = endpoints_[static_cast<std::size_t>(request.role)];
    if (!slot)
        raise(ErrorKind::GatewayError,
              std::string("no endpoint configured for role ") +
                  gateway_role_name(request.role));

    nlohmann::json message;
    message["role"] = "user";
    if (request.attachments.empty()) {
        message["content"] = request.prompt;
    } else {
        nlohmann::json parts = nlohmann::json::array();
        parts.push_back({{"type", "text"}, {"text", request.prompt}});
        for (const auto& path : request.attachments) {
            auto bytes = read_file_bytes(path);
            if (!bytes) raise(ErrorKind::Io, "cannot read attachment '" + path + "'");
            std::string uri = std::string("data:") + mime_for_path(path) +
                              ";base64," + base64_encode(*bytes);
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", uri}}}});
        }
        message["content"] = std::move(parts);
    }
    nlohmann::json body = {
        {"model", request.params.model},
        {"messages", nlohmann::json::array({message})},
        {"temperature", request.params.temperature},
        {"seed", request.params.seed},
        {"max_tokens", request.params.max_tokens},
    };

    std::string url = slot->url;
    std::string base = url, path = "/v1/chat/completions";
    auto scheme_end = url.find("://");
    auto path_start =
        url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start != std::string::npos) {
        base = url.substr(0, path_start);
        path = url.substr(path_start);
    }

    httplib::Client client(base);
    client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
    httplib::Headers headers;
    if (!slot->key.empty())
        headers.emplace("Authorization", "Bearer " + slot->key);

    httplib::Result result;
    const int max_attempts = 3;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
        ++g_network_calls;
        result = client.Post(path, headers, body.dump(), "application/json");
        if (result) break;
    }
    if (!result)
        raise(ErrorKind::Timeout, "transport failure after retries: " +
                                      httplib::to_string(result.error()));
    if (result->status != 200)
        raise(ErrorKind::HttpStatus,
              "endpoint returned status " + std::to_string(result->status));

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::GatewayError,
              std::string("unparseable endpoint response: ") + e.what());
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
        parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message") ||
        !parsed["choices"][0]["message"].contains("content") ||
        !parsed["choices"][0]["message"]["content"].is_string())
        raise(ErrorKind::GatewayError, "endpoint response lacks message content");
    return parsed["choices"][0]["message"]["content"].get<std::string>();
}

// ---------------------------------------------------------------------------
// Recording backend

RecordingGateway::RecordingGateway(std::unique_ptr<ModelGateway> inner,
                                   const std::string& transcript_path)
    : inner_(std::move(inner)), path_(transcript_path) {
    if (!inner_) raise(ErrorKind::Usage, "recording gateway needs an inner backend");
}

std::string RecordingGateway::complete(const GatewayRequest& request) {
    std::string response = inner_->complete(request);
    std::lock_guard<std::mutex> lock(write_mutex_);
    append_transcript_record(path_, request.digest(), response);
    return response;
}

// ---------------------------------------------------------------------------
// Role wrappers

std::string vision_answer(ModelGateway& gateway, const PromptSet& prompts,
                          const std::string& query, const std::string& image_path,
                          const GatewayParams& params) {
    if (!std::filesystem::exists(image_path) || !read_file_bytes(image_path))
        raise(ErrorKind::ImageUnreadable, "cannot read image '" + image_path + "'");
    GatewayRequest request;
    request.role = GatewayRole::VisionQa;
    request.prompt = render_template(prompts.vqa(), {{"query", query}});
    request.attachments = {image_path};
    request.params = params;
    return trim(gateway.complete(request));
}

JudgeResult judge_answer(ModelGateway& gateway, const PromptSet& prompts,
                         const std::string& query, const std::string& target,
                         const std::string& candidate, const GatewayParams& params) {
    GatewayRequest request;
    request.role = GatewayRole::Judge;
    request.prompt = render_template(
        prompts.judge(),
        {{"query", query}, {"target", target}, {"candidate", candidate}});
    request.params = params;
    return parse_judge_response(gateway.complete(request));
}

JudgeResult parse_judge_response(const std::string& response) {
    std::istringstream in(response);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    std::ptrdiff_t marker = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(lines.size()) - 1; i >= 0; --i) {
        if (starts_with(trim(lines[static_cast<std::size_t>(i)]), "[RESULT]")) {
            marker = i;
            break;
        }
    }
    if (marker < 0)
        raise(ErrorKind::UnparseableScore, "judge response has no [RESULT] line");
    std::string tail =
        trim(trim(lines[static_cast<std::size_t>(marker)]).substr(8));
    if (tail.empty() ||
        tail.find_first_not_of("0123456789-") != std::string::npos)
        raise(ErrorKind::UnparseableScore,
              "judge score '" + tail + "' is not an integer");
    long value = std::strtol(tail.c_str(), nullptr, 10);
    if (value < 1 || value > 5)
        raise(ErrorKind::ScoreOutOfRange,
              "judge score " + std::to_string(value) + " outside 1..5");
    JudgeResult result;
    result.score = static_cast<int>(value);
    std::ostringstream rationale;
    for (std::ptrdiff_t i = 0; i < marker; ++i) {
        if (i) rationale << '\n';
        rationale << lines[static_cast<std::size_t>(i)];
    }
    result.rationale = trim(rationale.str());
    return result;
}

}  // namespace epistwin
