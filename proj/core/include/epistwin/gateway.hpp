#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "epistwin/errors.hpp"

namespace epistwin {

// Every neural backend call in the engine goes through this seam. A request
// names the role it speaks for, so stub behavior and live endpoint selection
// can differ per role while callers stay oblivious.
enum class GatewayRole {
    Extractor,
    Captioner,
    Summarizer,
    Generator,
    Verifier,
    VisionQa,
    Judge,
};

inline constexpr std::array<GatewayRole, 7> kAllRoles = {
    GatewayRole::Extractor,  GatewayRole::Captioner, GatewayRole::Summarizer,
    GatewayRole::Generator,  GatewayRole::Verifier,  GatewayRole::VisionQa,
    GatewayRole::Judge,
};

const char* gateway_role_name(GatewayRole role);
GatewayRole parse_gateway_role(const std::string& name);

struct GatewayParams {
    std::string model = "default";
    double temperature = 0.0;
    std::uint64_t seed = 0;
    int max_tokens = 1024;
};

struct GatewayRequest {
    GatewayRole role = GatewayRole::Generator;
    std::string prompt;
    // Paths to files attached to the request (images for vision_qa, the
    // captioner). Content, not path, feeds the digest.
    std::vector<std::string> attachments;
    GatewayParams params;

    // Canonical fingerprint of everything that shapes the response. Stable
    // across runs and machines; keys transcripts and scripted stubs.
    std::string digest() const;
};

// Number of HTTP round-trip attempts made process-wide. Stub and replay
// backends never touch it, which is what the tests pin down.
std::uint64_t gateway_network_calls();
void reset_gateway_network_calls();

class ModelGateway {
public:
    virtual ~ModelGateway() = default;
    virtual std::string complete(const GatewayRequest& request) = 0;
    virtual const char* mode_name() const = 0;
};

// ---------------------------------------------------------------------------
// Prompt templates

// One template per role, with {placeholder} slots substituted at call sites.
// builtin() is the canonical set; a directory of <name>.txt files may
// override individual entries.
class PromptSet {
public:
    static PromptSet builtin();
    static PromptSet from_dir(const std::string& dir);

    const std::string& extraction() const { return extraction_; }
    const std::string& caption() const { return caption_; }
    const std::string& summary() const { return summary_; }
    const std::string& answer() const { return answer_; }
    const std::string& verify() const { return verify_; }
    const std::string& vqa() const { return vqa_; }
    const std::string& judge() const { return judge_; }

private:
    std::string extraction_;
    std::string caption_;
    std::string summary_;
    std::string answer_;
    std::string verify_;
    std::string vqa_;
    std::string judge_;
};

// Replaces every "{key}" occurrence; unknown placeholders are left intact so
// a template typo surfaces in the rendered prompt rather than vanishing.
std::string render_template(const std::string& tmpl,
                            const std::map<std::string, std::string>& slots);

// ---------------------------------------------------------------------------
// Backends

// Deterministic offline backend. Exact responses can be scripted by request
// digest; anything unscripted falls back to a per-role behavior that derives
// the response from the prompt (and sidecar files for vision), so full
// pipeline runs need no network and no transcript.
class StubGateway : public ModelGateway {
public:
    StubGateway() = default;

    // Script file: length-prefixed digest/response records, same envelope as
    // a transcript.
    static StubGateway from_file(const std::string& path);

    void add_script(const std::string& digest, const std::string& response);
    std::string complete(const GatewayRequest& request) override;
    const char* mode_name() const override { return "stub"; }

private:
    std::map<std::string, std::string> scripts_;
};

// Serves recorded responses only. A digest absent from the transcript is an
// error, never a silent live call.
class ReplayGateway : public ModelGateway {
public:
    explicit ReplayGateway(const std::string& transcript_path);
    std::string complete(const GatewayRequest& request) override;
    const char* mode_name() const override { return "replay"; }

private:
    std::map<std::string, std::string> responses_;
};

// OpenAI-compatible chat-completions client. Endpoint and credential per
// role come from EPISTWIN_ENDPOINT_<ROLE> / EPISTWIN_KEY_<ROLE> unless set
// explicitly.
class LiveGateway : public ModelGateway {
public:
    struct Endpoint {
        std::string url;
        std::string key;
    };

    LiveGateway();

    void set_endpoint(GatewayRole role, Endpoint endpoint);
    void set_timeout_ms(int ms) { timeout_ms_ = ms; }
    void set_backoff_ms(int ms) { backoff_ms_ = ms; }

    std::string complete(const GatewayRequest& request) override;
    const char* mode_name() const override { return "live"; }

private:
    std::array<std::optional<Endpoint>, kAllRoles.size()> endpoints_;
    int timeout_ms_ = 30000;
    int backoff_ms_ = 250;
};

// Wraps any backend and appends each digest/response pair to a transcript
// file as it happens. Appends are serialized; the inner backend sets the
// concurrency rules for the calls themselves.
class RecordingGateway : public ModelGateway {
public:
    RecordingGateway(std::unique_ptr<ModelGateway> inner,
                     const std::string& transcript_path);
    std::string complete(const GatewayRequest& request) override;
    const char* mode_name() const override { return "record"; }

private:
    std::unique_ptr<ModelGateway> inner_;
    std::string path_;
    std::mutex write_mutex_;
};

// Transcript envelope: repeated records of
//   u32 digest-length, digest bytes, u32 response-length, response bytes
// with both lengths little-endian.
void append_transcript_record(const std::string& path, const std::string& digest,
                              const std::string& response);
std::map<std::string, std::string> load_transcript(const std::string& path);

// ---------------------------------------------------------------------------
// Role wrappers

// Asks the vision role about one image. The image must be a readable file
// before any backend work happens.
std::string vision_answer(ModelGateway& gateway, const PromptSet& prompts,
                          const std::string& query, const std::string& image_path,
                          const GatewayParams& params = {});

struct JudgeResult {
    std::string rationale;
    int score = 0;
};

// Scores a candidate answer against the reference on the 1..5 rubric. The
// response must end with a `[RESULT] <int>` line; everything before it is
// kept as the rationale.
JudgeResult judge_answer(ModelGateway& gateway, const PromptSet& prompts,
                         const std::string& query, const std::string& target,
                         const std::string& candidate,
                         const GatewayParams& params = {});

JudgeResult parse_judge_response(const std::string& response);

}  // namespace epistwin
