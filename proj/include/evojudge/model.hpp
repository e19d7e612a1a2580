#pragma once

// Model calls: request/response types and the backends that answer them.
//
// Every backend goes through Backend::complete, which validates the request,
// bounds the number of calls in flight and checks structured output against
// the requested schema. There is no entry point that changes a model.

#include "evojudge/image.hpp"
#include "evojudge/schema.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace evojudge {

enum class RoleHint { Orchestrator, Subagent, ToolQuery };

std::string_view to_string(RoleHint role) noexcept;
RoleHint role_hint_from_string(std::string_view s);

struct MessagePart {
    std::optional<std::string> text;
    std::optional<ImageRef> image;

    static MessagePart of_text(std::string t) { return MessagePart{std::move(t), std::nullopt}; }
    static MessagePart of_image(ImageRef img) { return MessagePart{std::nullopt, std::move(img)}; }
};

struct Message {
    std::string role;  // system | user | assistant
    std::vector<MessagePart> parts;
};

struct DecodeParams {
    double temperature = 0.0;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;
};

struct ModelRequest {
    RoleHint role_hint = RoleHint::Subagent;
    std::vector<Message> messages;
    std::optional<ResponseSchema> response_schema;
    DecodeParams decode;

    // Throws ValidationError.
    void validate() const;
    // All text parts joined with newlines, in message order.
    [[nodiscard]] std::string all_text() const;
    [[nodiscard]] std::vector<const ImageRef*> images() const;
};

struct Usage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

struct ModelResponse {
    std::string text;
    std::optional<nlohmann::json> structured;
    Usage usage;
    std::string backend_id;
};

// Canonical JSON of a request. Images are represented by media type, byte
// length and SHA-256, so the form is small and still content-addressed.
// Object keys are sorted, so the dump does not depend on construction order.
nlohmann::json canonical_json(const ModelRequest& request);
// SHA-256 of canonical_json(request).dump().
std::string request_digest(const ModelRequest& request);

nlohmann::json response_to_json(const ModelResponse& response);
ModelResponse response_from_json(const nlohmann::json& j);

class Backend {
public:
    explicit Backend(std::size_t max_in_flight = 8);
    virtual ~Backend() = default;
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    // Throws ValidationError (bad request), BackendError, UnscriptedRequestError,
    // StructuredOutputError (output does not match response_schema).
    ModelResponse complete(const ModelRequest& request);

    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual bool multimodal() const { return true; }

protected:
    virtual ModelResponse do_complete(const ModelRequest& request) = 0;

private:
    std::counting_semaphore<1024> slots_;
};

// ---------------------------------------------------------------------------
// Remote: chat-completions style HTTP endpoint.

struct RemoteConfig {
    std::string endpoint;  // e.g. https://host/v1/chat/completions
    std::string api_key;
    std::string model;
    double timeout_s = 120.0;
    int max_attempts = 3;
    int backoff_ms = 500;  // doubled after each failed attempt
    bool multimodal = true;
};

// Request body sent on the wire. request_from_wire inverts it.
nlohmann::json wire_body(const ModelRequest& request, const std::string& model);
ModelRequest request_from_wire(const nlohmann::json& body);

class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config, std::size_t max_in_flight = 8);
    [[nodiscard]] std::string id() const override { return "remote:" + config_.model; }
    [[nodiscard]] bool multimodal() const override { return config_.multimodal; }

protected:
    ModelResponse do_complete(const ModelRequest& request) override;

private:
    RemoteConfig config_;
};

// ---------------------------------------------------------------------------
// Transcripts: JSONL of {digest, request, response}.

struct TranscriptEntry {
    std::string digest;
    nlohmann::json request;
    ModelResponse response;
};

class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(const std::filesystem::path& transcript, std::size_t max_in_flight = 8);
    explicit ScriptedBackend(std::vector<TranscriptEntry> entries, std::size_t max_in_flight = 8);

    [[nodiscard]] std::string id() const override { return "scripted"; }
    [[nodiscard]] std::size_t size() const noexcept { return responses_.size(); }
    // True when the transcript ends with a partial-file marker.
    [[nodiscard]] bool partial() const noexcept { return partial_; }

protected:
    ModelResponse do_complete(const ModelRequest& request) override;

private:
    std::map<std::string, ModelResponse> responses_;
    bool partial_ = false;
};

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path, bool* partial = nullptr);

class TranscriptSink {
public:
    virtual ~TranscriptSink() = default;
    // Throws on write failure.
    virtual void append(const std::string& line) = 0;
    // Best effort; called once after a failed append.
    virtual void mark_partial(const std::string& reason) noexcept = 0;
};

class FileTranscriptSink : public TranscriptSink {
public:
    explicit FileTranscriptSink(std::filesystem::path path, bool truncate = true);
    void append(const std::string& line) override;
    void mark_partial(const std::string& reason) noexcept override;

private:
    std::filesystem::path path_;
};

// Forwards to `inner` and appends every exchange to `sink`; a request whose
// digest was already written is not written again. After a write failure
// the session is aborted: the sink gets a partial marker and every later
// call throws TranscriptError.
class RecordingBackend : public Backend {
public:
    RecordingBackend(Backend& inner, std::shared_ptr<TranscriptSink> sink, std::size_t max_in_flight = 64);
    [[nodiscard]] std::string id() const override { return inner_.id(); }
    [[nodiscard]] bool multimodal() const override { return inner_.multimodal(); }

protected:
    ModelResponse do_complete(const ModelRequest& request) override;

private:
    Backend& inner_;
    std::shared_ptr<TranscriptSink> sink_;
    std::mutex mutex_;
    std::set<std::string> written_;
    bool aborted_ = false;
};

// ---------------------------------------------------------------------------
// Configuration

struct ScriptedConfig {
    std::string transcript;
};

struct OracleConfig {
    std::map<std::string, double> weights;  // per attribute family; empty = defaults
    std::uint64_t noise_seed = 7;
    double exploration = 0.25;
};

struct BackendConfig {
    std::variant<RemoteConfig, ScriptedConfig, OracleConfig> settings;
    std::size_t max_in_flight = 8;

    [[nodiscard]] std::string kind() const;
};

// Reads {"kind": "remote"|"scripted"|"synthetic_oracle", ...}. Fields of other
// kinds are rejected. Relative transcript paths resolve against `base_dir`.
BackendConfig backend_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json backend_config_to_json(const BackendConfig& config);

// EVOJUDGE_ENDPOINT, EVOJUDGE_API_KEY, EVOJUDGE_MODEL, EVOJUDGE_TRANSCRIPT and
// EVOJUDGE_ORACLE_SEED override the matching field of the active kind.
void apply_env_overrides(BackendConfig& config);

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

} // namespace evojudge
