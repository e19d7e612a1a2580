#include "evojudge/model.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/synthetic.hpp"

#include <algorithm>
#include <cstdlib>

namespace evojudge {

std::string_view to_string(RoleHint role) noexcept {
    switch (role) {
    case RoleHint::Orchestrator: return "orchestrator";
    case RoleHint::Subagent: return "subagent";
    case RoleHint::ToolQuery: return "tool_query";
    }
    return "subagent";
}

RoleHint role_hint_from_string(std::string_view s) {
    if (s == "orchestrator") return RoleHint::Orchestrator;
    if (s == "subagent") return RoleHint::Subagent;
    if (s == "tool_query") return RoleHint::ToolQuery;
    throw ValidationError("unknown role hint '" + std::string(s) + "'");
}

void ModelRequest::validate() const {
    bool has_user = false;
    for (const auto& m : messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw ValidationError("unknown message role '" + m.role + "'");
        }
        has_user = has_user || m.role == "user";
        for (const auto& p : m.parts) {
            if (p.text.has_value() == p.image.has_value()) {
                throw ValidationError("a message part holds exactly one of text or image");
            }
            if (p.image) {
                if (p.image->is_inline() && p.image->media_type.empty()) {
                    throw ValidationError("inline image part without media type");
                }
                if (!p.image->is_inline() && p.image->path.empty()) {
                    throw ValidationError("image part with neither bytes nor path");
                }
            }
        }
    }
    if (!has_user) throw ValidationError("request has no user message");
    if (decode.temperature < 0.0) throw ValidationError("temperature must be >= 0");
    if (decode.max_tokens <= 0) throw ValidationError("max_tokens must be positive");
    if (response_schema) {
        for (const auto& f : *response_schema) {
            if (!is_valid_schema_type(f.type)) throw ValidationError("invalid schema type " + f.type);
        }
    }
}

std::string ModelRequest::all_text() const {
    std::string out;
    for (const auto& m : messages) {
        for (const auto& p : m.parts) {
            if (p.text) {
                out += *p.text;
                out += '\n';
            }
        }
    }
    return out;
}

std::vector<const ImageRef*> ModelRequest::images() const {
    std::vector<const ImageRef*> out;
    for (const auto& m : messages) {
        for (const auto& p : m.parts) {
            if (p.image) out.push_back(&*p.image);
        }
    }
    return out;
}

nlohmann::json canonical_json(const ModelRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json parts = nlohmann::json::array();
        for (const auto& p : m.parts) {
            if (p.text) {
                parts.push_back({{"type", "text"}, {"text", *p.text}});
            } else if (p.image->is_inline()) {
                parts.push_back({{"type", "image"},
                                 {"media_type", p.image->media_type},
                                 {"bytes", p.image->bytes.size()},
                                 {"sha256", sha256_hex(p.image->bytes)}});
            } else {
                parts.push_back({{"type", "image"}, {"path", p.image->path}});
            }
        }
        messages.push_back({{"role", m.role}, {"parts", std::move(parts)}});
    }
    nlohmann::json decode{{"temperature", request.decode.temperature}, {"max_tokens", request.decode.max_tokens}};
    decode["seed"] = request.decode.seed ? nlohmann::json(*request.decode.seed) : nlohmann::json(nullptr);
    return {{"role_hint", to_string(request.role_hint)},
            {"messages", std::move(messages)},
            {"response_schema",
             request.response_schema ? schema_to_json(*request.response_schema) : nlohmann::json(nullptr)},
            {"decode", std::move(decode)}};
}

std::string request_digest(const ModelRequest& request) { return sha256_hex(canonical_json(request).dump()); }

nlohmann::json response_to_json(const ModelResponse& r) {
    return {{"text", r.text},
            {"structured", r.structured ? *r.structured : nlohmann::json(nullptr)},
            {"usage", {{"input_tokens", r.usage.input_tokens}, {"output_tokens", r.usage.output_tokens}}},
            {"backend_id", r.backend_id}};
}

ModelResponse response_from_json(const nlohmann::json& j) {
    ModelResponse r;
    r.text = j.at("text").get<std::string>();
    if (j.contains("structured") && !j["structured"].is_null()) r.structured = j["structured"];
    if (j.contains("usage")) {
        r.usage.input_tokens = j["usage"].value("input_tokens", std::int64_t{0});
        r.usage.output_tokens = j["usage"].value("output_tokens", std::int64_t{0});
    }
    r.backend_id = j.value("backend_id", "");
    return r;
}

Backend::Backend(std::size_t max_in_flight)
    : slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(max_in_flight, 1, 1024))) {}

ModelResponse Backend::complete(const ModelRequest& request) {
    request.validate();
    slots_.acquire();
    ModelResponse response;
    try {
        response = do_complete(request);
    } catch (...) {
        slots_.release();
        throw;
    }
    slots_.release();
    if (request.response_schema) {
        try {
            nlohmann::json value = response.structured ? *response.structured : extract_json_object(response.text);
            validate_structured(value, *request.response_schema);
            response.structured = std::move(value);
        } catch (const ValidationError& e) {
            throw StructuredOutputError(e.what(), response.text);
        }
    }
    return response;
}

// ---------------------------------------------------------------------------
// Configuration

std::string BackendConfig::kind() const {
    switch (settings.index()) {
    case 0: return "remote";
    case 1: return "scripted";
    default: return "synthetic_oracle";
    }
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError("backend config key '" + key + "' does not belong to kind '" +
                                  j.value("kind", "") + "'");
        }
    }
}

} // namespace

BackendConfig backend_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValidationError("backend config must be an object");
    BackendConfig c;
    const auto kind = j.value("kind", "");
    c.max_in_flight = j.value("max_in_flight", std::size_t{8});
    if (kind == "remote") {
        reject_unknown_keys(j, {"kind", "max_in_flight", "endpoint", "api_key", "model", "timeout_s", "max_attempts",
                                "backoff_ms", "multimodal"});
        RemoteConfig r;
        r.endpoint = j.value("endpoint", "");
        r.api_key = j.value("api_key", "");
        r.model = j.value("model", "");
        r.timeout_s = j.value("timeout_s", r.timeout_s);
        r.max_attempts = j.value("max_attempts", r.max_attempts);
        r.backoff_ms = j.value("backoff_ms", r.backoff_ms);
        r.multimodal = j.value("multimodal", r.multimodal);
        if (r.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
        c.settings = r;
    } else if (kind == "scripted") {
        reject_unknown_keys(j, {"kind", "max_in_flight", "transcript"});
        ScriptedConfig s;
        std::filesystem::path p = j.at("transcript").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        s.transcript = p.string();
        c.settings = s;
    } else if (kind == "synthetic_oracle") {
        reject_unknown_keys(j, {"kind", "max_in_flight", "weights", "noise_seed", "exploration"});
        OracleConfig o;
        o.weights = j.value("weights", std::map<std::string, double>{});
        for (const auto& [family, w] : o.weights) {
            if (!synthetic::is_family(family)) throw ValidationError("unknown attribute family '" + family + "'");
            if (!(w > 0.0)) throw ValidationError("family weights must be positive");
        }
        o.noise_seed = j.value("noise_seed", o.noise_seed);
        o.exploration = j.value("exploration", o.exploration);
        c.settings = o;
    } else {
        throw ValidationError("backend kind must be remote, scripted or synthetic_oracle");
    }
    return c;
}

nlohmann::json backend_config_to_json(const BackendConfig& c) {
    nlohmann::json j{{"kind", c.kind()}, {"max_in_flight", c.max_in_flight}};
    if (const auto* r = std::get_if<RemoteConfig>(&c.settings)) {
        j["endpoint"] = r->endpoint;
        j["model"] = r->model;
        j["timeout_s"] = r->timeout_s;
        j["max_attempts"] = r->max_attempts;
        j["backoff_ms"] = r->backoff_ms;
        j["multimodal"] = r->multimodal;
        // the credential is never written back out
    } else if (const auto* s = std::get_if<ScriptedConfig>(&c.settings)) {
        j["transcript"] = s->transcript;
    } else {
        const auto& o = std::get<OracleConfig>(c.settings);
        j["weights"] = o.weights;
        j["noise_seed"] = o.noise_seed;
        j["exploration"] = o.exploration;
    }
    return j;
}

void apply_env_overrides(BackendConfig& config) {
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        return v && *v ? std::optional<std::string>(v) : std::nullopt;
    };
    if (auto* r = std::get_if<RemoteConfig>(&config.settings)) {
        if (auto v = env("EVOJUDGE_ENDPOINT")) r->endpoint = *v;
        if (auto v = env("EVOJUDGE_API_KEY")) r->api_key = *v;
        if (auto v = env("EVOJUDGE_MODEL")) r->model = *v;
    } else if (auto* s = std::get_if<ScriptedConfig>(&config.settings)) {
        if (auto v = env("EVOJUDGE_TRANSCRIPT")) s->transcript = *v;
    } else if (auto* o = std::get_if<OracleConfig>(&config.settings)) {
        if (auto v = env("EVOJUDGE_ORACLE_SEED")) o->noise_seed = std::stoull(*v);
    }
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    if (const auto* r = std::get_if<RemoteConfig>(&config.settings)) {
        if (r->endpoint.empty()) throw ValidationError("remote backend needs an endpoint");
        return std::make_unique<RemoteBackend>(*r, config.max_in_flight);
    }
    if (const auto* s = std::get_if<ScriptedConfig>(&config.settings)) {
        return std::make_unique<ScriptedBackend>(s->transcript, config.max_in_flight);
    }
    return std::make_unique<synthetic::SyntheticOracleBackend>(std::get<OracleConfig>(config.settings), config.max_in_flight);
}

} // namespace evojudge
