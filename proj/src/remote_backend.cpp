#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/model.hpp"

#include <httplib.h>

#include <regex>
#include <thread>

namespace evojudge {

namespace {

nlohmann::json json_schema_for(std::string_view type) {
    if (type.substr(0, 6) == "array<") {
        return {{"type", "array"}, {"items", json_schema_for(type.substr(6, type.size() - 7))}};
    }
    return {{"type", std::string(type)}};
}

std::string type_from_json_schema(const nlohmann::json& s) {
    const auto t = s.at("type").get<std::string>();
    if (t == "array") return "array<" + type_from_json_schema(s.at("items")) + ">";
    return t;
}

ImageRef image_from_data_uri(const std::string& uri) {
    static const std::regex re(R"(^data:([^;,]+);base64,(.*)$)");
    std::smatch m;
    if (!std::regex_match(uri, m, re)) throw ValidationError("image_url is not a base64 data URI");
    return ImageRef{{}, base64_decode(m[2].str()), m[1].str()};
}

} // namespace

nlohmann::json wire_body(const ModelRequest& request, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json content = nlohmann::json::array();
        for (const auto& p : m.parts) {
            if (p.text) {
                content.push_back({{"type", "text"}, {"text", *p.text}});
                continue;
            }
            if (!p.image->is_inline()) throw ValidationError("remote requests need inline images: " + p.image->path);
            content.push_back({{"type", "image_url"},
                               {"image_url", {{"url", "data:" + p.image->media_type + ";base64," +
                                                          base64_encode(p.image->bytes)}}}});
        }
        messages.push_back({{"role", m.role}, {"content", std::move(content)}});
    }
    nlohmann::json body{{"model", model},
                        {"messages", std::move(messages)},
                        {"temperature", request.decode.temperature},
                        {"max_tokens", request.decode.max_tokens},
                        {"metadata", {{"role_hint", to_string(request.role_hint)}}}};
    if (request.decode.seed) body["seed"] = *request.decode.seed;
    if (request.response_schema) {
        nlohmann::json props = nlohmann::json::object();
        nlohmann::json required = nlohmann::json::array();
        for (const auto& f : *request.response_schema) {
            props[f.name] = json_schema_for(f.type);
            required.push_back(f.name);
        }
        body["response_format"] = {
            {"type", "json_schema"},
            {"json_schema",
             {{"name", "response"},
              {"schema", {{"type", "object"}, {"properties", props}, {"required", required}}},
              {"field_order", required}}}};
    }
    return body;
}

ModelRequest request_from_wire(const nlohmann::json& body) {
    ModelRequest r;
    r.role_hint = role_hint_from_string(body.at("metadata").at("role_hint").get<std::string>());
    for (const auto& m : body.at("messages")) {
        Message msg;
        msg.role = m.at("role").get<std::string>();
        for (const auto& c : m.at("content")) {
            if (c.at("type") == "text") {
                msg.parts.push_back(MessagePart::of_text(c.at("text").get<std::string>()));
            } else {
                msg.parts.push_back(MessagePart::of_image(image_from_data_uri(c.at("image_url").at("url"))));
            }
        }
        r.messages.push_back(std::move(msg));
    }
    r.decode.temperature = body.at("temperature").get<double>();
    r.decode.max_tokens = body.at("max_tokens").get<int>();
    if (body.contains("seed")) r.decode.seed = body["seed"].get<std::int64_t>();
    if (body.contains("response_format")) {
        const auto& js = body["response_format"].at("json_schema");
        ResponseSchema schema;
        for (const auto& name : js.at("field_order")) {
            const auto n = name.get<std::string>();
            schema.push_back({n, type_from_json_schema(js.at("schema").at("properties").at(n))});
        }
        r.response_schema = std::move(schema);
    }
    return r;
}

RemoteBackend::RemoteBackend(RemoteConfig config, std::size_t max_in_flight)
    : Backend(max_in_flight), config_(std::move(config)) {}

ModelResponse RemoteBackend::do_complete(const ModelRequest& request) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url_re)) throw ValidationError("malformed endpoint " + config_.endpoint);
    const std::string base = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/v1/chat/completions";
    const auto body = wire_body(request, config_.model).dump();

    httplib::Client client(base);
    const auto timeout = std::chrono::duration<double>(config_.timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    int last_status = 0;
    int delay_ms = config_.backoff_ms;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            last_status = 0;
        } else if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            last_status = res->status;
        } else if (res->status >= 400) {
            throw BackendError("request rejected with status " + std::to_string(res->status) + ": " +
                                   res->body.substr(0, 200),
                               attempt, res->status);
        } else {
            const auto reply = nlohmann::json::parse(res->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
                throw BackendError("malformed completion body", attempt, res->status);
            }
            ModelResponse out;
            const auto& content = reply["choices"][0]["message"]["content"];
            out.text = content.is_string() ? content.get<std::string>() : content.dump();
            if (reply.contains("usage")) {
                out.usage.input_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
                out.usage.output_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
            }
            out.backend_id = id();
            return out;
        }
        if (attempt < config_.max_attempts) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
    }
    throw BackendError(last_error + " after " + std::to_string(config_.max_attempts) + " attempts",
                       config_.max_attempts, last_status);
}

} // namespace evojudge
