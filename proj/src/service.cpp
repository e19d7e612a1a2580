#include "evojudge/service.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/judge.hpp"
#include "evojudge/orchestrator.hpp"

#include <httplib.h>

#include <atomic>
#include <regex>
#include <set>
#include <thread>

namespace evojudge {

// ---------------------------------------------------------------------------
// Cache

JudgmentCache::JudgmentCache(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("judgment cache capacity must be positive");
}

void JudgmentCache::put(const std::string& id, nlohmann::json value) {
    std::lock_guard lock(mutex_);
    if (const auto it = index_.find(id); it != index_.end()) {
        it->second->second = std::move(value);
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.emplace_front(id, std::move(value));
    index_[id] = order_.begin();
    if (order_.size() > capacity_) {
        index_.erase(order_.back().first);
        order_.pop_back();
    }
}

std::optional<nlohmann::json> JudgmentCache::get(const std::string& id) {
    std::lock_guard lock(mutex_);
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
}

std::size_t JudgmentCache::size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
}

// ---------------------------------------------------------------------------
// Request decoding

namespace {

// A request problem tied to one input field.
class FieldError : public ValidationError {
public:
    FieldError(std::string field, const std::string& message)
        : ValidationError(field + ": " + message), field_(std::move(field)) {}
    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

HttpReply error_reply(int status, std::string_view code, const std::string& message,
                      const std::optional<std::string>& field = std::nullopt) {
    nlohmann::json err{{"code", code}, {"message", message}};
    if (field) err["field"] = *field;
    return {status, {{"error", std::move(err)}}, std::nullopt};
}

std::string fetch_url(const std::string& url, std::size_t cap, double timeout_s) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw ValidationError("malformed URL");
    httplib::Client client(m[1].str());
    const auto t = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(timeout_s));
    client.set_connection_timeout(t);
    client.set_read_timeout(t);
    client.set_follow_location(true);
    std::string data;
    bool too_big = false;
    const auto res = client.Get(m[2].matched ? m[2].str() : "/", [&](const char* bytes, std::size_t n) {
        if (data.size() + n > cap) {
            too_big = true;
            return false;
        }
        data.append(bytes, n);
        return true;
    });
    if (too_big) throw ValidationError("image exceeds " + std::to_string(cap) + " bytes");
    if (!res) throw ValidationError("fetch failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ValidationError("fetch returned HTTP " + std::to_string(res->status));
    return data;
}

const std::set<std::string>& request_fields() {
    static const std::set<std::string> f{"source_image", "instruction", "candidate", "library_version"};
    return f;
}

} // namespace

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    const std::string host = colon == std::string::npos ? "127.0.0.1" : bind.substr(0, colon);
    const std::string port = colon == std::string::npos ? bind : bind.substr(colon + 1);
    int p = -1;
    try {
        std::size_t used = 0;
        p = std::stoi(port, &used);
        if (used != port.size()) p = -1;
    } catch (const std::exception&) {
    }
    if (p < 0 || p > 65535 || host.empty()) throw ValidationError("bind address must be host:port, got '" + bind + "'");
    return {host, p};
}

struct RewardService::Server {
    httplib::Server http;
    std::thread thread;
};

RewardService::RewardService(const LibraryStore& store, std::string served_version, Backends backends,
                             ServiceConfig config)
    : store_(store),
      served_(store.checkout(store.resolve(served_version))),
      backends_(backends),
      config_(config),
      cache_(config.cache_capacity),
      server_(std::make_unique<Server>()) {
    if (!backends_.orchestrator || !backends_.subagent) throw ValidationError("the service needs both backends");
    install_routes();
}

RewardService::~RewardService() { stop(); }

ImageRef RewardService::decode_image(const nlohmann::json& value, const std::string& field) const {
    std::string bytes;
    try {
        std::string text;
        bool is_url = false;
        if (value.is_string()) {
            text = value.get<std::string>();
            is_url = text.rfind("http://", 0) == 0 || text.rfind("https://", 0) == 0;
        } else if (value.is_object() && value.size() == 1 && value.contains("url") && value["url"].is_string()) {
            text = value["url"].get<std::string>();
            is_url = true;
        } else if (value.is_object() && value.size() == 1 && value.contains("base64") && value["base64"].is_string()) {
            text = value["base64"].get<std::string>();
        } else {
            throw ValidationError("expected a base64 string, a data URI or a URL");
        }
        if (is_url) {
            bytes = fetch_url(text, config_.max_image_bytes, config_.fetch_timeout_s);
        } else {
            if (text.rfind("data:", 0) == 0) {
                const auto comma = text.find(',');
                if (comma == std::string::npos || text.substr(0, comma).find(";base64") == std::string::npos) {
                    throw ValidationError("data URI must be base64 encoded");
                }
                text = text.substr(comma + 1);
            }
            if (text.size() / 4 * 3 > config_.max_image_bytes + 3) {
                throw ValidationError("image exceeds " + std::to_string(config_.max_image_bytes) + " bytes");
            }
            bytes = base64_decode(text);
        }
    } catch (const ValidationError& e) {
        throw FieldError(field, e.what());
    }
    if (bytes.size() > config_.max_image_bytes) {
        throw FieldError(field, "image exceeds " + std::to_string(config_.max_image_bytes) + " bytes");
    }
    const auto type = sniff_media_type(bytes);
    if (!type) throw FieldError(field, "not a recognised image");
    return ImageRef::from_bytes(std::move(bytes), *type);
}

HttpReply RewardService::score_item(const nlohmann::json& item) {
    try {
        if (!item.is_object()) throw FieldError("body", "expected a JSON object");
        for (const auto& [key, value] : item.items()) {
            if (!request_fields().contains(key)) throw FieldError(key, "unknown field");
        }
        for (const char* f : {"source_image", "instruction", "candidate"}) {
            if (!item.contains(f)) throw FieldError(f, "missing");
        }
        if (!item["instruction"].is_string() || item["instruction"].get<std::string>().empty()) {
            throw FieldError("instruction", "expected a non-empty string");
        }
        LibraryState state = served_;
        if (item.contains("library_version")) {
            if (!item["library_version"].is_string()) throw FieldError("library_version", "expected a string");
            try {
                state = store_.checkout(store_.resolve(item["library_version"].get<std::string>()));
            } catch (const NotFoundError& e) {
                throw FieldError("library_version", e.what());
            }
        }
        Demonstration demo;
        demo.instruction = item["instruction"].get<std::string>();
        demo.source_image = decode_image(item["source_image"], "source_image");
        demo.candidates = {decode_image(item["candidate"], "candidate")};

        const auto id = sha256_hex(state.version + "\n" + demo.instruction + "\n" + sha256_hex(demo.source_image.bytes) +
                                   "\n" + sha256_hex(demo.candidates[0].bytes))
                            .substr(0, 24);
        demo.id = "reward-" + id;

        RouteOptions ro;
        ro.decode = config_.decode;
        ro.caption_backend = backends_.subagent;
        const auto routing = route(demo, state, *backends_.orchestrator, ro);
        JudgeOptions jo;
        jo.decode = config_.decode;
        jo.tool_backend = backends_.tool;
        const auto j = judge(demo, assemble_context(routing, state, demo.instruction), *backends_.subagent, jo);
        const int score = j.scores.at(0);

        cache_.put(id, {{"judgment_id", id},
                        {"library_version", state.version},
                        {"instruction", demo.instruction},
                        {"score", score},
                        {"routing", to_json(routing)},
                        {"chain", j.chain}});
        return {200, {{"score", score}, {"judgment_id", id}, {"library_version", state.version}}, std::nullopt};
    } catch (const FieldError& e) {
        return error_reply(400, "validation", e.what(), e.field());
    } catch (const ValidationError& e) {
        return error_reply(400, "validation", e.what());
    } catch (const UnscriptedRequestError& e) {
        auto r = error_reply(502, e.code(), e.what());
        r.retry_after = config_.retry_after_s;
        return r;
    } catch (const Error& e) {
        const auto code = e.code();
        if (code == "judgment" || code == "backend" || code == "structured_output") {
            auto r = error_reply(502, code, e.what());
            r.retry_after = config_.retry_after_s;
            return r;
        }
        return error_reply(500, code, e.what());
    }
}

HttpReply RewardService::reward(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return error_reply(400, "validation", "body is not valid JSON", "body");
    return score_item(j);
}

HttpReply RewardService::reward_batch(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) return error_reply(400, "validation", "body is not valid JSON", "body");
    if (!j.is_object() || !j.contains("items") || !j["items"].is_array() || j.size() != 1) {
        return error_reply(400, "validation", "expected {\"items\": [...]}", "items");
    }
    const auto& items = j["items"];
    std::vector<HttpReply> replies(items.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) replies[i] = score_item(items[i]);
    };
    std::vector<std::thread> threads;
    const auto n = std::min(config_.batch_workers, items.size());
    for (std::size_t t = 1; t < n; ++t) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();

    nlohmann::json results = nlohmann::json::array();
    for (auto& r : replies) {
        if (r.status == 200) {
            results.push_back(std::move(r.body));
        } else {
            auto slot = std::move(r.body);
            slot["status"] = r.status;
            results.push_back(std::move(slot));
        }
    }
    return {200, {{"results", std::move(results)}}, std::nullopt};
}

HttpReply RewardService::judgment(const std::string& id) {
    if (auto j = cache_.get(id)) return {200, std::move(*j), std::nullopt};
    return error_reply(404, "not_found", "no cached judgment '" + id + "'");
}

HttpReply RewardService::health() const {
    return {200,
            {{"status", "ok"},
             {"library_version", served_.version},
             {"backend", backends_.subagent->id()},
             {"cached_judgments", cache_.size()}},
            std::nullopt};
}

HttpReply RewardService::library() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& s : entry_summaries(served_)) {
        entries.push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"description", s.description}});
    }
    return {200, {{"library_version", served_.version}, {"entries", std::move(entries)}}, std::nullopt};
}

void RewardService::install_routes() {
    auto send = [](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        if (r.retry_after) res.set_header("Retry-After", std::to_string(*r.retry_after));
        res.set_content(r.body.dump(), "application/json");
    };
    auto& http = server_->http;
    http.Post("/v1/reward", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, reward(req.body)); });
    http.Post("/v1/reward/batch",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, reward_batch(req.body)); });
    http.Get(R"(/v1/judgment/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, judgment(req.matches[1].str()));
    });
    http.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    http.Get("/v1/library", [this, send](const httplib::Request&, httplib::Response& res) { send(res, library()); });
    http.set_error_handler([send](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) send(res, error_reply(404, "not_found", "no route for " + req.path));
    });
    http.set_payload_max_length(config_.max_image_bytes * 3);
}

int RewardService::start(const std::string& host, int port) {
    auto& http = server_->http;
    const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
    http.wait_until_ready();
    return bound;
}

void RewardService::listen(const std::string& host, int port) {
    if (!server_->http.listen(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
}

void RewardService::stop() {
    if (!server_) return;
    server_->http.stop();
    if (server_->thread.joinable()) server_->thread.join();
}

} // namespace evojudge
