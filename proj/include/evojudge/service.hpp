#pragma once

// HTTP reward service. Scores one candidate edit per request against a fixed
// library snapshot and keeps recent reasoning chains for retrieval.
//
//   POST /v1/reward          {source_image, instruction, candidate, library_version?}
//   POST /v1/reward/batch    {items: [...]} -> {results: [...]}, request order
//   GET  /v1/judgment/{id}   cached chain
//   GET  /v1/health
//   GET  /v1/library         entry summaries of the served version
//
// Images are base64 strings, data URIs, http(s) URLs, or objects
// {"base64": ...} / {"url": ...}.

#include "evojudge/evolution.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace evojudge {

// Bounded least-recently-used map from judgment id to chain JSON.
class JudgmentCache {
public:
    explicit JudgmentCache(std::size_t capacity);
    void put(const std::string& id, nlohmann::json value);
    std::optional<nlohmann::json> get(const std::string& id);
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }

private:
    using Item = std::pair<std::string, nlohmann::json>;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<Item> order_;  // most recent first
    std::unordered_map<std::string, std::list<Item>::iterator> index_;
};

struct ServiceConfig {
    std::size_t cache_capacity = 1024;
    std::size_t max_image_bytes = 20u << 20;
    double fetch_timeout_s = 10.0;
    std::size_t batch_workers = 8;
    int retry_after_s = 5;
    DecodeParams decode{0.0, 2048, 0};
};

struct HttpReply {
    int status = 200;
    nlohmann::json body;
    std::optional<int> retry_after;
};

class RewardService {
public:
    // `store` must outlive the service; only versions already stored are served.
    RewardService(const LibraryStore& store, std::string served_version, Backends backends, ServiceConfig config = {});
    ~RewardService();

    HttpReply reward(const std::string& body);
    HttpReply reward_batch(const std::string& body);
    HttpReply judgment(const std::string& id);
    HttpReply health() const;
    HttpReply library() const;

    // Binds and serves on a background thread. Port 0 picks a free port.
    // Returns the bound port; throws Error when binding fails.
    int start(const std::string& host, int port);
    // Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    [[nodiscard]] const std::string& served_version() const noexcept { return served_.version; }
    [[nodiscard]] const JudgmentCache& cache() const noexcept { return cache_; }

private:
    struct Server;
    HttpReply score_item(const nlohmann::json& item);
    ImageRef decode_image(const nlohmann::json& value, const std::string& field) const;
    void install_routes();

    const LibraryStore& store_;
    LibraryState served_;
    Backends backends_;
    ServiceConfig config_;
    JudgmentCache cache_;
    std::unique_ptr<Server> server_;
};

// Splits "host:port"; a bare port binds 127.0.0.1. Throws ValidationError.
std::pair<std::string, int> parse_bind(const std::string& bind);

} // namespace evojudge
