#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/service.hpp"
#include "evojudge/synthetic.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

namespace evojudge {
namespace {

using synthetic::SyntheticImage;
using synthetic::Target;

const std::filesystem::path kAssets = EVOJUDGE_ASSET_DIR;

LibraryStore fixture_store(std::string* version) {
    LibraryStore store;
    std::vector<LibraryAction> actions;
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(kAssets / "fixtures" / "library")) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) actions.push_back(LibraryAction::create(parse_entry(read_file(f))));
    const auto state = store.put(commit(empty_library(), actions, 1, "fixture"));
    *version = state.version;
    return store;
}

const std::vector<Target> kTargets{{"text", "WELCOME HOME"}, {"presence", "lantern"}, {"color", "green"}};

SyntheticImage candidate(const std::string& id, bool text, bool presence, bool color) {
    return {id, {}, false, {{"text", text ? "WELCOME HOME" : "WELCOME HOEM"},
                            {"presence", presence ? "lantern" : "none"},
                            {"color", color ? "green" : "red"}}};
}

nlohmann::json request(const SyntheticImage& cand) {
    return {{"source_image", base64_encode(SyntheticImage{"img-src", {}, false, {}}.to_bytes())},
            {"instruction", synthetic::render_instruction(kTargets)},
            {"candidate", base64_encode(cand.to_bytes())}};
}

// Integer form of the hidden scorer with the default family weights.
int expected_score(bool text, bool presence, bool color) {
    const int hit = 3 * text + 3 * presence + 1 * color;
    const int total = 7;
    return 1 + (8 * hit + total) / (2 * total);
}

struct Fixture {
    std::string version;
    LibraryStore store = fixture_store(&version);
    synthetic::SyntheticOracleBackend orchestrator;
    synthetic::SyntheticOracleBackend subagent;
};

TEST(Service, ScoreMatchesOracleRecomputation) {
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr});
    for (int mask = 0; mask < 8; ++mask) {
        const bool t = mask & 1;
        const bool p = mask & 2;
        const bool c = mask & 4;
        const auto r = svc.reward(request(candidate("img-" + std::to_string(mask), t, p, c)).dump());
        ASSERT_EQ(r.status, 200) << r.body;
        ASSERT_TRUE(r.body["score"].is_number_integer());
        EXPECT_EQ(r.body["score"].get<int>(), expected_score(t, p, c)) << mask;
        EXPECT_EQ(r.body["library_version"], f.version);
        EXPECT_EQ(r.body.size(), 3u);
    }
    EXPECT_EQ(expected_score(true, true, false), 4);
}

TEST(Service, HttpEndpoints) {
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr});
    const int port = svc.start("127.0.0.1", 0);
    httplib::Client http("127.0.0.1", port);

    const auto body = request(candidate("img-a", true, true, false)).dump();
    const auto a = http.Post("/v1/reward", body, "application/json");
    const auto b = http.Post("/v1/reward", body, "application/json");
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->status, 200);
    EXPECT_EQ(a->body, b->body);
    const auto reply = nlohmann::json::parse(a->body);
    EXPECT_EQ(reply["score"], 4);

    const auto chain = http.Get("/v1/judgment/" + reply["judgment_id"].get<std::string>());
    ASSERT_TRUE(chain);
    EXPECT_EQ(chain->status, 200);
    const auto cj = nlohmann::json::parse(chain->body);
    EXPECT_EQ(cj["score"], 4);
    EXPECT_TRUE(cj["chain"].contains("raw_scores"));
    EXPECT_TRUE(cj.contains("routing"));

    const auto missing = http.Get("/v1/judgment/nope");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);

    const auto health = http.Get("/v1/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(nlohmann::json::parse(health->body)["status"], "ok");

    const auto lib = http.Get("/v1/library");
    ASSERT_TRUE(lib);
    const auto lj = nlohmann::json::parse(lib->body);
    EXPECT_EQ(lj["entries"].size(), 7u);
    EXPECT_EQ(lj["library_version"], f.version);
    svc.stop();
}

TEST(Service, BatchPreservesOrder) {
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr});
    nlohmann::json items = nlohmann::json::array();
    std::vector<int> expected;
    for (int i = 0; i < 16; ++i) {
        const int mask = (i * 5) % 8;
        items.push_back(request(candidate("img-b" + std::to_string(i), mask & 1, mask & 2, mask & 4)));
        expected.push_back(expected_score(mask & 1, mask & 2, mask & 4));
    }
    items[9]["candidate"] = "%%%";
    expected[9] = -1;
    const auto r = svc.reward_batch(nlohmann::json{{"items", items}}.dump());
    ASSERT_EQ(r.status, 200);
    ASSERT_EQ(r.body["results"].size(), 16u);
    for (int i = 0; i < 16; ++i) {
        const auto& slot = r.body["results"][i];
        if (expected[i] < 0) {
            EXPECT_EQ(slot["status"], 400);
            EXPECT_EQ(slot["error"]["field"], "candidate");
            continue;
        }
        EXPECT_EQ(slot["score"], expected[i]) << i;
        EXPECT_EQ(slot, svc.reward(items[i].dump()).body) << i;
    }
    EXPECT_EQ(svc.reward_batch(R"({"things": []})").status, 400);
}

TEST(Service, ValidationErrorsNameTheField) {
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr});
    auto check = [&](nlohmann::json body, const std::string& field) {
        const auto r = svc.reward(body.dump());
        EXPECT_EQ(r.status, 400) << field;
        EXPECT_EQ(r.body["error"]["field"], field);
    };
    auto base = request(candidate("img-v", true, true, true));
    auto b = base;
    b["candidate"] = base64_encode("definitely not an image");
    check(b, "candidate");
    b = base;
    b["source_image"] = "@@not base64@@";
    check(b, "source_image");
    b = base;
    b.erase("instruction");
    check(b, "instruction");
    b = base;
    b["temperature"] = 0.5;
    check(b, "temperature");
    b = base;
    b["library_version"] = "ffffffffffff";
    check(b, "library_version");
    b = base;
    b["candidate"] = nlohmann::json{{"base64", base["candidate"]}};
    EXPECT_EQ(svc.reward(b.dump()).status, 200);
    b["candidate"] = "data:application/octet-stream;base64," + base["candidate"].get<std::string>();
    EXPECT_EQ(svc.reward(b.dump()).status, 200);
    EXPECT_EQ(svc.reward("{not json").body["error"]["field"], "body");
}

TEST(Service, LibraryVersionSelectsAnotherStoredState) {
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr});
    auto b = request(candidate("img-r", true, false, false));
    b["library_version"] = "root";
    const auto r = svc.reward(b.dump());
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["library_version"], f.store.root_version());
}

TEST(Service, BackendFailureIs502WithRetryAfter) {
    class Down : public Backend {
    public:
        std::string id() const override { return "down"; }

    protected:
        ModelResponse do_complete(const ModelRequest&) override { throw BackendError("unreachable", 3, 503); }
    } down;
    Fixture f;
    RewardService svc(f.store, f.version, {&f.orchestrator, &down, nullptr});
    const int port = svc.start("127.0.0.1", 0);
    httplib::Client http("127.0.0.1", port);
    const auto r = http.Post("/v1/reward", request(candidate("img-d", true, true, true)).dump(), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 502);
    EXPECT_EQ(r->get_header_value("Retry-After"), "5");
    EXPECT_EQ(nlohmann::json::parse(r->body)["error"]["code"], "judgment");
}

TEST(Service, UnscriptedRequestIs502) {
    Fixture f;
    ScriptedBackend empty(std::vector<TranscriptEntry>{});
    RewardService svc(f.store, f.version, {&empty, &empty, nullptr});
    const auto r = svc.reward(request(candidate("img-u", true, true, true)).dump());
    EXPECT_EQ(r.status, 502);
    EXPECT_TRUE(r.retry_after.has_value());
}

TEST(Service, JudgmentCacheIsBoundedLru) {
    Fixture f;
    ServiceConfig config;
    config.cache_capacity = 2;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr}, config);
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) {
        ids.push_back(svc.reward(request(candidate("img-l" + std::to_string(i), i & 1, true, true)).dump())
                          .body["judgment_id"]
                          .get<std::string>());
        if (i == 1) EXPECT_EQ(svc.judgment(ids[0]).status, 200);  // touch the oldest
    }
    EXPECT_EQ(svc.cache().size(), 2u);
    EXPECT_EQ(svc.judgment(ids[0]).status, 200);
    EXPECT_EQ(svc.judgment(ids[1]).status, 404);
    EXPECT_EQ(svc.judgment(ids[2]).status, 200);
}

TEST(JudgmentCache, LruProperty) {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cap = 1 + rng() % 6;
        JudgmentCache cache(cap);
        std::vector<std::string> model;  // most recent first
        for (int op = 0; op < 200; ++op) {
            const auto key = "k" + std::to_string(rng() % 10);
            auto it = std::find(model.begin(), model.end(), key);
            if (rng() % 2) {
                cache.put(key, op);
                if (it != model.end()) model.erase(it);
                model.insert(model.begin(), key);
                if (model.size() > cap) model.pop_back();
            } else {
                const bool hit = cache.get(key).has_value();
                EXPECT_EQ(hit, it != model.end());
                if (it != model.end()) {
                    model.erase(it);
                    model.insert(model.begin(), key);
                }
            }
            ASSERT_EQ(cache.size(), model.size());
        }
    }
    EXPECT_THROW(JudgmentCache(0), ValidationError);
}

TEST(Service, UrlImagesAreFetchedWithSizeCap) {
    httplib::Server images;
    const auto cand = candidate("img-url", true, true, true).to_bytes();
    images.Get("/cand.json", [&](const httplib::Request&, httplib::Response& res) { res.set_content(cand, "application/json"); });
    images.Get("/big.json", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(cand + std::string(4096, ' '), "application/json");
    });
    const int img_port = images.bind_to_any_port("127.0.0.1");
    std::thread t([&] { images.listen_after_bind(); });
    images.wait_until_ready();

    Fixture f;
    ServiceConfig config;
    config.max_image_bytes = 2048;
    config.fetch_timeout_s = 2;
    RewardService svc(f.store, f.version, {&f.orchestrator, &f.subagent, nullptr}, config);
    const std::string base = "http://127.0.0.1:" + std::to_string(img_port);
    auto b = request(candidate("unused", false, false, false));
    b["candidate"] = base + "/cand.json";
    auto r = svc.reward(b.dump());
    EXPECT_EQ(r.status, 200) << r.body;
    EXPECT_EQ(r.body["score"], 5);
    b["candidate"] = nlohmann::json{{"url", base + "/big.json"}};
    r = svc.reward(b.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], "candidate");
    b["candidate"] = base + "/missing.json";
    EXPECT_EQ(svc.reward(b.dump()).status, 400);
    images.stop();
    t.join();
}

TEST(Service, ParseBind) {
    EXPECT_EQ(parse_bind("0.0.0.0:8080"), (std::pair<std::string, int>{"0.0.0.0", 8080}));
    EXPECT_EQ(parse_bind("9000"), (std::pair<std::string, int>{"127.0.0.1", 9000}));
    EXPECT_THROW(parse_bind("host:port"), ValidationError);
    EXPECT_THROW(parse_bind("host:70000"), ValidationError);
}

} // namespace
} // namespace evojudge
