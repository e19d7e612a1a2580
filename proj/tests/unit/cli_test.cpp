#include "evojudge/cli.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/library.hpp"
#include "evojudge/synthetic.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace evojudge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kAssets = EVOJUDGE_ASSET_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "evojudge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("evojudge-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::trunc);
    f << text;
}

void expect_error_line(const Result& r, const std::string& code) {
    EXPECT_NE(r.code, 0);
    ASSERT_FALSE(r.err.empty());
    EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << r.err;
    const auto j = json::parse(r.err);
    EXPECT_EQ(j["error"]["code"], code) << r.err;
}

} // namespace

TEST(Cli, EvalOnValidationSetMatchesCoverageOracle) {
    // Families the seven fixture entries address, read off their names.
    const std::set<std::string> covered = {"text",  "presence",   "spatial", "count",   "style",
                                           "layout", "background", "realism", "artifact"};
    std::map<std::string, synthetic::DemoSpec> specs;
    for (const auto& g : synthetic::make_dataset(7, 7, synthetic::default_weights())) specs[g.demo.id] = g.spec;
    const auto val = load_demonstrations(kAssets / "synthetic" / "val.jsonl");
    ASSERT_EQ(val.size(), 40u);
    int correct = 0;
    for (const auto& d : val) {
        const auto& s = specs.at(d.id);
        bool ok = !s.ambiguous;
        for (const auto& h : s.hazards) ok = ok && covered.contains(h);
        correct += ok;
    }
    const double expected = correct / 40.0;
    EXPECT_DOUBLE_EQ(expected, 0.625);

    const auto r = cli({"eval", "--library", (kAssets / "fixtures" / "library").string(), "--demos",
                        (kAssets / "synthetic" / "val.jsonl").string(), "--backend", "synthetic_oracle", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["ranking_accuracy"].get<double>(), expected);
    EXPECT_EQ(j["demos"], 40);
    EXPECT_EQ(j["failed"], 0);
    std::size_t bucketed = 0;
    for (const auto& b : j["by_k"]) bucketed += b["count"].get<std::size_t>();
    EXPECT_EQ(bucketed, 40u);

    const auto text = cli({"eval", "--library", (kAssets / "fixtures" / "library").string(), "--demos",
                           (kAssets / "synthetic" / "val.jsonl").string(), "--backend", "synthetic_oracle"});
    ASSERT_EQ(text.code, 0) << text.err;
    EXPECT_NE(text.out.find("all\t40\t0.625\t"), std::string::npos) << text.out;
}

TEST(Cli, LibDiffAfterOneCreateShowsOneAddedEntry) {
    TempDir dir;
    {
        auto store = LibraryStore::open(dir.path / "lib");
        const auto entry = parse_entry(read_file(kAssets / "fixtures" / "library" / "visual-qa-tool.md"));
        const std::vector<LibraryAction> actions{LibraryAction::create(entry)};
        const auto v1 = store.put(commit(store.head(), actions, 1));
        store.rollback(v1.version);
    }
    const auto r = cli({"lib", "diff", "root", "v1", "--library", (dir.path / "lib").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t added = 0;
    std::size_t headers = 0;
    std::istringstream lines(r.out);
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("=== ", 0) == 0) ++headers;
        if (line == "=== added visual-qa-tool") ++added;
    }
    EXPECT_EQ(headers, 1u) << r.out;
    EXPECT_EQ(added, 1u) << r.out;
}

TEST(Cli, LibListShowAndCheckout) {
    TempDir dir;
    fs::copy(kAssets / "fixtures" / "lifecycle" / "store", dir.path / "store", fs::copy_options::recursive);
    const auto lib = (dir.path / "store").string();
    auto list = cli({"lib", "list", "--library", lib});
    ASSERT_EQ(list.code, 0) << list.err;
    EXPECT_NE(list.out.find("skills=3\ttools=4\tval=0.625\tHEAD"), std::string::npos) << list.out;

    const auto show = cli({"lib", "show", "head", "--library", lib});
    ASSERT_EQ(show.code, 0);
    EXPECT_NE(show.out.find("tool\ttext-and-ocr-analyzer\t"), std::string::npos);
    const auto doc = cli({"lib", "show", "head", "visual-qa-tool", "--library", lib});
    EXPECT_EQ(doc.out, read_file(kAssets / "fixtures" / "library" / "visual-qa-tool.md"));

    const auto co = cli({"lib", "checkout", "v4", "--library", lib});
    ASSERT_EQ(co.code, 0) << co.err;
    EXPECT_EQ(LibraryStore::open(dir.path / "store").head().counts().total(), 13);
    list = cli({"lib", "list", "--library", lib});
    EXPECT_NE(list.out.find("skills=8\ttools=5\tval=0.525\tHEAD"), std::string::npos) << list.out;

    expect_error_line(cli({"lib", "show", "nope", "--library", lib}), "not_found");
    expect_error_line(cli({"lib", "list", "--library", (dir.path / "missing").string()}), "not_found");
    expect_error_line(cli({"lib", "checkout", "head", "--library", (kAssets / "fixtures" / "library").string()}),
                      "validation");
}

TEST(Cli, IngestMissingImageNamesPath) {
    TempDir dir;
    std::ifstream in(kAssets / "synthetic" / "demos.jsonl");
    std::string lines;
    std::string first_candidate;
    for (int i = 0; i < 6; ++i) {
        std::string line;
        std::getline(in, line);
        if (i == 0) first_candidate = json::parse(line)["candidates"][1];
        lines += line + "\n";
    }
    write(dir.path / "demos.jsonl", lines);
    fs::copy(kAssets / "synthetic" / "images", dir.path / "images");

    const auto ok = cli({"ingest", "--demos", (dir.path / "demos.jsonl").string(), "--out",
                         (dir.path / "manifest.json").string()});
    ASSERT_EQ(ok.code, 0) << ok.err;
    const auto manifest = json::parse(read_file(dir.path / "manifest.json"));
    EXPECT_EQ(manifest["count"], 6);
    EXPECT_EQ(manifest["train"].size(), 3u);
    EXPECT_EQ(manifest["val"].size(), 3u);

    fs::remove(dir.path / first_candidate);
    const auto r = cli({"ingest", "--demos", (dir.path / "demos.jsonl").string()});
    expect_error_line(r, "not_found");
    EXPECT_NE(r.err.find(first_candidate), std::string::npos) << r.err;
}

TEST(Cli, UsageErrorsAreSingleJsonLines) {
    const auto none = cli({});
    expect_error_line(none, "usage");
    EXPECT_EQ(none.code, 2);
    const auto bad = cli({"evolve", "--budget", "many"});
    expect_error_line(bad, "usage");
    EXPECT_EQ(bad.code, 2);
    const auto help = cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("evolve"), std::string::npos);
}

TEST(Cli, ConfigResolvesPathsAndRejectsUnknownKeys) {
    TempDir dir;
    write(dir.path / "run.json", R"({
        "demos": "data/demos.jsonl",
        "library": "lib",
        "backends": {"orchestrator": {"kind": "synthetic_oracle"},
                     "subagent": {"kind": "scripted", "transcript": "t.jsonl"}},
        "loop": {"budget": 12, "workers": 2},
        "service": {"bind": "0.0.0.0:9000", "cache_capacity": 16}
    })");
    const auto c = load_run_config(dir.path / "run.json");
    EXPECT_EQ(c.demos, dir.path / "data" / "demos.jsonl");
    EXPECT_EQ(c.library, dir.path / "lib");
    EXPECT_EQ(c.loop.budget, 12);
    EXPECT_EQ(c.loop.workers, 2u);
    EXPECT_EQ(c.bind, "0.0.0.0:9000");
    EXPECT_EQ(c.service.cache_capacity, 16u);
    EXPECT_EQ(c.backends.at("orchestrator").kind(), "synthetic_oracle");
    EXPECT_EQ(std::get<ScriptedConfig>(c.backends.at("subagent").settings).transcript,
              (dir.path / "t.jsonl").string());

    EXPECT_THROW(run_config_from_json(json{{"budget", 3}}), ValidationError);
    EXPECT_THROW(run_config_from_json(json{{"loop", {{"budjet", 3}}}}), ValidationError);
    EXPECT_THROW(run_config_from_json(json{{"backends", {{"judge", {{"kind", "synthetic_oracle"}}}}}}),
                 ValidationError);
    EXPECT_THROW(run_config_from_json(json{{"backend", {{"kind", "synthetic_oracle"}}},
                                           {"backends", json::object()}}),
                 ValidationError);

    write(dir.path / "broken.json", "{\"loop\": ");
    expect_error_line(cli({"evolve", "--config", (dir.path / "broken.json").string()}), "validation");
}

TEST(Cli, ConfigSnapshotRoundTrips) {
    auto c = run_config_from_json(json{{"demos", "/d/demos.jsonl"},
                                       {"library", "/lib"},
                                       {"run_dir", "/runs/a"},
                                       {"split_seed", 11},
                                       {"backends",
                                        {{"orchestrator", {{"kind", "remote"}, {"endpoint", "http://h/v1"}, {"api_key", "secret"}}},
                                         {"subagent", {{"kind", "synthetic_oracle"}, {"noise_seed", 5}}}}},
                                       {"loop", {{"budget", 9}, {"plateau", 4}}},
                                       {"service", {{"retry_after_s", 2}}}});
    const auto j = run_config_to_json(c);
    EXPECT_EQ(j.dump().find("secret"), std::string::npos);
    const auto back = run_config_from_json(j);
    EXPECT_EQ(run_config_to_json(back), j);
    EXPECT_EQ(back.split_seed, 11u);
    EXPECT_EQ(back.loop.plateau, 4);
    EXPECT_EQ(back.service.retry_after_s, 2);
}

TEST(Cli, EnvironmentOverridesFileAndFlagsOverrideBoth) {
    RunConfig c = run_config_from_json(json{{"library", "from-file"}, {"service", {{"bind", "1.2.3.4:1"}}}});
    ::setenv("EVOJUDGE_LIBRARY", "from-env", 1);
    ::setenv("EVOJUDGE_BIND", "127.0.0.1:7000", 1);
    apply_env_overrides(c);
    ::unsetenv("EVOJUDGE_LIBRARY");
    ::unsetenv("EVOJUDGE_BIND");
    EXPECT_EQ(c.library, "from-env");
    EXPECT_EQ(c.bind, "127.0.0.1:7000");

    // --library wins over the environment.
    ::setenv("EVOJUDGE_LIBRARY", "/nonexistent/from-env", 1);
    const auto r = cli({"lib", "list", "--library", (kAssets / "fixtures" / "lifecycle" / "store").string()});
    ::unsetenv("EVOJUDGE_LIBRARY");
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, BackendFlagForms) {
    EXPECT_EQ(parse_backend_flag("synthetic_oracle").kind(), "synthetic_oracle");
    const auto s = parse_backend_flag("scripted:/tmp/x.jsonl");
    EXPECT_EQ(std::get<ScriptedConfig>(s.settings).transcript, "/tmp/x.jsonl");
    EXPECT_THROW(parse_backend_flag("/nonexistent/backend.json"), NotFoundError);

    TempDir dir;
    write(dir.path / "b.json", R"({"kind": "synthetic_oracle", "noise_seed": 3})");
    const auto f = parse_backend_flag((dir.path / "b.json").string());
    EXPECT_EQ(std::get<OracleConfig>(f.settings).noise_seed, 3u);
}

TEST(Cli, BackendSetSharesIdenticalConfigs) {
    const auto oracle = parse_backend_flag("synthetic_oracle");
    const BackendSet shared({{"orchestrator", oracle}, {"subagent", oracle}});
    EXPECT_EQ(shared.view().orchestrator, shared.view().subagent);
    EXPECT_EQ(shared.view().tool, shared.view().subagent);

    auto other = oracle;
    std::get<OracleConfig>(other.settings).noise_seed = 99;
    const BackendSet split_set({{"orchestrator", oracle}, {"subagent", other}, {"tool", oracle}});
    EXPECT_NE(split_set.view().orchestrator, split_set.view().subagent);
    EXPECT_EQ(split_set.view().tool, split_set.view().orchestrator);

    EXPECT_THROW(BackendSet({{"subagent", oracle}}), ValidationError);
}

TEST(Cli, EvolveRunsFromConfigFile) {
    TempDir dir;
    write(dir.path / "run.json", json{{"demos", (kAssets / "synthetic" / "demos.jsonl").string()},
                                      {"library", "lib"},
                                      {"run_dir", "run"},
                                      {"backend", {{"kind", "synthetic_oracle"}}},
                                      {"loop", {{"budget", 20}, {"workers", 2}}}}
                                     .dump());
    const auto r = cli({"evolve", "--config", (dir.path / "run.json").string(), "--budget", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::vector<json> lines;
    std::istringstream in(r.out);
    for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
    ASSERT_EQ(lines.size(), 4u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(lines[static_cast<std::size_t>(i)]["iter"], i + 1);
    const auto summary = lines.back();
    EXPECT_GE(summary["final_val_accuracy"].get<double>(), summary["initial_val_accuracy"].get<double>());
    EXPECT_TRUE(fs::exists(dir.path / "run" / "trajectory.json"));
    const auto snapshot = run_config_from_json(json::parse(read_file(dir.path / "run" / "config.json")));
    EXPECT_EQ(snapshot.loop.budget, 3);
    EXPECT_EQ(snapshot.backends.at("subagent").kind(), "synthetic_oracle");
    const auto calibration = json::parse(read_file(dir.path / "run" / "calibration.json"));
    EXPECT_EQ(calibration["train"].size(), 60u);
    EXPECT_EQ(calibration["val"].size(), 40u);
    EXPECT_TRUE(LibraryStore::open(dir.path / "lib").contains(summary["final_version"].get<std::string>()));
}

TEST(Cli, ServeRejectsBadBindBeforeListening) {
    const auto r = cli({"serve", "--library", (kAssets / "fixtures" / "library").string(), "--backend",
                        "synthetic_oracle", "--bind", "localhost:notaport"});
    expect_error_line(r, "validation");
}
