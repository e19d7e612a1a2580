// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include "../support/oracles.hpp"

#include "evojudge/cli.hpp"
#include "evojudge/evolution.hpp"
#include "evojudge/image.hpp"
#include "evojudge/library.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/preference.hpp"
#include "evojudge/service.hpp"
#include "evojudge/synthetic.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace evojudge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kAssets = EVOJUDGE_ASSET_DIR;

struct Failure {
    std::string detail;
};

void require(bool cond, const std::string& detail) {
    if (!cond) throw Failure{detail};
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("evojudge-acceptance-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<Demonstration> synthetic_demos() {
    return synthetic::inline_demos(synthetic::make_dataset(7, 7, synthetic::default_weights()));
}

// ---------------------------------------------------------------------------

std::string metric_oracle_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t checks = 0;

    // K = 4: every score tuple in {1..5}^4.
    std::vector<std::vector<int>> tuples;
    for (int a = 1; a <= 5; ++a)
        for (int b = 1; b <= 5; ++b)
            for (int c = 1; c <= 5; ++c)
                for (int d = 1; d <= 5; ++d) tuples.push_back({a, b, c, d});
    require(tuples.size() == 625, "expected 625 tuples");
    std::vector<Ranking> rankings;
    std::vector<oracle::Relation> relations;
    for (const auto& t : tuples) {
        rankings.push_back(induced_ranking(t));
        relations.push_back(oracle::relation_from_scores(t));
        require(rankings.back().groups() == oracle::groups_by_sorting(t), "induced_ranking differs from sort oracle");
        ++checks;
    }
    for (std::size_t i = 0; i < tuples.size(); ++i) {
        for (std::size_t j = 0; j < tuples.size(); ++j) {
            require(ranking_match(rankings[i], rankings[j]) == (relations[i] == relations[j]),
                    "ranking_match disagrees with the comparison-matrix oracle");
            ++checks;
        }
    }

    // K <= 3: every ordered set partition.
    for (std::size_t k = 1; k <= 3; ++k) {
        const auto parts = oracle::ordered_partitions(k);
        std::vector<Ranking> rs;
        std::vector<oracle::Relation> rels;
        for (const auto& pos : parts) {
            rs.push_back(Ranking::from_groups(oracle::groups_from_positions(pos)));
            rels.push_back(oracle::relation_from_positions(pos));
            std::vector<int> scores;
            for (auto p : pos) scores.push_back(5 - static_cast<int>(p));
            require(induced_ranking(scores) == rs.back(), "induced_ranking differs on a partition");
            ++checks;
        }
        for (std::size_t i = 0; i < parts.size(); ++i) {
            for (std::size_t j = 0; j < parts.size(); ++j) {
                require(ranking_match(rs[i], rs[j]) == (rels[i] == rels[j]), "ranking_match disagrees on partitions");
                ++checks;
            }
        }
    }
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(secs < 1.0, "took " + fmt(secs) + " s");
    return std::to_string(checks) + " comparisons in " + fmt(secs) + " s";
}

std::string gating_and_rollback() {
    TempDir tmp("gating");
    const auto transcript = tmp.path / "loop30.jsonl";
    const auto demos = synthetic_demos();
    LoopConfig config;
    config.budget = 30;
    config.seed = 7;

    Trajectory recorded;
    {
        synthetic::SyntheticOracleBackend oracle;
        RecordingBackend rec(oracle, std::make_shared<FileTranscriptSink>(transcript));
        LibraryStore store;
        EvolutionLoop loop(split(demos, 7), store, {&rec, &rec, &rec}, config);
        recorded = loop.run();
    }

    ScriptedBackend scripted(transcript);
    LibraryStore store;
    EvolutionLoop loop(split(demos, 7), store, {&scripted, &scripted, &scripted}, config);
    double previous_best = -1.0;
    int rejected = 0;
    for (int i = 0; i < config.budget; ++i) {
        const auto before = canonical_serialization(store.head());
        const auto before_version = store.head_version();
        const auto r = loop.run_iteration();
        require(r.best_so_far >= previous_best, "best_so_far decreased at iteration " + std::to_string(r.iter));
        previous_best = r.best_so_far;
        if (!r.accepted) {
            ++rejected;
            require(store.head_version() == before_version && canonical_serialization(store.head()) == before,
                    "head changed after rejected iteration " + std::to_string(r.iter));
        }
    }
    require(loop.trajectory().records == recorded.records, "replayed trajectory differs from the recorded run");
    require(rejected > 0 && rejected < config.budget, "run has no mix of accepted and rejected iterations");
    return "30 scripted iterations, " + std::to_string(rejected) + " rejected, best " + fmt(previous_best);
}

std::string lifecycle_replay() {
    const auto dir = kAssets / "fixtures" / "lifecycle";
    const auto t = trajectory_from_json(json::parse(read_file(dir / "trajectory.json")));
    std::ifstream log(dir / "actions.jsonl");
    std::map<int, std::vector<LibraryAction>> actions;
    for (std::string line; std::getline(log, line);) {
        const auto j = json::parse(line);
        for (const auto& a : j["actions"]) actions[j["iter"].get<int>()].push_back(action_from_json(a));
    }
    require(t.records.size() == 77, "fixture trajectory has " + std::to_string(t.records.size()) + " records");

    LibraryState head = empty_library();
    require(head.version == t.initial_version, "root hash differs from the recorded initial version");
    std::vector<int> accepted_counts;
    int creates = 0;
    std::vector<std::size_t> prunes;
    for (const auto& r : t.records) {
        const auto candidate = commit(head, actions.at(r.iter), r.iter);
        require(candidate.version == r.candidate_version,
                "iteration " + std::to_string(r.iter) + " replays to a different hash");
        if (!r.accepted) continue;
        for (const auto& a : actions.at(r.iter)) {
            if (a.op == LibraryAction::Op::Create) {
                require(prunes.empty(), "create after prune");
                ++creates;
            } else {
                require(a.op == LibraryAction::Op::Prune, "accepted log holds an action other than Create or Prune");
                prunes.push_back(a.names.size());
            }
        }
        head = candidate;
        accepted_counts.push_back(head.counts().total());
        require(r.library_counts == head.counts(), "recorded counts differ at iteration " + std::to_string(r.iter));
    }
    require(creates == 13, std::to_string(creates) + " creates");
    require(prunes == std::vector<std::size_t>{6}, "expected one 6-name prune");
    require(*std::max_element(accepted_counts.begin(), accepted_counts.end()) == 13, "peak is not 13 entries");
    require(accepted_counts.back() == 7, "final state has " + std::to_string(accepted_counts.back()) + " entries");
    require(head.counts() == EntryCounts{3, 4}, "final state is not 3 skills + 4 tools");
    require(head.version == t.final_version, "final hash differs from the recorded final version");

    const auto store = LibraryStore::open(dir / "store");
    const auto rebuilt = replay_lineage(store, t.final_version);
    require(rebuilt.version == t.final_version, "lineage replay from the store gives a different hash");
    const auto selected = select_final(t, store);
    require(selected.version == t.final_version && selected.created_by.iteration == 69,
            "selected final version is not the one tagged iteration 69");
    return "13 -> 7 entries, final " + t.final_version.substr(0, 12) + " at iteration 69";
}

std::string fixture_round_trip() {
    const auto dir = kAssets / "fixtures" / "library";
    std::set<std::string> names;
    int skills = 0;
    int tools = 0;
    for (const auto& item : fs::directory_iterator(dir)) {
        if (item.path().extension() != ".md") continue;
        const auto text = read_file(item.path());
        const auto entry = parse_entry(text);
        require(render_entry(entry) == text, item.path().filename().string() + " does not re-render byte-identically");
        require(entry.name() + ".md" == item.path().filename().string(), "file name differs from entry name");
        names.insert(entry.name());
        (entry.kind() == EntryKind::Skill ? skills : tools)++;
    }
    require(names.size() == 7 && skills == 3 && tools == 4, "expected 7 documents, 3 skills and 4 tools");
    const auto summaries = entry_summaries(library_from_documents(dir));
    std::set<std::string> summarised;
    for (const auto& s : summaries) summarised.insert(s.name);
    require(summarised == names, "entry_summaries does not list every document");
    return "7 documents, 3 skills + 4 tools";
}

// ---------------------------------------------------------------------------
// The 80-iteration synthetic run shared by the improvement, determinism and
// hygiene criteria.

struct SyntheticRun {
    Trajectory trajectory;
    std::string final_version;
};

SyntheticRun run_synthetic(const fs::path& run_dir) {
    synthetic::SyntheticOracleBackend oracle;
    LibraryStore store;
    LoopConfig config;
    config.budget = 80;
    config.seed = 7;
    config.run_dir = run_dir;
    EvolutionLoop loop(split(synthetic_demos(), 7), store, {&oracle, &oracle, &oracle}, config);
    auto t = loop.run();
    return {t, select_final(t, store).version};
}

std::string synthetic_improvement(const Trajectory& t) {
    const double gain = t.final_val_accuracy - t.initial_val_accuracy;
    require(gain >= 0.15 - 1e-9, "improvement " + fmt(gain));
    const auto& rs = t.records;
    const auto first_prune = std::find_if(rs.begin(), rs.end(), [](const auto& r) { return r.phase == Phase::Pruning; });
    require(first_prune != rs.end(), "pruning phase never entered");
    const double plateau_best = first_prune == rs.begin() ? t.initial_val_accuracy : std::prev(first_prune)->best_so_far;
    int longest = 0;
    int run = 0;
    for (auto it = rs.begin(); it != first_prune; ++it) {
        run = it->accepted ? 0 : run + 1;
        longest = std::max(longest, run);
    }
    const int plateau = LoopConfig{}.plateau;
    require(longest >= plateau, "plateau of " + std::to_string(longest) + " iterations before pruning");
    double post_prune_best = 0.0;
    for (auto it = first_prune; it != rs.end(); ++it) post_prune_best = std::max(post_prune_best, it->best_so_far);
    require(post_prune_best > plateau_best, "post-prune best " + fmt(post_prune_best) + " <= plateau " + fmt(plateau_best));
    return fmt(t.initial_val_accuracy) + " -> " + fmt(t.final_val_accuracy) + ", plateau " + std::to_string(longest) +
           " iterations at " + fmt(plateau_best) + ", pruning from iteration " + std::to_string(first_prune->iter) +
           ", post-prune best " + fmt(post_prune_best);
}

std::string determinism(const SyntheticRun& a, const SyntheticRun& b) {
    require(a.trajectory.records.size() == 80, "first run has " + std::to_string(a.trajectory.records.size()) + " records");
    require(a.trajectory.records == b.trajectory.records, "trajectories differ");
    require(a.trajectory.final_version == b.trajectory.final_version && a.final_version == b.final_version,
            "final versions differ");
    return "80 records identical, final " + a.final_version.substr(0, 12);
}

std::string hygiene(const fs::path& run_dir) {
    std::set<std::string> val_ids;
    std::set<std::string> train_ids;
    const auto calibration = split(synthetic_demos(), 7);
    for (const auto& d : calibration.val) val_ids.insert(d.id);
    for (const auto& d : calibration.train) train_ids.insert(d.id);

    std::size_t scanned = 0;
    std::size_t analysis_with_train_ids = 0;
    std::set<std::string> seen;
    for (const auto& item : fs::directory_iterator(run_dir / "iterations")) {
        std::ifstream index(item.path() / "prompts.jsonl");
        for (std::string line; std::getline(index, line);) {
            const auto j = json::parse(line);
            const auto step = j["step"].get<std::string>();
            if (step != "step1" && step != "analysis") continue;
            const auto digest = j["digest"].get<std::string>();
            if (!seen.insert(step + digest).second) continue;
            const auto text = read_file(run_dir / "prompts" / (digest + ".json"));
            for (const auto& id : val_ids) {
                require(text.find(id) == std::string::npos, "validation id " + id + " in a " + step + " prompt");
            }
            if (step == "analysis") {
                for (const auto& id : train_ids) {
                    if (text.find(id) != std::string::npos) {
                        ++analysis_with_train_ids;
                        break;
                    }
                }
            }
            ++scanned;
        }
    }
    require(scanned > 0, "no prompts found");
    require(analysis_with_train_ids > 0, "scanner never saw a training id in an analysis prompt");
    return std::to_string(scanned) + " distinct prompts scanned, 0 validation ids";
}

std::string reward_service() {
    const auto requests = json::parse(read_file(kAssets / "transcripts" / "service_requests.json"));
    require(requests.size() == 16, "expected 16 recorded requests");
    LibraryStore store;
    const auto state = store.put(library_from_documents(kAssets / "fixtures" / "library"));
    ScriptedBackend scripted(kAssets / "transcripts" / "service.jsonl");
    RewardService service(store, state.version, {&scripted, &scripted, &scripted});
    const int port = service.start("127.0.0.1", 0);
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);

    auto post = [&](const std::string& path, const json& body) {
        const auto res = client.Post(path.c_str(), body.dump(), "application/json");
        require(res && res->status == 200, path + " failed" + (res ? ": " + res->body : std::string()));
        return json::parse(res->body);
    };

    std::vector<json> singles;
    for (const auto& r : requests) {
        const auto reply = post("/v1/reward", r);
        require(reply["score"].is_number_integer(), "score is not an integer: " + reply.dump());
        const int s = reply["score"].get<int>();
        require(s >= 1 && s <= 5, "score out of range: " + std::to_string(s));
        require(reply["library_version"] == state.version, "wrong library_version");
        singles.push_back(reply);
    }
    for (int rep = 0; rep < 3; ++rep) {
        for (std::size_t i = 0; i < requests.size(); ++i) {
            require(post("/v1/reward", requests[i]) == singles[i], "repeated request " + std::to_string(i) + " differs");
        }
    }
    std::set<int> distinct;
    for (const auto& s : singles) distinct.insert(s["score"].get<int>());

    const auto batch = post("/v1/reward/batch", json{{"items", requests}});
    require(batch["results"].size() == 16, "batch returned " + std::to_string(batch["results"].size()) + " results");
    for (std::size_t i = 0; i < 16; ++i) {
        require(batch["results"][i] == singles[i], "batch result " + std::to_string(i) + " out of order");
    }
    // Reversed input gives reversed output.
    json reversed = json::array();
    for (auto it = requests.rbegin(); it != requests.rend(); ++it) reversed.push_back(*it);
    const auto back = post("/v1/reward/batch", json{{"items", reversed}});
    for (std::size_t i = 0; i < 16; ++i) {
        require(back["results"][i] == singles[15 - i], "reversed batch result " + std::to_string(i) + " out of order");
    }
    service.stop();
    return "16 requests, " + std::to_string(distinct.size()) + " distinct scores, batch order preserved";
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](const std::string& name, const std::function<std::string()>& check) {
        std::string line;
        bool ok = false;
        try {
            line = check();
            ok = true;
        } catch (const Failure& f) {
            line = f.detail;
        } catch (const std::exception& e) {
            line = std::string("exception: ") + e.what();
        }
        failures += !ok;
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << line << std::endl;
    };

    report("metric-oracle-equivalence", metric_oracle_equivalence);
    report("gating-monotonicity-and-rollback", gating_and_rollback);
    report("library-lifecycle-replay", lifecycle_replay);
    report("fixture-library-round-trip", fixture_round_trip);

    TempDir run_a("run-a");
    TempDir run_b("run-b");
    std::optional<SyntheticRun> a;
    std::optional<SyntheticRun> b;
    std::string run_error;
    try {
        a = run_synthetic(run_a.path);
        b = run_synthetic(run_b.path);
    } catch (const std::exception& e) {
        run_error = std::string("exception: ") + e.what();
    }
    auto with_runs = [&](const std::function<std::string()>& f) {
        return [&, f] {
            require(a && b, run_error);
            return f();
        };
    };
    report("synthetic-evolution-improvement", with_runs([&] { return synthetic_improvement(a->trajectory); }));
    report("determinism", with_runs([&] { return determinism(*a, *b); }));
    report("train-val-hygiene", with_runs([&] { return hygiene(run_a.path); }));
    report("reward-service-contract", reward_service);

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
