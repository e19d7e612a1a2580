// Regenerates the committed fixtures under assets/:
//
//   synthetic/             100-demo synthetic dataset, plus its train/val split
//   fixtures/lifecycle/     growth-and-prune lifecycle: action log, trajectory, store
//   transcripts/           recorded oracle session replayed by the service tests
//
// Everything is seeded; running the tool twice yields identical files.

#include "evojudge/cli.hpp"
#include "evojudge/digest.hpp"
#include "evojudge/evolution.hpp"
#include "evojudge/library.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/service.hpp"
#include "evojudge/synthetic.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evojudge;

namespace {

constexpr std::uint64_t kSeed = 7;

void write_lines(const fs::path& path, const std::vector<json>& lines) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    for (const auto& l : lines) f << l.dump() << '\n';
    if (!f) throw Error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw Error("cannot write " + path.string());
}

// ---------------------------------------------------------------------------

void make_synthetic(const fs::path& assets) {
    const auto dir = assets / "synthetic";
    fs::remove_all(dir);
    const auto generated = synthetic::make_dataset(kSeed, kSeed, synthetic::default_weights());
    synthetic::write_dataset(generated, dir);
    std::vector<Demonstration> demos;
    for (const auto& g : generated) demos.push_back(g.demo);
    const auto calibration = split(demos, kSeed);
    std::vector<json> train;
    std::vector<json> val;
    for (const auto& d : calibration.train) train.push_back(json(d));
    for (const auto& d : calibration.val) val.push_back(json(d));
    write_lines(dir / "train.jsonl", train);
    write_lines(dir / "val.jsonl", val);
    std::cout << "synthetic: " << demos.size() << " demos, " << train.size() << "/" << val.size() << "\n";
}

// ---------------------------------------------------------------------------
// Growth-and-prune lifecycle. Accepted commits: four growth commits adding
// 4+3+3+3 entries (iterations 5, 6, 7, 10), then one prune of six names at
// iteration 69. Rejected iterations carry real candidate actions so that every
// candidate_version in the trajectory can be recomputed.

struct Commit {
    int iter;
    std::vector<std::string> creates;
    double val;
};

std::map<std::string, LibraryEntry> load_docs(const fs::path& dir) {
    std::map<std::string, LibraryEntry> out;
    for (const auto& item : fs::directory_iterator(dir)) {
        if (item.path().extension() != ".md") continue;
        auto e = parse_entry(read_file(item.path()));
        out.emplace(e.name(), std::move(e));
    }
    return out;
}

LibraryEntry revised(const LibraryEntry& e, int iter) {
    auto copy = e;
    std::visit([&](auto& doc) { doc.description += " Revised at iteration " + std::to_string(iter) + "."; }, copy.doc);
    return copy;
}

void make_lifecycle(const fs::path& assets) {
    const auto final_docs = load_docs(assets / "fixtures" / "library");
    const auto pruned_docs = load_docs(assets / "fixtures" / "pruned");
    std::map<std::string, LibraryEntry> all = final_docs;
    all.insert(pruned_docs.begin(), pruned_docs.end());
    if (all.size() != 13) throw Error("expected 13 lifecycle documents");

    const std::vector<Commit> growth = {
        {5, {"objective-visual-description-first", "instruction-adherence-heuristics", "visual-qa-tool",
             "anti-hallucination-and-verification"},
         0.45},
        {6, {"realism-and-artifact-penalties", "text-and-ocr-analyzer", "edit-magnitude-heuristics"}, 0.475},
        {7, {"color-and-lighting-consistency", "spatial-and-object-analyzer", "identity-preservation-heuristics"}, 0.5},
        {10, {"style-and-background-transformation-evaluation", "cultural-and-style-knowledge-oracle",
              "black-image-detector"},
         0.525},
    };
    constexpr int kBudget = 77;
    constexpr int kPruneStart = 50;
    constexpr int kFinalIter = 69;
    constexpr double kBaseline = 0.425;
    constexpr double kFinal = 0.625;

    auto rng = synthetic::make_rng(kSeed, "lifecycle");
    const auto dir = assets / "fixtures" / "lifecycle";
    fs::remove_all(dir);
    auto store = LibraryStore::open(dir / "store");

    LibraryState head = store.head();
    Trajectory t;
    t.initial_version = head.version;
    t.initial_val_accuracy = kBaseline;
    store.annotate(head.version, kBaseline);
    double best = kBaseline;
    std::vector<json> log;
    std::size_t next_growth = 0;

    for (int iter = 1; iter <= kBudget; ++iter) {
        const Phase phase = iter >= kPruneStart ? Phase::Pruning : Phase::Growth;
        std::vector<LibraryAction> actions;
        double val = 0.0;
        bool accepted = false;
        if (next_growth < growth.size() && growth[next_growth].iter == iter) {
            for (const auto& name : growth[next_growth].creates) actions.push_back(LibraryAction::create(all.at(name)));
            val = growth[next_growth].val;
            accepted = true;
            ++next_growth;
        } else if (iter == kFinalIter) {
            std::vector<std::string> names;
            for (const auto& [name, _] : pruned_docs) names.push_back(name);
            actions.push_back(LibraryAction::prune(names));
            val = kFinal;
            accepted = true;
        } else {
            const auto active = head.active_entries();
            std::vector<std::string> absent;
            for (const auto& [name, _] : all) {
                if (!head.find_active(name)) absent.push_back(name);
            }
            if (phase == Phase::Pruning) {
                std::vector<std::string> names;
                const auto n = 2 + synthetic::bounded(rng, 5);
                for (const auto* e : active) {
                    if (names.size() < n && synthetic::bounded(rng, 2) == 0) names.push_back(e->name());
                }
                if (names.empty()) names.push_back(active.front()->name());
                actions.push_back(LibraryAction::prune(names));
            } else if (active.empty() || (!absent.empty() && synthetic::bounded(rng, 3) == 0)) {
                actions.push_back(LibraryAction::create(all.at(absent[synthetic::bounded(rng, absent.size())])));
            } else {
                const auto* e = active[synthetic::bounded(rng, active.size())];
                actions.push_back(LibraryAction::modify(revised(*e, iter)));
            }
            val = best - 0.025 * static_cast<double>(synthetic::bounded(rng, 4));
        }
        const auto candidate = commit(head, actions, iter);
        const double train = std::clamp(val + (static_cast<double>(synthetic::bounded(rng, 9)) - 3.0) / 60.0, 0.0, 1.0);
        if (accepted) {
            head = store.put(candidate);
            store.rollback(head.version);
            store.annotate(head.version, val);
            best = val;
        }
        IterationRecord r;
        r.iter = iter;
        r.candidate_version = candidate.version;
        r.train_accuracy = std::round(train * 60.0) / 60.0;
        r.val_accuracy = val;
        r.accepted = accepted;
        r.best_so_far = best;
        r.library_counts = head.counts();
        r.phase = phase;
        t.records.push_back(r);
        json actions_json = json::array();
        for (const auto& a : actions) actions_json.push_back(action_to_json(a));
        log.push_back({{"iter", iter}, {"accepted", accepted}, {"actions", actions_json}});
    }
    t.final_version = select_final(t, store).version;
    t.final_val_accuracy = best;
    write_lines(dir / "actions.jsonl", log);
    write_json(dir / "trajectory.json", to_json(t));
    std::cout << "lifecycle: final " << t.final_version << " with " << store.head().counts().total() << " entries\n";
}

// ---------------------------------------------------------------------------
// Recorded oracle sessions.

struct Recorder {
    synthetic::SyntheticOracleBackend oracle;
    std::shared_ptr<FileTranscriptSink> sink;
    RecordingBackend backend;

    explicit Recorder(const fs::path& path)
        : oracle(OracleConfig{}), sink(std::make_shared<FileTranscriptSink>(path)), backend(oracle, sink) {}
    Backends view() { return {&backend, &backend, &backend}; }
};

// Reward requests against the fixture library: 16 distinct requests built from
// the first synthetic demonstrations.
void make_service_transcript(const fs::path& assets) {
    const auto dir = assets / "transcripts";
    fs::create_directories(dir);
    const auto generated = synthetic::make_dataset(kSeed, kSeed, synthetic::default_weights());
    json requests = json::array();
    for (std::size_t i = 0; requests.size() < 16; ++i) {
        const auto& g = generated.at(i);
        const auto& cand = g.images.at(1 + i % (g.images.size() - 1));
        requests.push_back({{"source_image", base64_encode(g.images.at(0).to_bytes())},
                            {"instruction", g.demo.instruction},
                            {"candidate", base64_encode(cand.to_bytes())}});
    }
    write_json(dir / "service_requests.json", requests);

    Recorder rec(dir / "service.jsonl");
    LibraryStore store;
    const auto state = store.put(library_from_documents(assets / "fixtures" / "library"));
    RewardService service(store, state.version, rec.view());
    for (const auto& r : requests) {
        const auto reply = service.reward(r.dump());
        if (reply.status != 200) throw Error("recording failed: " + reply.body.dump());
    }
    std::cout << "service: " << requests.size() << " requests recorded\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate committed fixtures"};
    std::string assets = EVOJUDGE_ASSET_DIR;
    std::vector<std::string> only;
    app.add_option("--assets", assets, "Asset directory");
    app.add_option("--only", only, "Subset: synthetic, lifecycle, transcripts")
        ->check(CLI::IsMember({"synthetic", "lifecycle", "transcripts"}));
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](const std::string& part) {
        return only.empty() || std::find(only.begin(), only.end(), part) != only.end();
    };
    try {
        if (wanted("synthetic")) make_synthetic(assets);
        if (wanted("lifecycle")) make_lifecycle(assets);
        if (wanted("transcripts")) {
            make_service_transcript(assets);
        }
    } catch (const std::exception& e) {
        std::cerr << error_line("fixtures", e.what()) << '\n';
        return 1;
    }
    return 0;
}
