#pragma once

// The gated evolution loop: judge the training split, analyse, apply one
// proposal, re-judge the validation split and keep the change only if
// validation accuracy strictly improves.

#include "evojudge/errors.hpp"
#include "evojudge/judge.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/orchestrator.hpp"
#include "evojudge/preference.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace evojudge {

struct CalibrationSet {
    std::vector<Demonstration> train;
    std::vector<Demonstration> val;
    std::uint64_t split_seed = 0;
};

// Seeded Fisher-Yates shuffle; the first floor(fraction * N) go to train.
// Throws ValidationError on duplicate ids, missing ground truth or N < 5.
CalibrationSet split(std::vector<Demonstration> demos, std::uint64_t seed, double train_fraction = 0.6);

// Indices of `n` items after the seeded shuffle used by split().
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

struct IterationRecord {
    int iter = 0;
    std::string candidate_version;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    bool accepted = false;
    double best_so_far = 0.0;
    EntryCounts library_counts;  // head library after gating
    Phase phase = Phase::Growth;

    bool operator==(const IterationRecord&) const = default;
};

struct Trajectory {
    std::vector<IterationRecord> records;
    std::string initial_version;
    double initial_val_accuracy = 0.0;
    std::string final_version;
    double final_val_accuracy = 0.0;
};

nlohmann::json to_json(const IterationRecord& r);
IterationRecord iteration_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);

struct Backends {
    Backend* orchestrator = nullptr;
    Backend* subagent = nullptr;
    Backend* tool = nullptr;  // defaults to the Sub-Agent
};

struct LoopConfig {
    int budget = 80;
    std::uint64_t seed = 7;
    int plateau = 10;            // iterations without improvement before pruning may start
    int prune_min_entries = 10;  // active entries needed to start pruning
    int max_growth_actions = 1;
    std::size_t workers = 8;
    std::filesystem::path image_root;
    std::optional<std::filesystem::path> run_dir;
    bool resume = true;  // continue from loop_state.json when run_dir holds one
    DecodeParams decode{0.0, 2048, std::nullopt};
};

// One demonstration as judged during an iteration.
struct DemoOutcome {
    EvalRecord record;
    RoutingDecision routing;
    std::vector<std::string> context;  // names of the entries the judge saw
};

// Routes and judges one demonstration. Judgment failures become failed
// records; unscripted requests and transcript errors propagate.
DemoOutcome evaluate_demo(const Demonstration& demo, const LibraryState& state, const Backends& backends,
                          const LoopConfig& config, const RequestObserver& observer = {});

// evaluate_demo over `demos` on `config.workers` threads, in input order.
std::vector<DemoOutcome> evaluate_demos(const std::vector<Demonstration>& demos, const LibraryState& state,
                                        const Backends& backends, const LoopConfig& config);

// Thrown when the loop cannot continue. The partial trajectory is persisted
// and `resume_token()` names where to pick up.
class LoopAborted : public Error {
public:
    LoopAborted(const std::string& message, std::string token) : Error(message), token_(std::move(token)) {}
    [[nodiscard]] const std::string& resume_token() const noexcept { return token_; }
    [[nodiscard]] std::string_view code() const noexcept override { return "aborted"; }

private:
    std::string token_;
};

using IterationObserver = std::function<void(const IterationRecord&)>;

class EvolutionLoop {
public:
    EvolutionLoop(CalibrationSet calibration, LibraryStore& store, Backends backends, LoopConfig config);

    // Runs until the budget is spent and returns the trajectory with the
    // selected final version.
    Trajectory run(const IterationObserver& observer = {});
    // One iteration at the current position.
    IterationRecord run_iteration();

    [[nodiscard]] const Trajectory& trajectory() const noexcept { return trajectory_; }
    [[nodiscard]] Phase phase() const noexcept { return phase_; }
    [[nodiscard]] double best_so_far() const noexcept { return best_; }

private:
    struct Evaluation;
    Evaluation evaluate(const std::vector<Demonstration>& demos, const LibraryState& state, const std::string& step);
    void initialise();
    void persist_state() const;
    bool load_state();
    std::filesystem::path iteration_dir(int iter) const;

    CalibrationSet calibration_;
    LibraryStore& store_;
    Backends backends_;
    LoopConfig config_;
    Trajectory trajectory_;
    std::vector<RejectedProposal> rejected_;
    Phase phase_ = Phase::Growth;
    double best_ = 0.0;
    int next_iter_ = 1;
    int since_improvement_ = 0;
    bool initialised_ = false;
};

// Best accepted state of the trajectory, earliest on ties; the initial state
// when nothing was accepted (`warning` is set then).
LibraryState select_final(const Trajectory& trajectory, const LibraryStore& store, std::string* warning = nullptr);

// Rebuilds `version` by replaying the logged actions of its lineage from the root.
LibraryState replay_lineage(const LibraryStore& store, std::string_view version);

} // namespace evojudge
