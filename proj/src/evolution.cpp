#include "evojudge/evolution.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace evojudge {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Split

namespace {

// Uniform in [0, n) by rejection; std::uniform_int_distribution differs
// between standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

} // namespace

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[bounded(rng, i)]);
    return idx;
}

CalibrationSet split(std::vector<Demonstration> demos, std::uint64_t seed, double train_fraction) {
    if (demos.size() < 5) throw ValidationError("a calibration set needs at least 5 demonstrations");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must lie in (0, 1)");
    std::set<std::string> ids;
    for (const auto& d : demos) {
        if (!ids.insert(d.id).second) throw ValidationError("duplicate demonstration id '" + d.id + "'");
        if (!d.has_ground_truth()) throw ValidationError("demonstration '" + d.id + "' has no ground truth");
    }
    const auto order = shuffled_indices(demos.size(), seed);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(demos.size()) + 1e-9));
    CalibrationSet c;
    c.split_seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_train ? c.train : c.val).push_back(std::move(demos[order[i]]));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json to_json(const IterationRecord& r) {
    return {{"iter", r.iter},
            {"candidate_version", r.candidate_version},
            {"train_accuracy", r.train_accuracy},
            {"val_accuracy", r.val_accuracy},
            {"accepted", r.accepted},
            {"best_so_far", r.best_so_far},
            {"library_counts", {{"skills", r.library_counts.skills}, {"tools", r.library_counts.tools}}},
            {"phase", to_string(r.phase)}};
}

IterationRecord iteration_record_from_json(const nlohmann::json& j) {
    IterationRecord r;
    r.iter = j.at("iter").get<int>();
    r.candidate_version = j.at("candidate_version").get<std::string>();
    r.train_accuracy = j.at("train_accuracy").get<double>();
    r.val_accuracy = j.at("val_accuracy").get<double>();
    r.accepted = j.at("accepted").get<bool>();
    r.best_so_far = j.at("best_so_far").get<double>();
    r.library_counts = {j.at("library_counts").at("skills").get<int>(), j.at("library_counts").at("tools").get<int>()};
    r.phase = phase_from_string(j.at("phase").get<std::string>());
    return r;
}

nlohmann::json to_json(const Trajectory& t) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : t.records) records.push_back(to_json(r));
    return {{"records", std::move(records)},
            {"initial_version", t.initial_version},
            {"initial_val_accuracy", t.initial_val_accuracy},
            {"final_version", t.final_version},
            {"final_val_accuracy", t.final_val_accuracy}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory t;
    for (const auto& r : j.at("records")) t.records.push_back(iteration_record_from_json(r));
    t.initial_version = j.at("initial_version").get<std::string>();
    t.initial_val_accuracy = j.at("initial_val_accuracy").get<double>();
    t.final_version = j.at("final_version").get<std::string>();
    t.final_val_accuracy = j.at("final_val_accuracy").get<double>();
    return t;
}

namespace {

nlohmann::json rejected_to_json(const RejectedProposal& r) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : r.actions) actions.push_back(action_to_json(a));
    return {{"iteration", r.iteration},
            {"base_version", r.base_version},
            {"actions", std::move(actions)},
            {"val_accuracy", r.val_accuracy}};
}

RejectedProposal rejected_from_json(const nlohmann::json& j) {
    RejectedProposal r;
    r.iteration = j.at("iteration").get<int>();
    r.base_version = j.at("base_version").get<std::string>();
    for (const auto& a : j.at("actions")) r.actions.push_back(action_from_json(a));
    r.val_accuracy = j.at("val_accuracy").get<double>();
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        out.flush();
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land at their
// index, so the output does not depend on scheduling.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t workers, Fn fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto count = std::max<std::size_t>(1, std::min(workers, n));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < count; ++t) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace

DemoOutcome evaluate_demo(const Demonstration& demo, const LibraryState& state, const Backends& backends,
                          const LoopConfig& config, const RequestObserver& observer) {
    DemoOutcome out;
    try {
        RouteOptions ro;
        ro.image_root = config.image_root;
        ro.decode = config.decode;
        ro.caption_backend = backends.subagent;
        ro.observer = observer;
        out.routing = route(demo, state, *backends.orchestrator, ro);
        const auto ctx = assemble_context(out.routing, state, demo.instruction);
        out.context = ctx.names();
        JudgeOptions jo;
        jo.image_root = config.image_root;
        jo.decode = config.decode;
        jo.tool_backend = backends.tool;
        jo.observer = observer;
        out.record = make_eval_record(demo, judge(demo, ctx, *backends.subagent, jo));
    } catch (const UnscriptedRequestError&) {
        throw;
    } catch (const TranscriptError&) {
        throw;
    } catch (const Error& e) {
        out.record = make_failed_record(demo, std::string(e.code()) + ": " + e.what());
    }
    return out;
}

std::vector<DemoOutcome> evaluate_demos(const std::vector<Demonstration>& demos, const LibraryState& state,
                                        const Backends& backends, const LoopConfig& config) {
    return parallel_map<DemoOutcome>(demos.size(), config.workers,
                                     [&](std::size_t i) { return evaluate_demo(demos[i], state, backends, config); });
}

// ---------------------------------------------------------------------------
// Loop

struct EvolutionLoop::Evaluation {
    std::vector<DemoOutcome> outcomes;
    std::vector<nlohmann::json> prompt_index;  // one line per model request, demo order
    double accuracy = 0.0;
};

EvolutionLoop::EvolutionLoop(CalibrationSet calibration, LibraryStore& store, Backends backends, LoopConfig config)
    : calibration_(std::move(calibration)), store_(store), backends_(backends), config_(std::move(config)) {
    if (!backends_.orchestrator || !backends_.subagent) throw ValidationError("the loop needs both backends");
    if (config_.budget < 1) throw ValidationError("budget must be >= 1");
    if (calibration_.train.empty() || calibration_.val.empty()) throw ValidationError("empty calibration split");
    if (!config_.decode.seed) config_.decode.seed = static_cast<std::int64_t>(config_.seed);
}

fs::path EvolutionLoop::iteration_dir(int iter) const { return *config_.run_dir / "iterations" / std::to_string(iter); }

EvolutionLoop::Evaluation EvolutionLoop::evaluate(const std::vector<Demonstration>& demos, const LibraryState& state,
                                                  const std::string& step) {
    struct Item {
        DemoOutcome outcome;
        std::vector<nlohmann::json> prompts;
    };
    std::mutex cas_mutex;
    const bool logging = config_.run_dir.has_value();
    auto items = parallel_map<Item>(demos.size(), config_.workers, [&](std::size_t i) {
        Item item;
        RequestObserver observer;
        if (logging) {
            observer = [&](std::string_view stage, const ModelRequest& request) {
                const auto text = canonical_json(request).dump();
                const auto digest = sha256_hex(text);
                item.prompts.push_back({{"step", step}, {"demo_id", demos[i].id}, {"stage", stage}, {"digest", digest}});
                const auto path = *config_.run_dir / "prompts" / (digest + ".json");
                std::lock_guard lock(cas_mutex);
                if (!fs::exists(path)) write_text(path, text);
            };
        }
        item.outcome = evaluate_demo(demos[i], state, backends_, config_, observer);
        return item;
    });
    Evaluation ev;
    std::vector<EvalRecord> records;
    bool any_judged = false;
    for (auto& item : items) {
        any_judged = any_judged || item.outcome.record.judgment.has_value();
        records.push_back(item.outcome.record);
        for (auto& p : item.prompts) ev.prompt_index.push_back(std::move(p));
        ev.outcomes.push_back(std::move(item.outcome));
    }
    if (!any_judged) {
        throw LoopAborted("every judgment of " + step + " failed: " + records.front().failure, "");
    }
    ev.accuracy = ranking_accuracy(records);
    return ev;
}

namespace {

std::string jsonl(const std::vector<nlohmann::json>& lines) {
    std::string out;
    for (const auto& l : lines) out += l.dump() + "\n";
    return out;
}

std::vector<nlohmann::json> outcome_lines(const std::vector<DemoOutcome>& outcomes) {
    std::vector<nlohmann::json> out;
    for (const auto& o : outcomes) {
        nlohmann::json j = o.record;
        j["context"] = o.context;
        j["routing"] = to_json(o.routing);
        out.push_back(std::move(j));
    }
    return out;
}

} // namespace

void EvolutionLoop::persist_state() const {
    if (!config_.run_dir) return;
    nlohmann::json rejected = nlohmann::json::array();
    for (const auto& r : rejected_) rejected.push_back(rejected_to_json(r));
    write_text(*config_.run_dir / "trajectory.json", to_json(trajectory_).dump(2) + "\n");
    write_text(*config_.run_dir / "loop_state.json", nlohmann::json{{"next_iter", next_iter_},
                                                                    {"best_so_far", best_},
                                                                    {"phase", to_string(phase_)},
                                                                    {"since_improvement", since_improvement_},
                                                                    {"head", store_.head_version()},
                                                                    {"rejected", std::move(rejected)}}
                                                         .dump(2) + "\n");
}

bool EvolutionLoop::load_state() {
    const auto path = *config_.run_dir / "loop_state.json";
    if (!fs::exists(path)) return false;
    const auto s = nlohmann::json::parse(read_file(path));
    const auto head = s.at("head").get<std::string>();
    if (!store_.contains(head)) throw ValidationError("loop state names a library version the store lacks: " + head);
    if (store_.head_version() != head) store_.rollback(head);
    trajectory_ = trajectory_from_json(nlohmann::json::parse(read_file(*config_.run_dir / "trajectory.json")));
    next_iter_ = s.at("next_iter").get<int>();
    best_ = s.at("best_so_far").get<double>();
    phase_ = phase_from_string(s.at("phase").get<std::string>());
    since_improvement_ = s.at("since_improvement").get<int>();
    rejected_.clear();
    for (const auto& r : s.at("rejected")) rejected_.push_back(rejected_from_json(r));
    return true;
}

void EvolutionLoop::initialise() {
    initialised_ = true;
    if (config_.run_dir && config_.resume && load_state()) return;
    if (config_.run_dir) {
        nlohmann::json manifest{{"split_seed", calibration_.split_seed}, {"train", nlohmann::json::array()},
                                {"val", nlohmann::json::array()}};
        for (const auto& d : calibration_.train) manifest["train"].push_back(d.id);
        for (const auto& d : calibration_.val) manifest["val"].push_back(d.id);
        write_text(*config_.run_dir / "calibration.json", manifest.dump(2) + "\n");
    }
    const auto head = store_.head();
    const auto baseline = evaluate(calibration_.val, head, "baseline");
    best_ = baseline.accuracy;
    store_.annotate(head.version, best_);
    trajectory_ = {};
    trajectory_.initial_version = head.version;
    trajectory_.initial_val_accuracy = best_;
    trajectory_.final_version = head.version;
    trajectory_.final_val_accuracy = best_;
    if (config_.run_dir) {
        write_text(iteration_dir(0) / "val_records.jsonl", jsonl(outcome_lines(baseline.outcomes)));
        write_text(iteration_dir(0) / "prompts.jsonl", jsonl(baseline.prompt_index));
    }
    persist_state();
}

IterationRecord EvolutionLoop::run_iteration() {
    if (!initialised_) initialise();
    const int iter = next_iter_;
    const auto head = store_.head();
    if (phase_ == Phase::Growth && since_improvement_ >= config_.plateau &&
        head.counts().total() >= config_.prune_min_entries) {
        phase_ = Phase::Pruning;
    }
    const auto dir = config_.run_dir ? iteration_dir(iter) : fs::path();

    // Step 1 and 2: judge the training split under the head library.
    const auto train = evaluate(calibration_.train, head, "step1");
    std::vector<nlohmann::json> prompt_index = train.prompt_index;
    if (config_.run_dir) write_text(dir / "records.jsonl", jsonl(outcome_lines(train.outcomes)));

    // Step 3 and 4: analysis and the candidate state.
    AnalysisInput input;
    input.iteration = iter;
    input.phase = phase_;
    input.max_growth_actions = config_.max_growth_actions;
    input.rejected = rejected_;
    for (std::size_t i = 0; i < train.outcomes.size(); ++i) {
        input.records.push_back(train.outcomes[i].record);
        input.demos.push_back(&calibration_.train[i]);
        input.contexts.push_back(train.outcomes[i].context);
    }
    AnalyzeOptions ao;
    ao.decode = config_.decode;
    ao.observer = [&](std::string_view stage, const ModelRequest& request) {
        const auto text = canonical_json(request).dump();
        const auto digest = sha256_hex(text);
        prompt_index.push_back({{"step", "analysis"}, {"demo_id", nullptr}, {"stage", stage}, {"digest", digest}});
        if (config_.run_dir) {
            const auto path = *config_.run_dir / "prompts" / (digest + ".json");
            if (!fs::exists(path)) write_text(path, text);
        }
    };
    std::optional<Proposal> proposal;
    LibraryState candidate = head;
    std::string outcome;
    try {
        proposal = analyze(input, head, *backends_.orchestrator, ao);
        if (config_.run_dir) write_text(dir / "proposal.json", proposal_to_json(*proposal).dump(2) + "\n");
        candidate = apply(*proposal, head, iter);
        outcome = candidate.version == head.version ? "no_change" : "evaluated";
    } catch (const AnalysisError& e) {
        outcome = std::string("analysis_failed: ") + e.what();
    } catch (const ActionError& e) {
        outcome = std::string("invalid_proposal: ") + e.what();
    } catch (const UnscriptedRequestError&) {
        throw;
    } catch (const TranscriptError&) {
        throw;
    } catch (const BackendError& e) {
        outcome = std::string("analysis_failed: ") + e.what();
    }

    // Step 5: gate on the validation split.
    IterationRecord rec;
    rec.iter = iter;
    rec.phase = phase_;
    rec.train_accuracy = train.accuracy;
    rec.candidate_version = candidate.version;
    rec.val_accuracy = best_;
    if (outcome == "evaluated") {
        store_.put(candidate);
        const auto val = evaluate(calibration_.val, candidate, "step5");
        for (const auto& p : val.prompt_index) prompt_index.push_back(p);
        if (config_.run_dir) write_text(dir / "val_records.jsonl", jsonl(outcome_lines(val.outcomes)));
        rec.val_accuracy = val.accuracy;
        store_.annotate(candidate.version, val.accuracy);
        rec.accepted = val.accuracy > best_;
    }
    if (rec.accepted) {
        store_.rollback(candidate.version);
        best_ = rec.val_accuracy;
        since_improvement_ = 0;
        trajectory_.final_version = candidate.version;
        trajectory_.final_val_accuracy = best_;
    } else {
        ++since_improvement_;
        if (proposal) rejected_.push_back({iter, head.version, proposal->actions, rec.val_accuracy});
    }
    rec.best_so_far = best_;
    rec.library_counts = store_.head().counts();
    trajectory_.records.push_back(rec);
    ++next_iter_;

    if (config_.run_dir) {
        write_text(dir / "prompts.jsonl", jsonl(prompt_index));
        auto summary = to_json(rec);
        summary["base_version"] = head.version;
        summary["outcome"] = outcome;
        write_text(dir / "outcome.json", summary.dump(2) + "\n");
    }
    persist_state();
    return rec;
}

Trajectory EvolutionLoop::run(const IterationObserver& observer) {
    auto token = [&] {
        return (config_.run_dir ? config_.run_dir->string() : std::string("memory")) + "#iter=" + std::to_string(next_iter_);
    };
    try {
        if (!initialised_) initialise();
        while (next_iter_ <= config_.budget) {
            const auto rec = run_iteration();
            if (observer) observer(rec);
        }
    } catch (const LoopAborted& e) {
        throw LoopAborted(e.what(), token());
    } catch (const UnscriptedRequestError& e) {
        throw LoopAborted(e.what(), token());
    } catch (const TranscriptError& e) {
        throw LoopAborted(e.what(), token());
    }
    return trajectory_;
}

LibraryState select_final(const Trajectory& trajectory, const LibraryStore& store, std::string* warning) {
    const IterationRecord* best = nullptr;
    for (const auto& r : trajectory.records) {
        if (r.accepted && (!best || r.val_accuracy > best->val_accuracy)) best = &r;
    }
    if (!best) {
        if (warning) *warning = "no iteration was accepted; keeping the initial library";
        return store.checkout(trajectory.initial_version);
    }
    return store.checkout(best->candidate_version);
}

LibraryState replay_lineage(const LibraryStore& store, std::string_view version) {
    std::vector<LibraryState> chain;
    auto s = store.checkout(version);
    while (s.parent) {
        chain.push_back(s);
        s = store.checkout(*s.parent);
    }
    auto state = s;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        state = commit(state, it->actions, it->created_by.iteration, it->created_by.summary);
    }
    return state;
}

} // namespace evojudge
