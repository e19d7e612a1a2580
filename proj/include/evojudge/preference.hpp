#pragma once

#include "evojudge/image.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evojudge {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

// Ordered partition of candidate indices, best group first. A group with more
// than one member is a tie. Indices are 0-based and ascending within a group.
class Ranking {
public:
    Ranking() = default;

    // Validates that `groups` partition {0..K-1} and canonicalises group order.
    static Ranking from_groups(std::vector<std::vector<std::size_t>> groups);

    [[nodiscard]] const std::vector<std::vector<std::size_t>>& groups() const noexcept { return groups_; }
    [[nodiscard]] std::size_t size() const noexcept { return size_; }

    // Position of the group holding `index`; 0 is best.
    [[nodiscard]] std::size_t group_of(std::size_t index) const;

    bool operator==(const Ranking&) const = default;

private:
    std::vector<std::vector<std::size_t>> groups_;
    std::size_t size_ = 0;
};

// Sorts candidates by descending score, grouping equal scores.
Ranking induced_ranking(std::span<const int> scores);

// Exact, tie-aware agreement. Throws ValidationError when the rankings cover
// different index sets.
bool ranking_match(const Ranking& pred, const Ranking& gt);

struct RubricAssessment {
    std::string skill;
    std::size_t candidate = 0;
    std::string criterion;
    std::string finding;
    std::optional<int> partial_score;
};

struct ToolResult {
    std::string tool;
    std::size_t candidate = 0;
    std::string invoked_because;
    std::string query;
    nlohmann::json result;
    bool failed = false;
    std::string raw_text;
};

// Serialised trace of how a judgment was reached.
struct ReasoningChain {
    std::vector<RubricAssessment> rubric_assessments;
    std::vector<ToolResult> tool_results;
    std::string aggregation_note;
    // Scores exactly as decoded from the model before rounding and clamping.
    std::vector<double> raw_scores;
};

struct Demonstration {
    std::string id;
    ImageRef source_image;
    std::string instruction;
    std::vector<ImageRef> candidates;
    std::optional<std::vector<int>> gt_scores;
    std::optional<Ranking> gt_ranking;

    [[nodiscard]] std::size_t k() const noexcept { return candidates.size(); }
    [[nodiscard]] bool has_ground_truth() const noexcept { return gt_scores || gt_ranking; }

    // Ground-truth ranking, derived from gt_scores when not given explicitly.
    [[nodiscard]] Ranking ground_truth() const;

    // Throws ValidationError when an invariant is violated.
    void validate() const;
};

struct Judgment {
    std::string demo_id;
    std::vector<int> scores;
    Ranking ranking;
    ReasoningChain chain;
    std::string context_version;

    // Builds a judgment whose ranking is induced from `scores`.
    static Judgment from_scores(std::string demo_id, std::vector<int> scores, ReasoningChain chain,
                                std::string context_version);
};

struct EvalRecord {
    std::string demo_id;
    std::optional<Judgment> judgment;  // empty when judging failed
    std::string failure;
    Ranking gt;
    bool correct = false;
    double score_gap = 0.0;  // diagnostic only
};

// Scores `judgment` against `demo`'s ground truth.
EvalRecord make_eval_record(const Demonstration& demo, const Judgment& judgment);
// A failed judgment; always counted as incorrect.
EvalRecord make_failed_record(const Demonstration& demo, std::string failure);

// Fraction of correct records. Throws ValidationError on empty input.
double ranking_accuracy(std::span<const EvalRecord> records);

struct PairwiseAccuracy {
    double value = 0.0;
    std::size_t pairs = 0;
    std::size_t skipped_records = 0;  // records with K < 2
};

// Fraction of unordered candidate pairs whose tie-aware relation matches.
PairwiseAccuracy pairwise_accuracy(std::span<const EvalRecord> records);

struct BucketAccuracy {
    std::size_t k = 0;
    std::size_t count = 0;
    double ranking = 0.0;
    double pairwise = 0.0;
};

// ranking/pairwise accuracy grouped by number of candidates, ascending K.
std::vector<BucketAccuracy> accuracy_by_k(std::span<const EvalRecord> records);

// Reads demonstrations from JSONL. Image paths are kept relative; resolve them
// against the image root with load_image.
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& jsonl);
std::vector<Demonstration> parse_demonstrations(std::string_view jsonl_text);

void to_json(nlohmann::json& j, const Ranking& r);
void from_json(const nlohmann::json& j, Ranking& r);
void to_json(nlohmann::json& j, const ReasoningChain& c);
void from_json(const nlohmann::json& j, ReasoningChain& c);
void to_json(nlohmann::json& j, const Judgment& v);
void from_json(const nlohmann::json& j, Judgment& v);
void to_json(nlohmann::json& j, const EvalRecord& v);
void to_json(nlohmann::json& j, const Demonstration& d);
void from_json(const nlohmann::json& j, Demonstration& d);

} // namespace evojudge
