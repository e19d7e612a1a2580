#include "evojudge/preference.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace evojudge {

Ranking Ranking::from_groups(std::vector<std::vector<std::size_t>> groups) {
    std::size_t total = 0;
    for (auto& g : groups) {
        if (g.empty()) throw ValidationError("ranking has an empty group");
        std::sort(g.begin(), g.end());
        total += g.size();
    }
    std::vector<bool> seen(total, false);
    for (const auto& g : groups) {
        for (auto idx : g) {
            if (idx >= total || seen[idx]) {
                throw ValidationError("ranking groups do not partition 0.." + std::to_string(total - 1));
            }
            seen[idx] = true;
        }
    }
    Ranking r;
    r.groups_ = std::move(groups);
    r.size_ = total;
    return r;
}

std::size_t Ranking::group_of(std::size_t index) const {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (std::find(groups_[g].begin(), groups_[g].end(), index) != groups_[g].end()) return g;
    }
    throw ValidationError("index " + std::to_string(index) + " not in ranking");
}

Ranking induced_ranking(std::span<const int> scores) {
    if (scores.empty()) throw ValidationError("cannot rank an empty score list");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < kMinScore || scores[i] > kMaxScore) {
            throw ValidationError("score at index " + std::to_string(i) + " out of range [1,5]: " +
                                  std::to_string(scores[i]));
        }
    }
    std::map<int, std::vector<std::size_t>, std::greater<>> by_score;
    for (std::size_t i = 0; i < scores.size(); ++i) by_score[scores[i]].push_back(i);
    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(by_score.size());
    for (auto& [score, members] : by_score) groups.push_back(std::move(members));
    return Ranking::from_groups(std::move(groups));
}

bool ranking_match(const Ranking& pred, const Ranking& gt) {
    if (pred.size() != gt.size()) {
        throw ValidationError("rankings cover different index sets (" + std::to_string(pred.size()) + " vs " +
                              std::to_string(gt.size()) + ")");
    }
    return pred.groups() == gt.groups();
}

Ranking Demonstration::ground_truth() const {
    if (gt_ranking) return *gt_ranking;
    if (gt_scores) return induced_ranking(*gt_scores);
    throw ValidationError("demonstration " + id + " has no ground truth");
}

void Demonstration::validate() const {
    if (id.empty()) throw ValidationError("demonstration id is empty");
    if (candidates.empty()) throw ValidationError("demonstration " + id + " has no candidates");
    if (gt_scores) {
        if (gt_scores->size() != candidates.size()) {
            throw ValidationError("demonstration " + id + ": gt_scores has " + std::to_string(gt_scores->size()) +
                                  " entries for " + std::to_string(candidates.size()) + " candidates");
        }
        (void)induced_ranking(*gt_scores);
    }
    if (gt_ranking) {
        if (gt_ranking->size() != candidates.size()) {
            throw ValidationError("demonstration " + id + ": gt_ranking size mismatch");
        }
        if (gt_scores && !(induced_ranking(*gt_scores) == *gt_ranking)) {
            throw ValidationError("demonstration " + id + ": gt_ranking disagrees with gt_scores");
        }
    }
}

Judgment Judgment::from_scores(std::string demo_id, std::vector<int> scores, ReasoningChain chain,
                               std::string context_version) {
    Judgment j;
    j.ranking = induced_ranking(scores);
    j.demo_id = std::move(demo_id);
    j.scores = std::move(scores);
    j.chain = std::move(chain);
    j.context_version = std::move(context_version);
    return j;
}

EvalRecord make_eval_record(const Demonstration& demo, const Judgment& judgment) {
    EvalRecord rec;
    rec.demo_id = demo.id;
    rec.gt = demo.ground_truth();
    rec.correct = ranking_match(judgment.ranking, rec.gt);
    if (demo.gt_scores && demo.gt_scores->size() == judgment.scores.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < judgment.scores.size(); ++i) {
            total += std::abs(judgment.scores[i] - (*demo.gt_scores)[i]);
        }
        rec.score_gap = total / static_cast<double>(judgment.scores.size());
    }
    rec.judgment = judgment;
    return rec;
}

EvalRecord make_failed_record(const Demonstration& demo, std::string failure) {
    EvalRecord rec;
    rec.demo_id = demo.id;
    rec.gt = demo.ground_truth();
    rec.failure = std::move(failure);
    rec.correct = false;
    return rec;
}

double ranking_accuracy(std::span<const EvalRecord> records) {
    if (records.empty()) throw ValidationError("ranking_accuracy of an empty record set");
    const auto correct = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.correct; });
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

namespace {

// -1: i ranked above j, 0: tie, +1: j ranked above i.
int relation(const Ranking& r, std::size_t i, std::size_t j) {
    const auto gi = r.group_of(i);
    const auto gj = r.group_of(j);
    return gi < gj ? -1 : (gi == gj ? 0 : 1);
}

struct PairCount {
    std::size_t agree = 0;
    std::size_t total = 0;
    std::size_t skipped = 0;
};

PairCount count_pairs(std::span<const EvalRecord> records) {
    PairCount c;
    for (const auto& rec : records) {
        const auto k = rec.gt.size();
        if (k < 2) {
            ++c.skipped;
            continue;
        }
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                ++c.total;
                if (rec.judgment && relation(rec.judgment->ranking, i, j) == relation(rec.gt, i, j)) ++c.agree;
            }
        }
    }
    return c;
}

} // namespace

PairwiseAccuracy pairwise_accuracy(std::span<const EvalRecord> records) {
    const auto c = count_pairs(records);
    PairwiseAccuracy out;
    out.pairs = c.total;
    out.skipped_records = c.skipped;
    out.value = c.total == 0 ? 0.0 : static_cast<double>(c.agree) / static_cast<double>(c.total);
    return out;
}

std::vector<BucketAccuracy> accuracy_by_k(std::span<const EvalRecord> records) {
    std::map<std::size_t, std::vector<EvalRecord>> buckets;
    for (const auto& r : records) buckets[r.gt.size()].push_back(r);
    std::vector<BucketAccuracy> out;
    for (const auto& [k, recs] : buckets) {
        BucketAccuracy b;
        b.k = k;
        b.count = recs.size();
        b.ranking = ranking_accuracy(recs);
        b.pairwise = pairwise_accuracy(recs).value;
        out.push_back(b);
    }
    return out;
}

std::vector<Demonstration> parse_demonstrations(std::string_view jsonl_text) {
    std::vector<Demonstration> demos;
    std::istringstream in{std::string(jsonl_text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto d = nlohmann::json::parse(line).get<Demonstration>();
            d.validate();
            demos.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return demos;
}

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& jsonl) {
    return parse_demonstrations(read_file(jsonl));
}

void to_json(nlohmann::json& j, const Ranking& r) { j = r.groups(); }

void from_json(const nlohmann::json& j, Ranking& r) {
    r = Ranking::from_groups(j.get<std::vector<std::vector<std::size_t>>>());
}

void to_json(nlohmann::json& j, const ReasoningChain& c) {
    auto assessments = nlohmann::json::array();
    for (const auto& a : c.rubric_assessments) {
        nlohmann::json item{{"skill", a.skill}, {"candidate", a.candidate}, {"criterion", a.criterion},
                            {"finding", a.finding}};
        item["partial_score"] = a.partial_score ? nlohmann::json(*a.partial_score) : nlohmann::json(nullptr);
        assessments.push_back(std::move(item));
    }
    auto tools = nlohmann::json::array();
    for (const auto& t : c.tool_results) {
        nlohmann::json item{{"tool", t.tool},       {"candidate", t.candidate}, {"invoked_because", t.invoked_because},
                            {"query", t.query},     {"result", t.result},       {"failed", t.failed}};
        if (t.failed) item["raw_text"] = t.raw_text;
        tools.push_back(std::move(item));
    }
    j = nlohmann::json{{"rubric_assessments", std::move(assessments)},
                       {"tool_results", std::move(tools)},
                       {"aggregation_note", c.aggregation_note},
                       {"raw_scores", c.raw_scores}};
}

void from_json(const nlohmann::json& j, ReasoningChain& c) {
    c = ReasoningChain{};
    for (const auto& a : j.value("rubric_assessments", nlohmann::json::array())) {
        RubricAssessment r;
        r.skill = a.at("skill").get<std::string>();
        r.candidate = a.at("candidate").get<std::size_t>();
        r.criterion = a.value("criterion", "");
        r.finding = a.value("finding", "");
        if (a.contains("partial_score") && !a["partial_score"].is_null()) r.partial_score = a["partial_score"].get<int>();
        c.rubric_assessments.push_back(std::move(r));
    }
    for (const auto& t : j.value("tool_results", nlohmann::json::array())) {
        ToolResult r;
        r.tool = t.at("tool").get<std::string>();
        r.candidate = t.value("candidate", std::size_t{0});
        r.invoked_because = t.value("invoked_because", "");
        r.query = t.value("query", "");
        r.result = t.value("result", nlohmann::json());
        r.failed = t.value("failed", false);
        r.raw_text = t.value("raw_text", "");
        c.tool_results.push_back(std::move(r));
    }
    c.aggregation_note = j.value("aggregation_note", "");
    c.raw_scores = j.value("raw_scores", std::vector<double>{});
}

void to_json(nlohmann::json& j, const Judgment& v) {
    j = nlohmann::json{{"demo_id", v.demo_id},
                       {"scores", v.scores},
                       {"ranking", v.ranking},
                       {"chain", v.chain},
                       {"context_version", v.context_version}};
}

void from_json(const nlohmann::json& j, Judgment& v) {
    v = Judgment::from_scores(j.at("demo_id").get<std::string>(), j.at("scores").get<std::vector<int>>(),
                              j.value("chain", nlohmann::json::object()).get<ReasoningChain>(),
                              j.value("context_version", ""));
    if (j.contains("ranking") && !(j["ranking"].get<Ranking>() == v.ranking)) {
        throw ValidationError("judgment ranking disagrees with its scores");
    }
}

void to_json(nlohmann::json& j, const EvalRecord& v) {
    j = nlohmann::json{{"demo_id", v.demo_id}, {"correct", v.correct}, {"score_gap", v.score_gap}, {"gt", v.gt}};
    j["judgment"] = v.judgment ? nlohmann::json(*v.judgment) : nlohmann::json(nullptr);
    if (!v.failure.empty()) j["failure"] = v.failure;
}

namespace {

nlohmann::json image_to_json(const ImageRef& ref) {
    if (ref.is_inline()) return {{"base64", base64_encode(ref.bytes)}, {"media_type", ref.media_type}};
    return ref.path;
}

ImageRef image_from_json(const nlohmann::json& j) {
    if (j.is_string()) return ImageRef::from_path(j.get<std::string>());
    return ImageRef::from_bytes(base64_decode(j.at("base64").get<std::string>()), j.value("media_type", ""));
}

} // namespace

void to_json(nlohmann::json& j, const Demonstration& d) {
    j = nlohmann::json{{"id", d.id}, {"source_image", image_to_json(d.source_image)}, {"instruction", d.instruction}};
    auto cands = nlohmann::json::array();
    for (const auto& c : d.candidates) cands.push_back(image_to_json(c));
    j["candidates"] = std::move(cands);
    if (d.gt_scores) j["gt_scores"] = *d.gt_scores;
    if (d.gt_ranking) j["gt_ranking"] = *d.gt_ranking;
}

void from_json(const nlohmann::json& j, Demonstration& d) {
    d = Demonstration{};
    d.id = j.at("id").get<std::string>();
    d.source_image = image_from_json(j.at("source_image"));
    d.instruction = j.at("instruction").get<std::string>();
    for (const auto& c : j.at("candidates")) d.candidates.push_back(image_from_json(c));
    if (j.contains("gt_scores") && !j["gt_scores"].is_null()) d.gt_scores = j["gt_scores"].get<std::vector<int>>();
    if (j.contains("gt_ranking") && !j["gt_ranking"].is_null()) d.gt_ranking = j["gt_ranking"].get<Ranking>();
}

} // namespace evojudge
