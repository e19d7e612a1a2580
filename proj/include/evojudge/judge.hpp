#pragma once

// The Sub-Agent's reasoning chain: rubric application per skill, conditional
// tool analysis, then one aggregation call that yields the scores.

#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/preference.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace evojudge {

struct EvaluationContext {
    std::vector<SkillDoc> skills;
    std::vector<ToolDoc> tools;
    std::string library_version;
    std::string instruction_digest;

    [[nodiscard]] bool empty() const noexcept { return skills.empty() && tools.empty(); }
    // Skill names then tool names, each in context order.
    [[nodiscard]] std::vector<std::string> names() const;
};

// Context holding the full documents of the named entries. Throws
// ValidationError when a name is not active in `state`.
EvaluationContext make_context(const LibraryState& state, const std::vector<std::string>& skills,
                               const std::vector<std::string>& tools, std::string_view instruction);

// Called once per model request with a stage label, e.g. "rubric_application".
using RequestObserver = std::function<void(std::string_view stage, const ModelRequest&)>;

struct JudgeOptions {
    std::filesystem::path image_root;  // for path-referenced images
    DecodeParams decode;
    Backend* tool_backend = nullptr;   // tool queries go to the Sub-Agent backend when null
    RequestObserver observer;
};

// Runs the chain. Throws JudgeError when the final scores cannot be obtained
// (after one reformat retry), or when a backend call fails.
Judgment judge(const Demonstration& demo, const EvaluationContext& ctx, Backend& backend,
               const JudgeOptions& options = {});

// Judges with candidates presented in `order` (order[i] = original index shown
// at position i) and maps scores and chain indices back to the original order.
Judgment judge_permuted(const Demonstration& demo, const std::vector<std::size_t>& order,
                        const EvaluationContext& ctx, Backend& backend, const JudgeOptions& options = {});

// Half-up rounding to an integer, clamped to [1, 5].
int round_score(double raw) noexcept;

// Shared by the judge and the orchestrator: appends the model's reply and a
// reformat instruction, then asks again.
ModelRequest reformat_request(const ModelRequest& original, const std::string& raw_reply, const std::string& error);

} // namespace evojudge
