#pragma once

// Routing of library entries into an evaluation context, and analysis of
// judged training records into library update proposals.

#include "evojudge/judge.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/preference.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace evojudge {

struct DisclosureRecord {
    std::string name;
    bool loaded = false;
    std::string reason;   // the condition the model cited, or why nothing was loaded
    bool warning = false; // the model named something that is not in the library
};

struct RoutingDecision {
    std::vector<std::string> selected_skills;
    std::vector<std::string> selected_tools;
    std::vector<DisclosureRecord> disclosure_log;
    std::string rationale;
};

nlohmann::json to_json(const RoutingDecision& d);

struct RouteOptions {
    std::filesystem::path image_root;
    DecodeParams decode;
    // Produces captions when the orchestrator backend is text-only.
    Backend* caption_backend = nullptr;
    RequestObserver observer;
};

// Two stages: names and descriptions first, then full bodies of the tools the
// first stage picked. Unknown names are dropped with a warning record.
RoutingDecision route(const Demonstration& demo, const LibraryState& state, Backend& backend,
                      const RouteOptions& options = {});

EvaluationContext assemble_context(const RoutingDecision& decision, const LibraryState& state,
                                   std::string_view instruction);

inline const std::vector<std::string>& root_cause_labels() {
    static const std::vector<std::string> labels{"missing-criterion", "rubric-misapplication",
                                                 "perceptual-hallucination", "other"};
    return labels;
}

struct ErrorCase {
    std::string demo_id;
    std::string root_cause;
};

struct SuccessCase {
    std::string demo_id;
    std::vector<std::string> instrumental;
};

struct Proposal {
    std::vector<ErrorCase> error_cases;
    std::vector<SuccessCase> success_cases;
    std::vector<LibraryAction> actions;
    std::string expected_effect;
};

nlohmann::json proposal_to_json(const Proposal& p);

struct EntryCredit {
    int correct = 0;
    int incorrect = 0;
};

// Appearances of each entry in correct and incorrect chains; `contexts` holds
// the context names each record was judged with.
std::map<std::string, EntryCredit> entry_credits(const std::vector<EvalRecord>& records,
                                                 const std::vector<std::vector<std::string>>& contexts);

struct RejectedProposal {
    int iteration = 0;
    std::string base_version;
    std::vector<LibraryAction> actions;
    double val_accuracy = 0.0;
};

enum class Phase { Growth, Pruning };
std::string_view to_string(Phase p) noexcept;
Phase phase_from_string(std::string_view s);

struct AnalysisInput {
    std::vector<EvalRecord> records;             // training records only
    std::vector<const Demonstration*> demos;     // parallel to records
    std::vector<std::vector<std::string>> contexts;  // parallel to records
    int iteration = 0;
    Phase phase = Phase::Growth;
    int max_growth_actions = 1;
    std::vector<RejectedProposal> rejected;
};

struct AnalyzeOptions {
    DecodeParams decode;
    RequestObserver observer;
};

// Throws AnalysisError when the reply fails validation twice.
Proposal analyze(const AnalysisInput& input, const LibraryState& state, Backend& backend,
                 const AnalyzeOptions& options = {});

// Checks a decoded reply; returns the proposal or throws ValidationError.
Proposal parse_proposal(const nlohmann::json& j, const std::vector<std::string>& analyzed_ids, int max_growth_actions);

// Candidate state for the proposal. Throws ActionError.
LibraryState apply(const Proposal& proposal, const LibraryState& state, int iteration);

} // namespace evojudge
