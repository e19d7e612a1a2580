#include "evojudge/orchestrator.hpp"

#include "evojudge/errors.hpp"
#include "evojudge/prompts.hpp"

#include <algorithm>
#include <set>

namespace evojudge {

namespace {

ModelRequest orchestrator_request(const PromptText& prompt, const std::vector<ImageRef>& images, ResponseSchema schema,
                                  const DecodeParams& decode) {
    ModelRequest r;
    r.role_hint = RoleHint::Orchestrator;
    r.decode = decode;
    r.response_schema = std::move(schema);
    r.messages.push_back({"system", {MessagePart::of_text(prompt.system)}});
    Message user{"user", {MessagePart::of_text(prompt.user)}};
    for (const auto& img : images) user.parts.push_back(MessagePart::of_image(img));
    r.messages.push_back(std::move(user));
    return r;
}

// Structured call with one reformat retry; `check` throws ValidationError.
template <typename T>
T checked_call(Backend& backend, const ModelRequest& request, std::string_view stage, const RequestObserver& observer,
               const std::function<T(const nlohmann::json&)>& check) {
    std::string raw;
    std::string error;
    try {
        if (observer) observer(stage, request);
        const auto r = backend.complete(request);
        try {
            return check(*r.structured);
        } catch (const ValidationError& e) {
            raw = r.text;
            error = e.what();
        } catch (const nlohmann::json::exception& e) {
            raw = r.text;
            error = e.what();
        }
    } catch (const StructuredOutputError& e) {
        raw = e.raw_text();
        error = e.what();
    }
    const auto retry = reformat_request(request, raw, error);
    if (observer) observer(std::string(stage) + "/reformat", retry);
    const auto r = backend.complete(retry);
    try {
        return check(*r.structured);
    } catch (const nlohmann::json::exception& e) {
        throw StructuredOutputError(e.what(), r.text);
    } catch (const ValidationError& e) {
        throw StructuredOutputError(e.what(), r.text);
    }
}

std::string summary_lines(const LibraryState& state) {
    std::string out;
    for (const auto& s : entry_summaries(state)) {
        out += "- " + s.name + " (" + std::string(to_string(s.kind)) + "): " + s.description + "\n";
    }
    if (out.empty()) return "(empty)";
    out.pop_back();
    return out;
}

} // namespace

RoutingDecision route(const Demonstration& demo, const LibraryState& state, Backend& backend,
                      const RouteOptions& options) {
    RoutingDecision d;
    if (state.active_entries().empty()) {
        d.rationale = "The library is empty.";
        return d;
    }
    std::vector<ImageRef> images;
    images.push_back(load_image(demo.source_image, options.image_root));
    for (const auto& c : demo.candidates) images.push_back(load_image(c, options.image_root));

    std::string captions;
    std::vector<ImageRef> attached;
    if (backend.multimodal()) {
        captions = "The source image comes first, followed by each candidate in index order.";
        attached = images;
    } else if (options.caption_backend) {
        captions = "Image captions:";
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto label = i == 0 ? std::string("source image") : "candidate " + std::to_string(i - 1);
            ModelRequest r;
            r.role_hint = RoleHint::Subagent;
            r.decode = options.decode;
            r.messages.push_back({"system", {MessagePart::of_text(render_prompt("caption", {{"label", label}}).system)}});
            r.messages.push_back({"user", {MessagePart::of_text(label), MessagePart::of_image(images[i])}});
            if (options.observer) options.observer("caption", r);
            captions += "\n- " + label + ": " + normalize_text(options.caption_backend->complete(r).text);
        }
    } else {
        captions = "No image descriptions are available.";
    }

    // Stage one: names and descriptions only.
    const auto p1 = render_prompt("route_stage1", {{"entry_summaries", summary_lines(state)},
                                                   {"instruction", demo.instruction},
                                                   {"captions", captions}});
    const auto r1 = orchestrator_request(
        p1, attached, {{"skills", "array<string>"}, {"tools", "array<string>"}, {"rationale", "string"}}, options.decode);
    const auto stage1 = checked_call<nlohmann::json>(backend, r1, "route_stage1", options.observer,
                                                     [](const nlohmann::json& j) { return j; });
    d.rationale = stage1["rationale"].get<std::string>();

    std::set<std::string> picked;
    auto take = [&](const std::string& name, EntryKind kind, std::vector<std::string>& into) {
        const auto* e = state.find_active(name);
        if (!e || e->kind() != kind) {
            d.disclosure_log.push_back({name, false, "dropped: no active " + std::string(to_string(kind)) + " of that name", true});
            return;
        }
        if (picked.insert(name).second) into.push_back(name);
    };
    for (const auto& n : stage1["skills"]) take(n.get<std::string>(), EntryKind::Skill, d.selected_skills);
    std::vector<std::string> tool_candidates;
    for (const auto& n : stage1["tools"]) take(n.get<std::string>(), EntryKind::Tool, tool_candidates);

    // Stage two: full bodies of the tools picked above.
    if (!tool_candidates.empty()) {
        std::string docs;
        for (const auto& n : tool_candidates) docs += render_entry(*state.find_active(n));
        const auto p2 = render_prompt("route_stage2", {{"tool_documents", docs}, {"instruction", demo.instruction}});
        const auto r2 = orchestrator_request(p2, {}, {{"tools", "array<object>"}}, options.decode);
        const auto stage2 = checked_call<nlohmann::json>(backend, r2, "route_stage2", options.observer,
                                                         [](const nlohmann::json& j) {
            for (const auto& t : j["tools"]) {
                if (!t.is_object() || !t.contains("name") || !t["name"].is_string() || !t.contains("load") ||
                    !t["load"].is_boolean()) {
                    throw ValidationError("each tool decision needs a string 'name' and a boolean 'load'");
                }
            }
            return j;
        });
        for (const auto& n : tool_candidates) {
            const auto it = std::find_if(stage2["tools"].begin(), stage2["tools"].end(),
                                         [&](const nlohmann::json& t) { return t["name"] == n; });
            if (it == stage2["tools"].end()) {
                d.disclosure_log.push_back({n, false, "no decision returned", false});
                continue;
            }
            const bool load = (*it)["load"].get<bool>();
            d.disclosure_log.push_back({n, load, it->value("reason", ""), false});
            if (load) d.selected_tools.push_back(n);
        }
        for (const auto& t : stage2["tools"]) {
            const auto n = t["name"].get<std::string>();
            if (std::find(tool_candidates.begin(), tool_candidates.end(), n) == tool_candidates.end()) {
                d.disclosure_log.push_back({n, false, "dropped: not offered at stage one", true});
            }
        }
    }
    return d;
}

nlohmann::json to_json(const RoutingDecision& d) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& r : d.disclosure_log) {
        log.push_back({{"name", r.name}, {"loaded", r.loaded}, {"reason", r.reason}, {"warning", r.warning}});
    }
    return {{"selected_skills", d.selected_skills},
            {"selected_tools", d.selected_tools},
            {"disclosure_log", std::move(log)},
            {"rationale", d.rationale}};
}

EvaluationContext assemble_context(const RoutingDecision& decision, const LibraryState& state,
                                   std::string_view instruction) {
    return make_context(state, decision.selected_skills, decision.selected_tools, instruction);
}

// ---------------------------------------------------------------------------
// Analysis

std::string_view to_string(Phase p) noexcept { return p == Phase::Growth ? "growth" : "pruning"; }

Phase phase_from_string(std::string_view s) {
    if (s == "growth") return Phase::Growth;
    if (s == "pruning") return Phase::Pruning;
    throw ValidationError("unknown phase '" + std::string(s) + "'");
}

std::map<std::string, EntryCredit> entry_credits(const std::vector<EvalRecord>& records,
                                                 const std::vector<std::vector<std::string>>& contexts) {
    if (records.size() != contexts.size()) throw ValidationError("records and contexts differ in length");
    std::map<std::string, EntryCredit> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (const auto& n : contexts[i]) {
            auto& c = out[n];
            (records[i].correct ? c.correct : c.incorrect) += 1;
        }
    }
    return out;
}

nlohmann::json proposal_to_json(const Proposal& p) {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : p.error_cases) errors.push_back({{"demo_id", e.demo_id}, {"root_cause", e.root_cause}});
    nlohmann::json successes = nlohmann::json::array();
    for (const auto& s : p.success_cases) successes.push_back({{"demo_id", s.demo_id}, {"instrumental", s.instrumental}});
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : p.actions) actions.push_back(action_to_json(a));
    return {{"analysis", {{"error_cases", std::move(errors)}, {"success_cases", std::move(successes)}}},
            {"actions", std::move(actions)},
            {"expected_effect", p.expected_effect}};
}

Proposal parse_proposal(const nlohmann::json& j, const std::vector<std::string>& analyzed_ids, int max_growth_actions) {
    const std::set<std::string> known(analyzed_ids.begin(), analyzed_ids.end());
    auto require_known = [&](const std::string& id) {
        if (!known.contains(id)) throw ValidationError("case '" + id + "' was not among the analyzed records");
    };
    Proposal p;
    const auto& analysis = j.at("analysis");
    if (!analysis.is_object()) throw ValidationError("'analysis' must be an object");
    for (const auto& e : analysis.value("error_cases", nlohmann::json::array())) {
        ErrorCase ec{e.at("demo_id").get<std::string>(), e.at("root_cause").get<std::string>()};
        require_known(ec.demo_id);
        const auto& labels = root_cause_labels();
        if (std::find(labels.begin(), labels.end(), ec.root_cause) == labels.end()) {
            throw ValidationError("root cause '" + ec.root_cause + "' is not one of the allowed labels");
        }
        p.error_cases.push_back(std::move(ec));
    }
    for (const auto& s : analysis.value("success_cases", nlohmann::json::array())) {
        SuccessCase sc{s.at("demo_id").get<std::string>(), s.value("instrumental", std::vector<std::string>{})};
        require_known(sc.demo_id);
        p.success_cases.push_back(std::move(sc));
    }
    int growth = 0;
    for (const auto& a : j.at("actions")) {
        LibraryAction action;
        try {
            action = action_from_json(a);
        } catch (const ParseError& e) {
            throw ValidationError(std::string("action document: ") + e.what());
        }
        if (action.cases.empty()) throw ValidationError("action on '" + action.target + "' cites no case");
        for (const auto& c : action.cases) require_known(c);
        if (action.op != LibraryAction::Op::Prune) ++growth;
        p.actions.push_back(std::move(action));
    }
    if (p.actions.empty()) throw ValidationError("proposal has no actions");
    if (growth > max_growth_actions) {
        throw ValidationError("proposal has " + std::to_string(growth) + " non-prune actions, at most " +
                              std::to_string(max_growth_actions) + " allowed");
    }
    p.expected_effect = j.at("expected_effect").get<std::string>();
    return p;
}

Proposal analyze(const AnalysisInput& input, const LibraryState& state, Backend& backend,
                 const AnalyzeOptions& options) {
    if (input.records.size() != input.demos.size() || input.records.size() != input.contexts.size()) {
        throw ValidationError("analysis input vectors differ in length");
    }
    if (input.records.empty()) throw AnalysisError("no records to analyse");

    std::string credits;
    for (const auto& [name, c] : entry_credits(input.records, input.contexts)) {
        credits += nlohmann::json{{"name", name}, {"correct", c.correct}, {"incorrect", c.incorrect}}.dump() + "\n";
    }
    std::string rejected;
    for (const auto& r : input.rejected) {
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& a : r.actions) {
            actions.push_back({{"op", to_string(a.op)}, {"target", a.target}, {"names", a.names}});
        }
        rejected += nlohmann::json{{"iteration", r.iteration},
                                   {"base_version", r.base_version},
                                   {"actions", actions},
                                   {"val_accuracy", r.val_accuracy}}
                        .dump() +
                    "\n";
    }
    std::string records;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < input.records.size(); ++i) {
        const auto& r = input.records[i];
        ids.push_back(r.demo_id);
        nlohmann::json line{{"demo_id", r.demo_id},
                            {"correct", r.correct},
                            {"instruction", input.demos[i]->instruction},
                            {"gt", r.gt},
                            {"predicted", r.judgment ? nlohmann::json(r.judgment->ranking) : nlohmann::json(nullptr)},
                            {"context", input.contexts[i]},
                            {"note", r.judgment ? r.judgment->chain.aggregation_note : ""},
                            {"failure", r.failure}};
        records += line.dump() + "\n";
    }
    auto strip = [](std::string s) {
        if (!s.empty() && s.back() == '\n') s.pop_back();
        return s.empty() ? std::string("(none)") : s;
    };
    const auto reference = render_prompt("format_reference").system;
    const auto prompt = render_prompt(input.phase == Phase::Growth ? "analysis_growth" : "analysis_consolidation",
                                      {{"max_growth_actions", std::to_string(input.max_growth_actions)},
                                       {"format_reference", reference},
                                       {"iteration", std::to_string(input.iteration)},
                                       {"phase", std::string(to_string(input.phase))},
                                       {"library_version", state.version},
                                       {"library", summary_lines(state)},
                                       {"credits", strip(credits)},
                                       {"rejected", strip(rejected)},
                                       {"records", strip(records)}});
    const auto request = orchestrator_request(
        prompt, {}, {{"analysis", "object"}, {"actions", "array<object>"}, {"expected_effect", "string"}}, options.decode);
    try {
        return checked_call<Proposal>(backend, request, "analysis", options.observer, [&](const nlohmann::json& j) {
            return parse_proposal(j, ids, input.max_growth_actions);
        });
    } catch (const StructuredOutputError& e) {
        throw AnalysisError(std::string("unusable proposal: ") + e.what());
    }
}

LibraryState apply(const Proposal& proposal, const LibraryState& state, int iteration) {
    std::string summary;
    for (const auto& a : proposal.actions) {
        summary += (summary.empty() ? "" : "; ") + std::string(to_string(a.op)) + " " +
                   (a.op == LibraryAction::Op::Prune ? std::to_string(a.names.size()) + " entries" : a.target);
    }
    return commit(state, proposal.actions, iteration, summary);
}

} // namespace evojudge
