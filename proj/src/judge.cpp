#include "evojudge/judge.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/prompts.hpp"

#include <cmath>
#include <optional>

namespace evojudge {

std::vector<std::string> EvaluationContext::names() const {
    std::vector<std::string> out;
    for (const auto& s : skills) out.push_back(s.name);
    for (const auto& t : tools) out.push_back(t.name);
    return out;
}

EvaluationContext make_context(const LibraryState& state, const std::vector<std::string>& skills,
                               const std::vector<std::string>& tools, std::string_view instruction) {
    EvaluationContext ctx;
    ctx.library_version = state.version;
    ctx.instruction_digest = sha256_hex(instruction);
    for (const auto& n : skills) {
        const auto* e = state.find_active(n);
        if (!e || e->kind() != EntryKind::Skill) throw ValidationError("no active skill '" + n + "'");
        ctx.skills.push_back(e->skill());
    }
    for (const auto& n : tools) {
        const auto* e = state.find_active(n);
        if (!e || e->kind() != EntryKind::Tool) throw ValidationError("no active tool '" + n + "'");
        ctx.tools.push_back(e->tool());
    }
    return ctx;
}

int round_score(double raw) noexcept {
    if (!std::isfinite(raw)) return kMinScore;
    const double r = std::floor(raw + 0.5);
    if (r < kMinScore) return kMinScore;
    if (r > kMaxScore) return kMaxScore;
    return static_cast<int>(r);
}

namespace {

std::string describe_schema(const ResponseSchema& schema) {
    std::string out;
    for (const auto& f : schema) out += (out.empty() ? "" : ", ") + f.name + " (" + f.type + ")";
    return out;
}

} // namespace

ModelRequest reformat_request(const ModelRequest& original, const std::string& raw_reply, const std::string& error) {
    ModelRequest r = original;
    const auto prompt = render_prompt(
        "reformat", {{"error", error}, {"schema", original.response_schema ? describe_schema(*original.response_schema) : "-"}});
    r.messages.push_back({"assistant", {MessagePart::of_text(raw_reply.empty() ? "(empty reply)" : raw_reply)}});
    r.messages.push_back({"user", {MessagePart::of_text(prompt.user)}});
    return r;
}

namespace {

using Check = std::function<std::optional<std::string>(const nlohmann::json&)>;

ModelRequest make_request(RoleHint role, const PromptText& prompt, const std::vector<ImageRef>& images,
                          std::optional<ResponseSchema> schema, const DecodeParams& decode) {
    ModelRequest r;
    r.role_hint = role;
    r.decode = decode;
    r.response_schema = std::move(schema);
    r.messages.push_back({"system", {MessagePart::of_text(prompt.system)}});
    Message user{"user", {MessagePart::of_text(prompt.user)}};
    for (const auto& img : images) user.parts.push_back(MessagePart::of_image(img));
    r.messages.push_back(std::move(user));
    return r;
}

// One structured call with a single reformat retry. Throws StructuredOutputError
// when the second reply is unusable too.
nlohmann::json structured_call(Backend& backend, const ModelRequest& request, std::string_view stage,
                               const RequestObserver& observer, const Check& check) {
    std::string raw;
    std::string error;
    try {
        if (observer) observer(stage, request);
        auto r = backend.complete(request);
        const auto problem = check(*r.structured);
        if (!problem) return *r.structured;
        raw = r.text;
        error = *problem;
    } catch (const StructuredOutputError& e) {
        raw = e.raw_text();
        error = e.what();
    }
    const auto retry = reformat_request(request, raw, error);
    if (observer) observer(std::string(stage) + "/reformat", retry);
    auto r = backend.complete(retry);
    if (const auto problem = check(*r.structured)) throw StructuredOutputError(*problem, r.text);
    return *r.structured;
}

std::optional<std::string> check_index(const nlohmann::json& item, std::size_t k) {
    if (!item.contains("candidate") || !item["candidate"].is_number_integer()) return "missing integer 'candidate'";
    const auto c = item["candidate"].get<std::int64_t>();
    if (c < 0 || static_cast<std::size_t>(c) >= k) return "candidate index " + std::to_string(c) + " out of range";
    return std::nullopt;
}

std::string bullet_list(const std::vector<std::string>& lines) {
    if (lines.empty()) return "(none)";
    std::string out;
    for (const auto& l : lines) out += "- " + l + "\n";
    out.pop_back();
    return out;
}

} // namespace

Judgment judge(const Demonstration& demo, const EvaluationContext& ctx, Backend& backend, const JudgeOptions& options) {
    demo.validate();
    const std::size_t k = demo.k();
    std::vector<ImageRef> images;
    try {
        images.push_back(load_image(demo.source_image, options.image_root));
        for (const auto& c : demo.candidates) images.push_back(load_image(c, options.image_root));
    } catch (const Error& e) {
        throw JudgeError(demo.id + ": " + e.what());
    }
    const std::map<std::string, std::string> common{{"instruction", demo.instruction},
                                                    {"candidate_count", std::to_string(k)},
                                                    {"last_index", std::to_string(k - 1)}};
    auto vars = [&](std::map<std::string, std::string> extra) {
        extra.insert(common.begin(), common.end());
        return extra;
    };
    Backend& tool_backend = options.tool_backend ? *options.tool_backend : backend;
    ReasoningChain chain;

    try {
        // Step 1: every skill is applied to all candidates in one call.
        for (const auto& skill : ctx.skills) {
            const auto prompt = render_prompt("rubric_application",
                                              vars({{"skill_document", render_entry(LibraryEntry{skill, {}, {}})}}));
            const auto request = make_request(RoleHint::Subagent, prompt, images,
                                              ResponseSchema{{"assessments", "array<object>"}}, options.decode);
            const auto reply = structured_call(backend, request, "rubric_application", options.observer,
                                               [&](const nlohmann::json& j) -> std::optional<std::string> {
                std::vector<bool> seen(k, false);
                for (const auto& a : j["assessments"]) {
                    if (!a.is_object()) return "assessment is not an object";
                    if (auto e = check_index(a, k)) return e;
                    if (!a.contains("criterion") || !a["criterion"].is_string()) return "missing 'criterion'";
                    if (!a.contains("finding") || !a["finding"].is_string()) return "missing 'finding'";
                    if (a.contains("partial_score") && !a["partial_score"].is_null() &&
                        !a["partial_score"].is_number()) {
                        return "partial_score must be a number or null";
                    }
                    seen[a["candidate"].get<std::size_t>()] = true;
                }
                for (std::size_t c = 0; c < k; ++c) {
                    if (!seen[c]) return "no assessment for candidate " + std::to_string(c);
                }
                return std::nullopt;
            });
            for (const auto& a : reply["assessments"]) {
                RubricAssessment ra;
                ra.skill = skill.name;
                ra.candidate = a["candidate"].get<std::size_t>();
                ra.criterion = a["criterion"].get<std::string>();
                ra.finding = a["finding"].get<std::string>();
                if (a.contains("partial_score") && a["partial_score"].is_number()) {
                    ra.partial_score = round_score(a["partial_score"].get<double>());
                }
                chain.rubric_assessments.push_back(std::move(ra));
            }
        }

        std::vector<std::string> findings;
        for (const auto& a : chain.rubric_assessments) {
            findings.push_back(a.skill + " | candidate " + std::to_string(a.candidate) + " | " + a.criterion + ": " +
                               a.finding + (a.partial_score ? " (anchor " + std::to_string(*a.partial_score) + ")" : ""));
        }

        // Step 2: the model picks invocations, each one is a separate query.
        if (!ctx.tools.empty()) {
            std::string docs;
            for (const auto& t : ctx.tools) docs += render_entry(LibraryEntry{t, {}, {}});
            const auto prompt =
                render_prompt("tool_selection", vars({{"tool_documents", docs}, {"findings", bullet_list(findings)}}));
            const auto request = make_request(RoleHint::Subagent, prompt, images,
                                              ResponseSchema{{"invocations", "array<object>"}}, options.decode);
            const auto reply = structured_call(backend, request, "tool_selection", options.observer,
                                               [&](const nlohmann::json& j) -> std::optional<std::string> {
                for (const auto& inv : j["invocations"]) {
                    if (!inv.is_object()) return "invocation is not an object";
                    if (!inv.contains("tool") || !inv["tool"].is_string()) return "missing 'tool'";
                    if (auto e = check_index(inv, k)) return e;
                }
                return std::nullopt;
            });
            for (const auto& tool : ctx.tools) {
                std::vector<bool> done(k, false);
                for (const auto& inv : reply["invocations"]) {
                    if (inv["tool"] != tool.name) continue;
                    const auto c = inv["candidate"].get<std::size_t>();
                    if (done[c]) continue;
                    done[c] = true;
                    ToolResult tr;
                    tr.tool = tool.name;
                    tr.candidate = c;
                    tr.invoked_because = inv.value("condition", "");
                    const auto format = tool.query_schema
                                            ? "Reply with JSON only, with the fields: " + describe_schema(*tool.query_schema) + "."
                                            : std::string("Reply in plain text.");
                    const auto qp = render_prompt("tool_query", {{"tool_name", tool.name},
                                                                 {"format_instruction", format},
                                                                 {"tool_document", render_entry(LibraryEntry{tool, {}, {}})},
                                                                 {"instruction", demo.instruction},
                                                                 {"candidate", std::to_string(c)},
                                                                 {"condition", tr.invoked_because}});
                    const auto query = make_request(RoleHint::ToolQuery, qp, {images[0], images[c + 1]},
                                                    tool.query_schema, options.decode);
                    tr.query = qp.user;
                    if (tool.query_schema) {
                        try {
                            tr.result = structured_call(tool_backend, query, "tool_query", options.observer,
                                                        [](const nlohmann::json&) { return std::optional<std::string>(); });
                        } catch (const StructuredOutputError& e) {
                            tr.failed = true;
                            tr.raw_text = e.raw_text();
                        }
                    } else {
                        if (options.observer) options.observer("tool_query", query);
                        const auto r = tool_backend.complete(query);
                        tr.result = r.text;
                        tr.raw_text = r.text;
                    }
                    chain.tool_results.push_back(std::move(tr));
                }
            }
        }

        std::vector<std::string> tool_lines;
        for (const auto& tr : chain.tool_results) {
            tool_lines.push_back(tr.tool + " on candidate " + std::to_string(tr.candidate) + " (" + tr.invoked_because +
                                 "): " + (tr.failed ? "analysis failed" : tr.result.is_string() ? tr.result.get<std::string>()
                                                                                               : tr.result.dump()));
        }

        // Step 3: aggregation.
        const auto names = ctx.names();
        std::string context_line;
        for (const auto& n : names) context_line += (context_line.empty() ? "" : ", ") + n;
        const auto prompt = render_prompt("aggregation", vars({{"context_entries", names.empty() ? "none" : context_line},
                                                               {"findings", bullet_list(findings)},
                                                               {"tool_results", bullet_list(tool_lines)}}));
        const auto request = make_request(RoleHint::Subagent, prompt, images,
                                          ResponseSchema{{"scores", "array<number>"}, {"note", "string"}}, options.decode);
        const auto reply = structured_call(backend, request, "aggregation", options.observer,
                                           [&](const nlohmann::json& j) -> std::optional<std::string> {
            if (j["scores"].size() != k) {
                return "expected " + std::to_string(k) + " scores, got " + std::to_string(j["scores"].size());
            }
            return std::nullopt;
        });
        std::vector<int> scores;
        for (const auto& s : reply["scores"]) {
            chain.raw_scores.push_back(s.get<double>());
            scores.push_back(round_score(s.get<double>()));
        }
        chain.aggregation_note = reply["note"].get<std::string>();
        return Judgment::from_scores(demo.id, std::move(scores), std::move(chain), ctx.library_version);
    } catch (const StructuredOutputError& e) {
        throw JudgeError(demo.id + ": unusable model output: " + e.what());
    } catch (const BackendError& e) {
        throw JudgeError(demo.id + ": " + e.what());
    }
}

Judgment judge_permuted(const Demonstration& demo, const std::vector<std::size_t>& order, const EvaluationContext& ctx,
                        Backend& backend, const JudgeOptions& options) {
    const std::size_t k = demo.k();
    std::vector<bool> seen(k, false);
    if (order.size() != k) throw ValidationError("permutation size differs from candidate count");
    for (auto i : order) {
        if (i >= k || seen[i]) throw ValidationError("order is not a permutation");
        seen[i] = true;
    }
    Demonstration shown = demo;
    shown.gt_scores.reset();
    shown.gt_ranking.reset();
    for (std::size_t i = 0; i < k; ++i) shown.candidates[i] = demo.candidates[order[i]];
    auto j = judge(shown, ctx, backend, options);

    std::vector<int> scores(k);
    std::vector<double> raw(k);
    for (std::size_t i = 0; i < k; ++i) {
        scores[order[i]] = j.scores[i];
        raw[order[i]] = j.chain.raw_scores[i];
    }
    auto chain = std::move(j.chain);
    chain.raw_scores = std::move(raw);
    for (auto& a : chain.rubric_assessments) a.candidate = order[a.candidate];
    for (auto& t : chain.tool_results) t.candidate = order[t.candidate];
    return Judgment::from_scores(demo.id, std::move(scores), std::move(chain), j.context_version);
}

} // namespace evojudge
