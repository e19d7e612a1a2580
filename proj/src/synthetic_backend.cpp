#include "synthetic_internal.hpp"

#include "evojudge/errors.hpp"
#include "evojudge/library.hpp"

#include <regex>
#include <sstream>

namespace evojudge::synthetic {

namespace detail {

std::string system_text(const ModelRequest& request) {
    for (const auto& m : request.messages) {
        if (m.role != "system") continue;
        std::string out;
        for (const auto& p : m.parts) {
            if (p.text) out += *p.text;
        }
        return out;
    }
    return {};
}

std::string user_text(const ModelRequest& request) {
    for (const auto& m : request.messages) {
        if (m.role != "user") continue;
        std::string out;
        for (const auto& p : m.parts) {
            if (p.text) out += *p.text + "\n";
        }
        return out;
    }
    return {};
}

std::string task_of(const ModelRequest& request) {
    return line_value(system_text(request), "Task: ").value_or("");
}

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::stringstream ss{std::string(text)};
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

std::optional<std::string> line_value(std::string_view text, std::string_view prefix) {
    for (const auto& line : lines_of(text)) {
        if (line.starts_with(prefix)) return line.substr(prefix.size());
    }
    return std::nullopt;
}

std::string after(std::string_view text, std::string_view marker) {
    const auto pos = text.find(marker);
    if (pos == std::string_view::npos) return {};
    return std::string(text.substr(pos + marker.size()));
}

std::vector<std::string> split_documents(std::string_view text) {
    const auto lines = lines_of(text);
    std::vector<std::string> docs;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const bool opener = lines[i] == "---" && i + 1 < lines.size() && lines[i + 1].starts_with("kind:");
        if (opener) docs.emplace_back();
        if (!docs.empty()) docs.back() += lines[i] + "\n";
    }
    return docs;
}

std::vector<SummaryLine> parse_summary_lines(std::string_view text) {
    static const std::regex re(R"(^- ([a-z0-9-]+) \((skill|tool)\): (.*)$)");
    std::vector<SummaryLine> out;
    for (const auto& line : lines_of(text)) {
        std::smatch m;
        if (std::regex_match(line, m, re)) out.push_back({m[1].str(), m[2].str(), m[3].str()});
    }
    return out;
}

std::set<std::string> requested_families(const std::vector<Target>& targets) {
    std::set<std::string> out;
    for (const auto& t : targets) out.insert(t.family);
    return out;
}

} // namespace detail

namespace {

using namespace detail;

std::vector<Target> request_targets(const ModelRequest& request) {
    return parse_instruction(line_value(user_text(request), "Instruction: ").value_or(""));
}

std::vector<SyntheticImage> request_images(const ModelRequest& request) {
    std::vector<SyntheticImage> out;
    for (const auto* img : request.images()) {
        if (!img->is_inline()) throw BackendError("synthetic oracle needs inline images", 1);
        try {
            out.push_back(SyntheticImage::from_bytes(img->bytes));
        } catch (const ValidationError&) {
            throw BackendError("synthetic oracle cannot read a non-synthetic image", 1);
        }
    }
    return out;
}

std::size_t candidate_count(const ModelRequest& request) {
    const auto v = line_value(user_text(request), "Candidates: ");
    return v ? std::stoul(*v) : 0;
}

std::string describe(const SyntheticImage& img) {
    if (img.is_source()) return "An unedited scene.";
    std::string out = "The edited scene shows";
    bool first = true;
    for (const auto& [family, value] : img.attributes) {
        out += (first ? " " : ", ") + family + " " + value;
        first = false;
    }
    return out + ".";
}

nlohmann::json rubric_application(const ModelRequest& request) {
    const auto doc = parse_entry(after(system_text(request), "Skill document:\n"));
    nlohmann::json assessments = nlohmann::json::array();
    const auto n = candidate_count(request);
    for (std::size_t c = 0; c < n; ++c) {
        for (const auto& crit : doc.skill().rubric) {
            assessments.push_back({{"candidate", c},
                                   {"criterion", crit.criterion},
                                   {"finding", "Candidate " + std::to_string(c) + " reviewed against this criterion."},
                                   {"partial_score", nullptr}});
        }
    }
    return {{"assessments", std::move(assessments)}};
}

nlohmann::json tool_selection(const ModelRequest& request) {
    const auto wanted = requested_families(request_targets(request));
    const auto n = candidate_count(request);
    nlohmann::json invocations = nlohmann::json::array();
    for (const auto& text : split_documents(after(system_text(request), "Tool documents:\n"))) {
        const auto entry = parse_entry(text);
        const auto fams = entry_families(entry.name());
        const bool applies = std::any_of(fams.begin(), fams.end(), [&](const auto& f) { return wanted.contains(f); });
        if (!applies) continue;
        for (std::size_t c = 0; c < n; ++c) {
            invocations.push_back(
                {{"tool", entry.name()}, {"candidate", c}, {"condition", entry.tool().invocation_conditions.front()}});
        }
    }
    return {{"invocations", std::move(invocations)}};
}

nlohmann::json default_for(const std::string& type) {
    if (type == "string") return "";
    if (type == "integer") return 0;
    if (type == "number") return 0.0;
    if (type == "boolean") return false;
    if (type == "object") return nlohmann::json::object();
    return nlohmann::json::array();
}

nlohmann::json tool_fields(const ModelRequest& request, const ResponseSchema& schema) {
    const auto tool = line_value(system_text(request), "Tool: ").value_or("");
    const auto targets = request_targets(request);
    const auto images = request_images(request);
    if (images.empty()) throw BackendError("tool query without a candidate image", 1);
    const auto& cand = images.back();
    const auto fams = entry_families(tool);
    auto attr = [&](const std::string& f) {
        const auto it = cand.attributes.find(f);
        return it == cand.attributes.end() ? std::string() : it->second;
    };

    bool all_match = true;
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& t : targets) {
        if (!fams.contains(t.family)) continue;
        if (attr(t.family) != t.value) {
            all_match = false;
            issues.push_back(t.family + " shows '" + attr(t.family) + "' instead of '" + t.value + "'");
        }
    }
    nlohmann::json objects = nlohmann::json::array();
    if (!attr("count").empty()) objects.push_back({{"label", "apple"}, {"count", std::stoi(attr("count"))}});
    if (!attr("presence").empty() && attr("presence") != "none") {
        objects.push_back({{"label", attr("presence")}, {"count", 1}});
    }
    nlohmann::json relations = nlohmann::json::array();
    if (!attr("spatial").empty()) relations.push_back("cat at the " + attr("spatial") + " of the frame");

    nlohmann::json out = nlohmann::json::object();
    for (const auto& f : schema) {
        if (f.name == "extracted_text" && f.type == "string") out[f.name] = attr("text");
        else if ((f.name == "matches_target" || f.name == "consistent" || f.name == "satisfied") && f.type == "boolean")
            out[f.name] = all_match;
        else if (f.name == "issues" && f.type == "array<string>") out[f.name] = issues;
        else if (f.name == "objects" && f.type == "array<object>") out[f.name] = objects;
        else if (f.name == "relations" && f.type == "array<string>") out[f.name] = relations;
        else if (f.name == "answer" && f.type == "string") out[f.name] = all_match ? "yes" : "no";
        else if ((f.name == "evidence" || f.name == "finding") && f.type == "string") out[f.name] = describe(cand);
        else if (f.name == "identified_style" && f.type == "string")
            out[f.name] = attr("style").empty() ? "none" : attr("style");
        else out[f.name] = default_for(f.type);
    }
    return out;
}

nlohmann::json aggregation(const ModelRequest& request, const std::map<std::string, double>& weights) {
    std::vector<std::string> context;
    const auto line = line_value(system_text(request), "Context entries: ").value_or("");
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = normalize_text(item);
        if (!item.empty() && item != "none") context.push_back(item);
    }
    auto images = request_images(request);
    if (images.empty()) throw BackendError("aggregation needs the source image", 1);
    const auto source = images.front();
    images.erase(images.begin());
    const auto v = judge(source, images, request_targets(request), context, weights);
    return {{"scores", v.scores}, {"note", v.note()}};
}

} // namespace

SyntheticOracleBackend::SyntheticOracleBackend(OracleConfig config, std::size_t max_in_flight)
    : Backend(max_in_flight), config_(std::move(config)), weights_(default_weights()) {
    for (const auto& [family, w] : config_.weights) weights_[family] = w;
}

ModelResponse SyntheticOracleBackend::do_complete(const ModelRequest& request) {
    const auto task = task_of(request);
    ModelResponse r;
    r.backend_id = id();
    std::optional<nlohmann::json> out;
    if (task == "rubric_application") out = rubric_application(request);
    else if (task == "tool_selection") out = tool_selection(request);
    else if (task == "aggregation") out = aggregation(request, weights_);
    else if (task == "route_stage1") out = route_stage1(request);
    else if (task == "route_stage2") out = route_stage2(request);
    else if (task == "analysis_growth" || task == "analysis_consolidation") out = analysis(request, config_);
    else if (task == "tool_query") {
        if (request.response_schema) {
            out = tool_fields(request, *request.response_schema);
        } else {
            const auto images = request_images(request);
            r.text = images.empty() ? "No image to analyse." : describe(images.back());
        }
    } else if (task == "caption") {
        const auto images = request_images(request);
        r.text = images.empty() ? "No image." : describe(images.front());
    } else {
        throw BackendError("synthetic oracle has no handler for task '" + task + "'", 1);
    }
    if (out) {
        r.text = out->dump();
        if (request.response_schema) r.structured = *out;
    }
    r.usage.input_tokens = static_cast<std::int64_t>(request.all_text().size() / 4);
    r.usage.output_tokens = static_cast<std::int64_t>(r.text.size() / 4);
    return r;
}

} // namespace evojudge::synthetic
