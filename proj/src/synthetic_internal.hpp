#pragma once

// Prompt parsing shared by the synthetic oracle's task handlers.

#include "evojudge/model.hpp"
#include "evojudge/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evojudge::synthetic::detail {

// First line of the first system message, after "Task: ".
std::string task_of(const ModelRequest& request);
std::string system_text(const ModelRequest& request);
// Text of the first user message.
std::string user_text(const ModelRequest& request);

// Value after `prefix` on the first line that starts with it.
std::optional<std::string> line_value(std::string_view text, std::string_view prefix);
std::vector<std::string> lines_of(std::string_view text);

// Everything after the first occurrence of `marker`.
std::string after(std::string_view text, std::string_view marker);

// Splits concatenated canonical documents at each frontmatter opener.
std::vector<std::string> split_documents(std::string_view text);

struct SummaryLine {
    std::string name;
    std::string kind;
    std::string description;
};
// Parses "- name (skill|tool): description" lines; other lines are skipped.
std::vector<SummaryLine> parse_summary_lines(std::string_view text);

std::set<std::string> requested_families(const std::vector<Target>& targets);

nlohmann::json route_stage1(const ModelRequest& request);
nlohmann::json route_stage2(const ModelRequest& request);
nlohmann::json analysis(const ModelRequest& request, const OracleConfig& config);

} // namespace evojudge::synthetic::detail
