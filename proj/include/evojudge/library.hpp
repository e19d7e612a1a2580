#pragma once

// Skill and Tool documents: the two kinds of library artifact, and their
// canonical Markdown form.
//
// A document is a frontmatter block (kind, name, description) followed by a
// title and fixed level-2 sections. Skills carry `Rubric` (required) and
// `Examples`; Tools carry `Purpose`, `Inputs`, `Outputs`,
// `Invocation Conditions`, `Protocol` and optionally `Query Schema`.
// Free text is whitespace-normalised to a single line per field, so
// parse_entry(render_entry(e)) == e for every valid entry.

#include "evojudge/schema.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace evojudge {

enum class EntryKind { Skill, Tool };
enum class EntryStatus { Active, Deprecated };

std::string_view to_string(EntryKind kind) noexcept;
std::string_view to_string(EntryStatus status) noexcept;

struct RubricCriterion {
    std::string criterion;
    std::map<int, std::string> score_anchors;  // keys in [1,5]
    bool operator==(const RubricCriterion&) const = default;
};

struct SkillExample {
    std::string situation;
    std::string correct_application;
    bool operator==(const SkillExample&) const = default;
};

struct SkillDoc {
    std::string name;
    std::string description;
    std::vector<RubricCriterion> rubric;
    std::vector<SkillExample> examples;
    bool operator==(const SkillDoc&) const = default;
};

struct ToolPort {
    std::string name;
    std::string type;  // semantic type, a single token such as `image` or `array<string>`
    std::string description;
    bool operator==(const ToolPort&) const = default;
};

struct ToolDoc {
    std::string name;
    std::string description;
    std::string purpose;
    std::vector<ToolPort> inputs;
    std::vector<ToolPort> outputs;
    std::vector<std::string> invocation_conditions;
    std::vector<std::string> protocol;
    std::optional<std::vector<SchemaField>> query_schema;
    bool operator==(const ToolDoc&) const = default;
};

struct Provenance {
    int created_iter = 0;
    int last_modified_iter = 0;
    bool operator==(const Provenance&) const = default;
};

struct LibraryEntry {
    std::variant<SkillDoc, ToolDoc> doc;
    EntryStatus status = EntryStatus::Active;
    Provenance provenance;

    [[nodiscard]] EntryKind kind() const noexcept {
        return std::holds_alternative<SkillDoc>(doc) ? EntryKind::Skill : EntryKind::Tool;
    }
    [[nodiscard]] const std::string& name() const noexcept;
    [[nodiscard]] const std::string& description() const noexcept;
    [[nodiscard]] bool active() const noexcept { return status == EntryStatus::Active; }

    [[nodiscard]] const SkillDoc& skill() const { return std::get<SkillDoc>(doc); }
    [[nodiscard]] const ToolDoc& tool() const { return std::get<ToolDoc>(doc); }

    bool operator==(const LibraryEntry&) const = default;
};

// Collapses runs of whitespace to one space and trims.
std::string normalize_text(std::string_view text);

bool is_valid_entry_name(std::string_view name);

// Throws ValidationError naming the violated invariant.
void validate(const SkillDoc& doc);
void validate(const ToolDoc& doc);
void validate(const LibraryEntry& entry);

// Parses a Markdown document. The result is Active with zeroed provenance;
// status and provenance live in the store manifest, not in the document.
// Throws ParseError (with a 1-based line number) on malformed input.
LibraryEntry parse_entry(std::string_view text);

// Canonical Markdown (LF endings, fixed section order, single trailing newline).
std::string render_entry(const LibraryEntry& entry);

} // namespace evojudge
