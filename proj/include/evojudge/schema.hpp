#pragma once

// Structured-response schemas for model calls.
//
// A schema is a flat list of named, typed fields. Types:
//   string | integer | number | boolean | object | array<T>
// where T is any type. Extra fields in a response are tolerated.

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace evojudge {

struct SchemaField {
    std::string name;
    std::string type;
    bool operator==(const SchemaField&) const = default;
};

using ResponseSchema = std::vector<SchemaField>;

bool is_valid_schema_type(std::string_view type);

// True when `value` conforms to `type`.
bool matches_schema_type(const nlohmann::json& value, std::string_view type);

// Throws ValidationError naming the first offending field.
void validate_structured(const nlohmann::json& value, const ResponseSchema& schema);

// Finds the first JSON object in free model text, tolerating Markdown code
// fences and surrounding prose. Throws ValidationError when none parses.
nlohmann::json extract_json_object(std::string_view text);

nlohmann::json schema_to_json(const ResponseSchema& schema);
ResponseSchema schema_from_json(const nlohmann::json& j);

} // namespace evojudge
