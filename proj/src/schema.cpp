#include "evojudge/schema.hpp"

#include "evojudge/errors.hpp"

namespace evojudge {

namespace {

bool unwrap_array(std::string_view type, std::string_view& inner) {
    constexpr std::string_view prefix = "array<";
    if (type.size() > prefix.size() + 1 && type.substr(0, prefix.size()) == prefix && type.back() == '>') {
        inner = type.substr(prefix.size(), type.size() - prefix.size() - 1);
        return true;
    }
    return false;
}

} // namespace

bool is_valid_schema_type(std::string_view type) {
    if (type == "string" || type == "integer" || type == "number" || type == "boolean" || type == "object") {
        return true;
    }
    std::string_view inner;
    return unwrap_array(type, inner) && is_valid_schema_type(inner);
}

bool matches_schema_type(const nlohmann::json& value, std::string_view type) {
    if (type == "string") return value.is_string();
    if (type == "integer") {
        if (value.is_number_integer()) return true;
        return value.is_number_float() && value.get<double>() == static_cast<double>(static_cast<long long>(value.get<double>()));
    }
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    if (type == "object") return value.is_object();
    std::string_view inner;
    if (unwrap_array(type, inner)) {
        if (!value.is_array()) return false;
        for (const auto& item : value) {
            if (!matches_schema_type(item, inner)) return false;
        }
        return true;
    }
    return false;
}

void validate_structured(const nlohmann::json& value, const ResponseSchema& schema) {
    if (!value.is_object()) throw ValidationError("structured response is not a JSON object");
    for (const auto& field : schema) {
        if (!value.contains(field.name)) throw ValidationError("missing field '" + field.name + "'");
        if (!matches_schema_type(value[field.name], field.type)) {
            throw ValidationError("field '" + field.name + "' is not of type " + field.type);
        }
    }
}

nlohmann::json extract_json_object(std::string_view text) {
    // Try every '{' as a start and take the first balanced span that parses.
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escape = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escape) {
                    escape = false;
                } else if (c == '\\') {
                    escape = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
                    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                    break;
                }
            }
        }
    }
    throw ValidationError("no JSON object found in model output");
}

nlohmann::json schema_to_json(const ResponseSchema& schema) {
    auto out = nlohmann::json::array();
    for (const auto& f : schema) out.push_back({{"name", f.name}, {"type", f.type}});
    return out;
}

ResponseSchema schema_from_json(const nlohmann::json& j) {
    ResponseSchema schema;
    for (const auto& f : j) {
        SchemaField field{f.at("name").get<std::string>(), f.at("type").get<std::string>()};
        if (!is_valid_schema_type(field.type)) throw ValidationError("invalid schema type " + field.type);
        schema.push_back(std::move(field));
    }
    return schema;
}

} // namespace evojudge
