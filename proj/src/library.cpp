#include "evojudge/library.hpp"

#include "evojudge/errors.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

namespace evojudge {

std::string_view to_string(EntryKind kind) noexcept { return kind == EntryKind::Skill ? "skill" : "tool"; }

std::string_view to_string(EntryStatus status) noexcept {
    return status == EntryStatus::Active ? "active" : "deprecated";
}

const std::string& LibraryEntry::name() const noexcept {
    return std::visit([](const auto& d) -> const std::string& { return d.name; }, doc);
}

const std::string& LibraryEntry::description() const noexcept {
    return std::visit([](const auto& d) -> const std::string& { return d.description; }, doc);
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

bool is_valid_entry_name(std::string_view name) {
    static const std::regex re("^[a-z0-9]+(-[a-z0-9]+)*$");
    return std::regex_match(name.begin(), name.end(), re);
}

namespace {

bool is_token(std::string_view s) {
    return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == '`' || c == '(' || c == ')';
    });
}

void require_text(std::string_view value, std::string_view what) {
    if (value.empty()) throw ValidationError(std::string(what) + " is empty");
    if (normalize_text(value) != value) throw ValidationError(std::string(what) + " is not whitespace-normalised");
}

void validate_ports(const std::vector<ToolPort>& ports, std::string_view what) {
    std::set<std::string> seen;
    for (const auto& p : ports) {
        if (!is_token(p.name) || !is_token(p.type)) {
            throw ValidationError(std::string(what) + " port name and type must be single tokens");
        }
        if (!seen.insert(p.name).second) throw ValidationError(std::string(what) + " port '" + p.name + "' repeated");
        require_text(p.description, std::string(what) + " port description");
    }
}

} // namespace

void validate(const SkillDoc& doc) {
    if (!is_valid_entry_name(doc.name)) throw ValidationError("malformed name '" + doc.name + "'");
    require_text(doc.description, "description");
    if (doc.rubric.empty()) throw ValidationError("skill '" + doc.name + "' has an empty rubric");
    for (const auto& c : doc.rubric) {
        require_text(c.criterion, "rubric criterion");
        for (const auto& [score, anchor] : c.score_anchors) {
            if (score < 1 || score > 5) throw ValidationError("score anchor outside [1,5]");
            require_text(anchor, "score anchor");
        }
    }
    for (const auto& e : doc.examples) {
        require_text(e.situation, "example situation");
        require_text(e.correct_application, "example correct application");
    }
}

void validate(const ToolDoc& doc) {
    if (!is_valid_entry_name(doc.name)) throw ValidationError("malformed name '" + doc.name + "'");
    require_text(doc.description, "description");
    require_text(doc.purpose, "purpose");
    if (doc.purpose.front() == '#') throw ValidationError("purpose must not start with '#'");
    validate_ports(doc.inputs, "input");
    validate_ports(doc.outputs, "output");
    if (doc.invocation_conditions.empty()) throw ValidationError("tool '" + doc.name + "' has no invocation conditions");
    if (doc.protocol.empty()) throw ValidationError("tool '" + doc.name + "' has an empty protocol");
    for (const auto& c : doc.invocation_conditions) require_text(c, "invocation condition");
    for (const auto& s : doc.protocol) require_text(s, "protocol step");
    if (doc.query_schema) {
        std::set<std::string> fields;
        for (const auto& f : *doc.query_schema) {
            if (!is_token(f.name) || !is_valid_schema_type(f.type)) {
                throw ValidationError("invalid query schema field '" + f.name + "'");
            }
            if (!fields.insert(f.name).second) throw ValidationError("query schema field '" + f.name + "' repeated");
        }
        std::set<std::string> outputs;
        for (const auto& o : doc.outputs) outputs.insert(o.name);
        if (outputs != fields) throw ValidationError("tool '" + doc.name + "' outputs do not match its query schema");
    }
}

void validate(const LibraryEntry& entry) {
    std::visit([](const auto& d) { validate(d); }, entry.doc);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Line {
    std::size_t number;
    std::string text;
};

struct Section {
    std::string title;
    std::size_t line;
    std::vector<Line> body;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t number = 1;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(pos, end - pos));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back({number++, std::move(line)});
        if (end == text.size()) break;
        pos = end + 1;
    }
    return lines;
}

// List items introduced by `marker(line)`; other non-blank lines continue the
// previous item.
template <typename IsItem>
std::vector<Line> collect_items(const std::vector<Line>& body, IsItem is_item, const std::string& section) {
    std::vector<Line> items;
    for (const auto& l : body) {
        const auto t = trim(l.text);
        if (t.empty()) continue;
        if (is_item(t)) {
            items.push_back({l.number, t});
        } else if (items.empty()) {
            throw ParseError(l.number, "unexpected text in section '" + section + "'");
        } else {
            items.back().text += " " + t;
        }
    }
    return items;
}

std::string paragraph(const std::vector<Line>& body) {
    std::string out;
    for (const auto& l : body) out += " " + l.text;
    return normalize_text(out);
}

ToolPort parse_port(const Line& item) {
    // - `name` (type): description
    static const std::regex re(R"(^- `([^`\s]+)` \(([^()\s]+)\):\s*(.+)$)");
    std::smatch m;
    if (!std::regex_match(item.text, m, re)) {
        throw ParseError(item.number, "expected \"- `name` (type): description\"");
    }
    return ToolPort{m[1], m[2], normalize_text(m[3].str())};
}

SchemaField parse_schema_field(const Line& item) {
    static const std::regex re(R"(^- `([^`\s]+)`:\s*(\S+)$)");
    std::smatch m;
    if (!std::regex_match(item.text, m, re)) throw ParseError(item.number, "expected \"- `field`: type\"");
    if (!is_valid_schema_type(m[2].str())) throw ParseError(item.number, "unknown schema type " + m[2].str());
    return SchemaField{m[1], m[2]};
}

std::vector<RubricCriterion> parse_rubric(const Section& s) {
    std::vector<RubricCriterion> rubric;
    static const std::regex anchor_re(R"(^- ([1-5]):\s*(.+)$)");
    std::vector<Line> pending;  // anchor items of the current criterion
    auto flush = [&] {
        for (const auto& item : pending) {
            std::smatch m;
            if (!std::regex_match(item.text, m, anchor_re)) {
                throw ParseError(item.number, "expected score anchor \"- N: text\" with N in 1..5");
            }
            const int score = std::stoi(m[1].str());
            if (!rubric.back().score_anchors.emplace(score, normalize_text(m[2].str())).second) {
                throw ParseError(item.number, "duplicate score anchor " + m[1].str());
            }
        }
        pending.clear();
    };
    for (const auto& l : s.body) {
        const auto t = trim(l.text);
        if (t.empty()) continue;
        if (starts_with(t, "### ")) {
            if (!rubric.empty()) flush();
            rubric.push_back(RubricCriterion{normalize_text(t.substr(4)), {}});
        } else if (rubric.empty()) {
            throw ParseError(l.number, "rubric text before the first \"### criterion\" heading");
        } else if (starts_with(t, "- ")) {
            pending.push_back({l.number, t});
        } else if (!pending.empty()) {
            pending.back().text += " " + t;
        } else {
            rubric.back().criterion = normalize_text(rubric.back().criterion + " " + t);
        }
    }
    if (!rubric.empty()) flush();
    if (rubric.empty()) throw ParseError(s.line, "rubric has no criteria");
    return rubric;
}

std::vector<SkillExample> parse_examples(const Section& s) {
    std::vector<SkillExample> examples;
    struct Pending {
        std::size_t line;
        std::string situation;
        std::string application;
        std::string* current = nullptr;
    };
    std::vector<Pending> raw;
    for (const auto& l : s.body) {
        const auto t = trim(l.text);
        if (t.empty()) continue;
        if (starts_with(t, "### ")) {
            raw.push_back({l.number, {}, {}, nullptr});
        } else if (raw.empty()) {
            throw ParseError(l.number, "example text before the first \"### Example\" heading");
        } else if (starts_with(t, "- Situation:")) {
            raw.back().situation = t.substr(12);
            raw.back().current = &raw.back().situation;
        } else if (starts_with(t, "- Correct application:")) {
            raw.back().application = t.substr(22);
            raw.back().current = &raw.back().application;
        } else if (raw.back().current != nullptr) {
            *raw.back().current += " " + t;
        } else {
            throw ParseError(l.number, "expected \"- Situation:\" or \"- Correct application:\"");
        }
    }
    for (auto& r : raw) {
        SkillExample e{normalize_text(r.situation), normalize_text(r.application)};
        if (e.situation.empty() || e.correct_application.empty()) {
            throw ParseError(r.line, "example needs both a situation and a correct application");
        }
        examples.push_back(std::move(e));
    }
    return examples;
}

std::vector<std::string> bullet_texts(const Section& s) {
    auto items = collect_items(s.body, [](const std::string& t) { return starts_with(t, "- "); }, s.title);
    std::vector<std::string> out;
    for (auto& i : items) out.push_back(normalize_text(i.text.substr(2)));
    return out;
}

std::vector<std::string> numbered_texts(const Section& s) {
    static const std::regex re(R"(^(\d+)\.\s+(.*)$)");
    auto items = collect_items(s.body, [](const std::string& t) { return std::regex_match(t, re); }, s.title);
    std::vector<std::string> out;
    for (auto& i : items) {
        std::smatch m;
        std::regex_match(i.text, m, re);
        if (std::stoul(m[1].str()) != out.size() + 1) throw ParseError(i.number, "protocol steps must be numbered 1, 2, ...");
        out.push_back(normalize_text(m[2].str()));
    }
    return out;
}

} // namespace

LibraryEntry parse_entry(std::string_view text) {
    const auto lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size() && trim(lines[i].text).empty()) ++i;
    if (i >= lines.size() || trim(lines[i].text) != "---") {
        throw ParseError(i < lines.size() ? lines[i].number : 1, "missing frontmatter block");
    }
    const auto fm_start = lines[i].number;
    ++i;
    std::map<std::string, std::string> front;
    bool closed = false;
    for (; i < lines.size(); ++i) {
        const auto t = trim(lines[i].text);
        if (t == "---") {
            closed = true;
            ++i;
            break;
        }
        if (t.empty()) continue;
        const auto colon = t.find(':');
        if (colon == std::string::npos) throw ParseError(lines[i].number, "expected \"key: value\" in frontmatter");
        const auto key = trim(t.substr(0, colon));
        if (key != "kind" && key != "name" && key != "description") {
            throw ParseError(lines[i].number, "unknown frontmatter key '" + key + "'");
        }
        if (!front.emplace(key, normalize_text(t.substr(colon + 1))).second) {
            throw ParseError(lines[i].number, "duplicate frontmatter key '" + key + "'");
        }
    }
    if (!closed) throw ParseError(fm_start, "unterminated frontmatter block");
    for (const char* key : {"kind", "name", "description"}) {
        if (!front.contains(key) || front[key].empty()) {
            throw ParseError(fm_start, std::string("frontmatter is missing '") + key + "'");
        }
    }
    const auto& kind = front["kind"];
    if (kind != "skill" && kind != "tool") throw ParseError(fm_start, "kind must be 'skill' or 'tool'");
    const auto& name = front["name"];
    if (!is_valid_entry_name(name)) throw ParseError(fm_start, "malformed name '" + name + "'");

    std::vector<Section> sections;
    for (; i < lines.size(); ++i) {
        const auto t = trim(lines[i].text);
        if (starts_with(t, "## ")) {
            const auto title = normalize_text(t.substr(3));
            for (const auto& s : sections) {
                if (s.title == title) throw ParseError(lines[i].number, "duplicate section '" + title + "'");
            }
            sections.push_back({title, lines[i].number, {}});
        } else if (starts_with(t, "# ")) {
            if (!sections.empty()) throw ParseError(lines[i].number, "title after the first section");
            if (normalize_text(t.substr(2)) != name) {
                throw ParseError(lines[i].number, "title does not match name '" + name + "'");
            }
        } else if (!sections.empty()) {
            sections.back().body.push_back(lines[i]);
        } else if (!t.empty()) {
            throw ParseError(lines[i].number, "text before the first section");
        }
    }
    auto find = [&](std::string_view title) -> const Section* {
        for (const auto& s : sections) {
            if (s.title == title) return &s;
        }
        return nullptr;
    };
    auto require = [&](std::string_view title) -> const Section& {
        if (const auto* s = find(title)) return *s;
        throw ParseError(lines.back().number, "missing mandatory section '" + std::string(title) + "'");
    };
    auto reject_unknown = [&](std::initializer_list<std::string_view> known) {
        for (const auto& s : sections) {
            if (std::find(known.begin(), known.end(), s.title) == known.end()) {
                throw ParseError(s.line, "unknown section '" + s.title + "' for a " + kind);
            }
        }
    };

    LibraryEntry entry;
    try {
        if (kind == "skill") {
            reject_unknown({"Rubric", "Examples"});
            SkillDoc doc;
            doc.name = name;
            doc.description = front["description"];
            doc.rubric = parse_rubric(require("Rubric"));
            if (const auto* ex = find("Examples")) doc.examples = parse_examples(*ex);
            validate(doc);
            entry.doc = std::move(doc);
        } else {
            reject_unknown({"Purpose", "Inputs", "Outputs", "Invocation Conditions", "Protocol", "Query Schema"});
            ToolDoc doc;
            doc.name = name;
            doc.description = front["description"];
            doc.purpose = paragraph(require("Purpose").body);
            auto ports = [&](std::string_view title) {
                std::vector<ToolPort> out;
                if (const auto* s = find(title)) {
                    for (const auto& item :
                         collect_items(s->body, [](const std::string& t) { return starts_with(t, "- "); }, s->title)) {
                        out.push_back(parse_port(item));
                    }
                }
                return out;
            };
            doc.inputs = ports("Inputs");
            doc.outputs = ports("Outputs");
            doc.invocation_conditions = bullet_texts(require("Invocation Conditions"));
            doc.protocol = numbered_texts(require("Protocol"));
            if (const auto* qs = find("Query Schema")) {
                std::vector<SchemaField> fields;
                for (const auto& item :
                     collect_items(qs->body, [](const std::string& t) { return starts_with(t, "- "); }, qs->title)) {
                    fields.push_back(parse_schema_field(item));
                }
                doc.query_schema = std::move(fields);
            }
            validate(doc);
            entry.doc = std::move(doc);
        }
    } catch (const ValidationError& e) {
        throw ParseError(fm_start, e.what());
    }
    return entry;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

void render_ports(std::ostringstream& out, std::string_view title, const std::vector<ToolPort>& ports) {
    if (ports.empty()) return;
    out << "## " << title << "\n\n";
    for (const auto& p : ports) out << "- `" << p.name << "` (" << p.type << "): " << p.description << "\n";
    out << "\n";
}

} // namespace

std::string render_entry(const LibraryEntry& entry) {
    std::ostringstream out;
    out << "---\n"
        << "kind: " << to_string(entry.kind()) << "\n"
        << "name: " << entry.name() << "\n"
        << "description: " << entry.description() << "\n"
        << "---\n\n"
        << "# " << entry.name() << "\n\n";
    if (entry.kind() == EntryKind::Skill) {
        const auto& doc = entry.skill();
        out << "## Rubric\n\n";
        for (const auto& c : doc.rubric) {
            out << "### " << c.criterion << "\n\n";
            for (const auto& [score, anchor] : c.score_anchors) out << "- " << score << ": " << anchor << "\n";
            if (!c.score_anchors.empty()) out << "\n";
        }
        if (!doc.examples.empty()) {
            out << "## Examples\n\n";
            for (std::size_t i = 0; i < doc.examples.size(); ++i) {
                out << "### Example " << (i + 1) << "\n\n"
                    << "- Situation: " << doc.examples[i].situation << "\n"
                    << "- Correct application: " << doc.examples[i].correct_application << "\n\n";
            }
        }
    } else {
        const auto& doc = entry.tool();
        out << "## Purpose\n\n" << doc.purpose << "\n\n";
        render_ports(out, "Inputs", doc.inputs);
        render_ports(out, "Outputs", doc.outputs);
        out << "## Invocation Conditions\n\n";
        for (const auto& c : doc.invocation_conditions) out << "- " << c << "\n";
        out << "\n## Protocol\n\n";
        for (std::size_t i = 0; i < doc.protocol.size(); ++i) out << (i + 1) << ". " << doc.protocol[i] << "\n";
        out << "\n";
        if (doc.query_schema) {
            out << "## Query Schema\n\n";
            for (const auto& f : *doc.query_schema) out << "- `" << f.name << "`: " << f.type << "\n";
            out << "\n";
        }
    }
    auto text = out.str();
    while (text.size() >= 2 && text[text.size() - 1] == '\n' && text[text.size() - 2] == '\n') text.pop_back();
    return text;
}

} // namespace evojudge
