// Routing and library-maintenance policy of the synthetic orchestrator.

#include "synthetic_internal.hpp"

#include "evojudge/errors.hpp"
#include "evojudge/library.hpp"

#include <algorithm>
#include <regex>

namespace evojudge::synthetic::detail {

namespace {

bool overlaps(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::any_of(a.begin(), a.end(), [&](const auto& x) { return b.contains(x); });
}

std::set<std::string> instruction_families(const ModelRequest& request) {
    return requested_families(parse_instruction(line_value(user_text(request), "Instruction: ").value_or("")));
}

const std::string kGeneralEntry = "ambiguity-and-tie-handling";

} // namespace

nlohmann::json route_stage1(const ModelRequest& request) {
    const auto wanted = instruction_families(request);
    nlohmann::json skills = nlohmann::json::array();
    nlohmann::json tools = nlohmann::json::array();
    for (const auto& s : parse_summary_lines(after(system_text(request), "Library entries:\n"))) {
        const auto fams = entry_families(s.name);
        if (!fams.empty() && !overlaps(fams, wanted)) continue;
        (s.kind == "skill" ? skills : tools).push_back(s.name);
    }
    return {{"skills", std::move(skills)},
            {"tools", std::move(tools)},
            {"rationale", "Selected the entries whose focus matches the requested attributes."}};
}

nlohmann::json route_stage2(const ModelRequest& request) {
    const auto wanted = instruction_families(request);
    nlohmann::json tools = nlohmann::json::array();
    for (const auto& text : split_documents(after(system_text(request), "Tool specifications:\n"))) {
        const auto entry = parse_entry(text);
        const auto fams = entry_families(entry.name());
        const bool load = fams.empty() || overlaps(fams, wanted);
        tools.push_back({{"name", entry.name()},
                         {"load", load},
                         {"reason", load ? entry.tool().invocation_conditions.front() : "No condition applies."}});
    }
    return {{"tools", std::move(tools)}};
}

// ---------------------------------------------------------------------------
// Analysis

namespace {

struct Credit {
    int correct = 0;
    int incorrect = 0;
};

struct RecordView {
    std::string demo_id;
    bool correct = false;
    std::vector<std::string> context;
    NoteFields note;
    std::string failure;
};

struct Rejected {
    std::string op;
    std::string target;
    std::set<std::string> names;
};

struct PromptView {
    int iteration = 0;
    std::string phase;
    std::string version;
    std::size_t max_actions = 1;
    std::vector<SummaryLine> library;
    std::map<std::string, Credit> credits;
    std::vector<Rejected> rejected;  // at the current library version only
    std::vector<RecordView> records;
};

PromptView read_prompt(const ModelRequest& request) {
    PromptView v;
    const auto sys = system_text(request);
    const auto user = user_text(request);
    std::smatch m;
    static const std::regex at_most(R"(at most (\d+))");
    if (std::regex_search(sys, m, at_most)) v.max_actions = std::stoul(m[1].str());
    v.iteration = std::stoi(line_value(user, "Iteration: ").value_or("0"));
    v.phase = line_value(user, "Phase: ").value_or("growth");
    v.version = line_value(user, "Library version: ").value_or("");

    enum class Section { None, Library, Credits, Rejected, Records } section = Section::None;
    std::vector<std::string> library_lines;
    for (const auto& line : lines_of(user)) {
        if (line == "Current library:") section = Section::Library;
        else if (line.starts_with("Entry credits")) section = Section::Credits;
        else if (line.starts_with("Previously rejected")) section = Section::Rejected;
        else if (line.starts_with("Judged training records")) section = Section::Records;
        else if (section == Section::Library) library_lines.push_back(line);
        else if (!line.empty() && line.front() == '{') {
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            if (section == Section::Credits) {
                v.credits[j.at("name").get<std::string>()] = {j.value("correct", 0), j.value("incorrect", 0)};
            } else if (section == Section::Rejected) {
                if (j.value("base_version", "") != v.version) continue;
                for (const auto& a : j.value("actions", nlohmann::json::array())) {
                    const auto names = a.value("names", std::vector<std::string>{});
                    v.rejected.push_back({a.value("op", ""), a.value("target", ""), {names.begin(), names.end()}});
                }
            } else if (section == Section::Records) {
                RecordView r;
                r.demo_id = j.at("demo_id").get<std::string>();
                r.correct = j.value("correct", false);
                r.context = j.value("context", std::vector<std::string>{});
                r.note = parse_note(j.value("note", ""));
                r.failure = j.value("failure", "");
                v.records.push_back(std::move(r));
            }
        }
    }
    std::string joined;
    for (const auto& l : library_lines) joined += l + "\n";
    v.library = parse_summary_lines(joined);
    return v;
}

struct Candidate {
    int priority = 0;
    std::string op;
    std::string target;
    std::vector<std::string> names;
    int revision = 0;
    std::vector<std::string> cases;
    std::string rationale;
};

bool is_active(const PromptView& v, const std::string& name) {
    return std::any_of(v.library.begin(), v.library.end(), [&](const auto& s) { return s.name == name; });
}

bool in_catalog(const std::string& name) {
    const auto& c = catalog_names();
    return std::find(c.begin(), c.end(), name) != c.end();
}

bool was_rejected(const PromptView& v, const Candidate& c) {
    return std::any_of(v.rejected.begin(), v.rejected.end(), [&](const Rejected& r) {
        if (r.op != c.op) return false;
        if (c.op == "prune") return r.names == std::set<std::string>(c.names.begin(), c.names.end());
        return r.target == c.target;
    });
}

std::string root_cause(const RecordView& r) {
    if (!r.failure.empty() || r.note.ambiguous) return "other";
    if (!r.note.misapplied.empty()) return "rubric-misapplication";
    if (!r.note.unguided.empty()) {
        const auto canonical = canonical_entry_for(r.note.unguided.front());
        return catalog_entry(canonical).kind() == EntryKind::Tool ? "perceptual-hallucination" : "missing-criterion";
    }
    return "other";
}

std::vector<Candidate> growth_candidates(const PromptView& v) {
    std::map<std::pair<std::string, std::string>, Candidate> by_key;
    auto add = [&](int priority, const std::string& op, const std::string& target, int revision,
                   const std::string& demo, const std::string& why) {
        auto& c = by_key[{op, target}];
        if (c.cases.empty()) c = Candidate{priority, op, target, {}, revision, {}, why};
        if (std::find(c.cases.begin(), c.cases.end(), demo) == c.cases.end()) c.cases.push_back(demo);
    };
    for (const auto& r : v.records) {
        if (r.correct) continue;
        bool explained = false;
        for (const auto& f : r.note.unguided) {
            if (!is_family(f)) continue;
            const auto canonical = canonical_entry_for(f);
            if (is_active(v, canonical)) continue;
            add(0, "create", canonical, 0, r.demo_id, "The " + f + " attribute was judged without guidance.");
            explained = true;
        }
        for (const auto& n : r.note.misapplied) {
            if (!is_active(v, n) || !in_catalog(n)) continue;
            add(1, "modify", n, v.iteration, r.demo_id, "The advice of " + n + " misfired on a requested value.");
            explained = true;
        }
        if (!r.failure.empty() || r.note.ambiguous || !explained) {
            add(3, is_active(v, kGeneralEntry) ? "modify" : "create", kGeneralEntry,
                is_active(v, kGeneralEntry) ? v.iteration : 0, r.demo_id, "Candidates could not be told apart.");
        }
    }
    for (const auto& [name, credit] : v.credits) {
        if (credit.correct == 0 && credit.incorrect >= 3 && is_active(v, name)) {
            Candidate c{2, "deprecate", name, {}, 0, {}, name + " appears only in incorrect judgments."};
            for (const auto& r : v.records) {
                if (!r.correct && std::find(r.context.begin(), r.context.end(), name) != r.context.end()) {
                    c.cases.push_back(r.demo_id);
                }
            }
            if (!c.cases.empty()) by_key[{"deprecate", name}] = std::move(c);
        }
    }
    std::vector<Candidate> out;
    for (auto& [key, c] : by_key) out.push_back(std::move(c));
    std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.priority != b.priority) return a.priority < b.priority;
        if (a.cases.size() != b.cases.size()) return a.cases.size() > b.cases.size();
        return a.target < b.target;
    });
    return out;
}

// Entries whose families are all covered by the entries that remain.
std::vector<std::string> redundant_set(const PromptView& v) {
    std::vector<std::string> order;
    for (const auto& s : v.library) order.push_back(s.name);
    auto net = [&](const std::string& n) {
        const auto it = v.credits.find(n);
        return it == v.credits.end() ? 0 : it->second.correct - it->second.incorrect;
    };
    std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        if (is_heuristic(a) != is_heuristic(b)) return is_heuristic(a);
        if (net(a) != net(b)) return net(a) < net(b);
        return a < b;
    });
    std::set<std::string> remaining(order.begin(), order.end());
    std::vector<std::string> removed;
    for (const auto& n : order) {
        const auto fams = entry_families(n);
        if (fams.empty() && !is_heuristic(n)) continue;
        bool covered = true;
        for (const auto& f : fams) {
            const bool elsewhere = std::any_of(remaining.begin(), remaining.end(), [&](const std::string& o) {
                return o != n && entry_families(o).contains(f);
            });
            covered = covered && elsewhere;
        }
        if (covered) {
            remaining.erase(n);
            removed.push_back(n);
        }
    }
    std::sort(removed.begin(), removed.end());
    return removed;
}

std::vector<std::string> error_ids(const PromptView& v) {
    std::vector<std::string> out;
    for (const auto& r : v.records) {
        if (!r.correct) out.push_back(r.demo_id);
    }
    if (out.empty() && !v.records.empty()) out.push_back(v.records.front().demo_id);
    return out;
}

nlohmann::json to_action(const Candidate& c) {
    nlohmann::json a{{"op", c.op}, {"target", c.target}, {"rationale", c.rationale}, {"cases", c.cases}};
    if (c.op == "prune") a["names"] = c.names;
    if (c.op == "create" || c.op == "modify") a["doc"] = render_entry(catalog_entry(c.target, c.revision));
    return a;
}

std::string random_active(const PromptView& v, std::mt19937_64& rng, bool skills_only) {
    std::vector<std::string> pool;
    for (const auto& s : v.library) {
        if (in_catalog(s.name) && (!skills_only || s.kind == "skill")) pool.push_back(s.name);
    }
    if (pool.empty()) return {};
    return pool[bounded(rng, pool.size())];
}

} // namespace

nlohmann::json analysis(const ModelRequest& request, const OracleConfig& config) {
    const auto v = read_prompt(request);
    if (v.records.empty()) throw BackendError("analysis prompt holds no records", 1);

    nlohmann::json error_cases = nlohmann::json::array();
    nlohmann::json success_cases = nlohmann::json::array();
    for (const auto& r : v.records) {
        if (r.correct) success_cases.push_back({{"demo_id", r.demo_id}, {"instrumental", r.context}});
        else error_cases.push_back({{"demo_id", r.demo_id}, {"root_cause", root_cause(r)}});
    }

    auto candidates = growth_candidates(v);
    std::erase_if(candidates, [&](const Candidate& c) { return was_rejected(v, c); });
    auto rng = make_rng(config.noise_seed, "explore:" + std::to_string(v.iteration));
    const bool pruning = v.phase == "pruning";

    std::vector<Candidate> chosen;
    if (pruning) {
        Candidate prune{0, "prune", {}, redundant_set(v), 0, error_ids(v),
                        "These entries repeat coverage that other entries provide."};
        if (!prune.names.empty() && !was_rejected(v, prune)) {
            chosen.push_back(std::move(prune));
            for (const auto& c : candidates) {
                if (c.priority == 0 && chosen.size() < 1 + v.max_actions) chosen.push_back(c);
            }
        }
    }
    if (chosen.empty()) {
        const double draw = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (!pruning && draw < config.exploration) {
            if (const auto name = random_active(v, rng, true); !name.empty()) {
                chosen.push_back({0, "modify", name, {}, v.iteration, error_ids(v), "Sharpen the wording of " + name + "."});
            }
        }
        for (const auto& c : candidates) {
            if (chosen.size() >= v.max_actions) break;
            chosen.push_back(c);
        }
    }
    if (chosen.empty()) {
        if (const auto name = random_active(v, rng, false); !name.empty()) {
            chosen.push_back({0, "modify", name, {}, v.iteration, error_ids(v), "Sharpen the wording of " + name + "."});
        } else {
            chosen.push_back({0, is_active(v, kGeneralEntry) ? "modify" : "create", kGeneralEntry, {},
                              is_active(v, kGeneralEntry) ? v.iteration : 0, error_ids(v),
                              "Add guidance for candidates that cannot be told apart."});
        }
    }

    nlohmann::json actions = nlohmann::json::array();
    for (const auto& c : chosen) actions.push_back(to_action(c));
    return {{"analysis", {{"error_cases", std::move(error_cases)}, {"success_cases", std::move(success_cases)}}},
            {"actions", std::move(actions)},
            {"expected_effect", "Fewer training errors of the most common kind."}};
}

} // namespace evojudge::synthetic::detail
