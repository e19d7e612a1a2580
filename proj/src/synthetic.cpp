#include "evojudge/synthetic.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <functional>
#include <limits>
#include <sstream>

namespace evojudge::synthetic {

namespace {

struct FamilyInfo {
    std::string name;
    std::vector<std::string> keywords;
    double weight;
    std::vector<std::string> values;          // conventional requests
    std::vector<std::string> unconventional;  // requests a heuristic gets wrong
    std::string phrase;                       // "{}" marks the value
    std::string pattern;                      // one capture group for the value, or none
    std::string fixed_value;                  // value when the phrase has no slot
    std::string miss_value;                   // candidate value when the request is missed
};

const std::vector<FamilyInfo>& table() {
    static const std::vector<FamilyInfo> t{
        {"text", {"text", "ocr", "typography"}, 3, {"OPEN LATE", "FRESH BREAD", "NO PARKING", "WELCOME HOME", "GRAND SALE"}, {},
         "change the sign text to \"{}\"", R"re(change the sign text to "([^"]+)")re", "", ""},
        {"presence", {"qa", "hallucination", "presence"}, 3, {"umbrella", "bicycle", "lantern", "kite", "bench"}, {},
         "add a {}", R"re(\badd an? ([a-z]+))re", "", "none"},
        {"count", {"object", "count", "counting"}, 2, {"2", "3", "4", "5", "6"}, {},
         "make it show exactly {} apples", R"re(show exactly (\d+) apples)re", "", ""},
        {"spatial", {"spatial"}, 2, {"left", "right", "top", "bottom"}, {},
         "move the cat to the {} of the frame", R"re(move the cat to the ([a-z]+) of the frame)re", "", ""},
        {"style", {"style", "cultural"}, 2, {"ukiyo-e", "cubist", "watercolor", "art-deco", "pixel-art"}, {},
         "render it in {} style", R"re(render it in ([a-z-]+) style)re", "", ""},
        {"identity", {"identity", "face"}, 3, {}, {}, "keep the person's face unchanged",
         R"re(keep the person's face unchanged)re", "preserved", "altered"},
        {"layout", {"description", "layout", "objective"}, 2, {}, {}, "keep the overall layout of the scene",
         R"re(keep the overall layout of the scene)re", "preserved", "shifted"},
        {"realism", {"realism"}, 2, {"photorealistic", "natural"}, {"surreal", "dreamlike"},
         "make the result look {}", R"re(make the result look ([a-z]+))re", "", ""},
        {"artifact", {"artifact"}, 2, {}, {}, "leave no visible artifacts", R"re(leave no visible artifacts)re", "clean",
         "smeared"},
        {"background", {"background"}, 2, {"beach", "forest", "snowfield", "desert", "harbor"}, {},
         "replace the background with a {}", R"re(replace the background with an? ([a-z]+))re", "", ""},
        {"color", {"color"}, 1, {"red", "blue", "green", "yellow"}, {"neon-pink", "neon-green"}, "turn the car {}",
         R"re(turn the car ([a-z-]+))re", "", ""},
        {"lighting", {"lighting"}, 1, {"golden-hour", "overcast", "night", "studio"}, {},
         "relight the scene as {}", R"re(relight the scene as ([a-z-]+))re", "", ""},
    };
    return t;
}

const FamilyInfo& info(std::string_view family) {
    for (const auto& f : table()) {
        if (f.name == family) return f;
    }
    throw ValidationError("unknown attribute family '" + std::string(family) + "'");
}

std::vector<std::string> split_tokens(std::string_view name) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : name) {
        if (c == '-') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
    return v[bounded(rng, v.size())];
}

} // namespace

const std::vector<std::string>& families() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& f : table()) out.push_back(f.name);
        return out;
    }();
    return names;
}

bool is_family(std::string_view name) {
    const auto& f = families();
    return std::find(f.begin(), f.end(), name) != f.end();
}

const std::map<std::string, double>& default_weights() {
    static const std::map<std::string, double> w = [] {
        std::map<std::string, double> out;
        for (const auto& f : table()) out[f.name] = f.weight;
        return out;
    }();
    return w;
}

std::set<std::string> entry_families(std::string_view entry_name) {
    std::set<std::string> out;
    for (const auto& token : split_tokens(entry_name)) {
        for (const auto& f : table()) {
            if (std::find(f.keywords.begin(), f.keywords.end(), token) != f.keywords.end()) out.insert(f.name);
        }
    }
    return out;
}

bool is_heuristic(std::string_view entry_name) {
    const auto tokens = split_tokens(entry_name);
    return std::find(tokens.begin(), tokens.end(), "heuristics") != tokens.end();
}

bool unconventional(const Target& t) {
    const auto& u = info(t.family).unconventional;
    return std::find(u.begin(), u.end(), t.value) != u.end();
}

std::string render_instruction(const std::vector<Target>& targets) {
    std::vector<std::string> phrases;
    for (const auto& t : targets) {
        auto phrase = info(t.family).phrase;
        if (const auto slot = phrase.find("{}"); slot != std::string::npos) phrase.replace(slot, 2, t.value);
        phrases.push_back(phrase);
    }
    if (phrases.empty()) return "Leave the image as it is.";
    std::string out;
    for (std::size_t i = 0; i < phrases.size(); ++i) {
        if (i > 0) out += i + 1 == phrases.size() ? " and " : ", ";
        out += phrases[i];
    }
    out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out + ".";
}

std::vector<Target> parse_instruction(std::string_view instruction) {
    std::vector<Target> out;
    const std::string text(instruction);
    static const std::vector<std::regex> patterns = [] {
        std::vector<std::regex> out;
        for (const auto& f : table()) out.emplace_back(f.pattern, std::regex::icase);
        return out;
    }();
    for (std::size_t i = 0; i < table().size(); ++i) {
        const auto& f = table()[i];
        std::smatch m;
        if (!std::regex_search(text, m, patterns[i])) continue;
        out.push_back({f.name, m.size() > 1 ? m[1].str() : f.fixed_value});
    }
    return out;
}

std::string SyntheticImage::to_bytes() const {
    nlohmann::json j{{"kind", "synthetic-image"}, {"image_id", image_id}};
    if (attributes.empty()) {
        j["hazards"] = hazards;
        j["ambiguous"] = ambiguous;
    } else {
        j["attributes"] = attributes;
    }
    return j.dump();
}

SyntheticImage SyntheticImage::from_bytes(std::string_view bytes) {
    const auto j = nlohmann::json::parse(bytes, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("kind", "") != "synthetic-image") {
        throw ValidationError("not a synthetic image");
    }
    SyntheticImage img;
    img.image_id = j.value("image_id", "");
    img.hazards = j.value("hazards", std::vector<std::string>{});
    img.ambiguous = j.value("ambiguous", false);
    img.attributes = j.value("attributes", std::map<std::string, std::string>{});
    return img;
}

namespace {

int weighted_score(const std::vector<Target>& targets, const std::map<std::string, double>& weights,
                   const std::function<bool(const Target&)>& matched) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& t : targets) {
        const auto it = weights.find(t.family);
        const double w = it != weights.end() ? it->second : default_weights().at(t.family);
        den += w;
        if (matched(t)) num += w;
    }
    if (den <= 0.0) return 3;
    return 1 + static_cast<int>(std::floor(4.0 * num / den + 0.5 + 1e-9));
}

} // namespace

int true_score(const SyntheticImage& candidate, const std::vector<Target>& targets,
               const std::map<std::string, double>& weights) {
    return weighted_score(targets, weights, [&](const Target& t) {
        const auto it = candidate.attributes.find(t.family);
        return it != candidate.attributes.end() && it->second == t.value;
    });
}

std::string Verdict::note() const {
    auto join = [](const std::vector<std::string>& v) {
        if (v.empty()) return std::string("none");
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
        return out;
    };
    std::string out = "Scores follow how well each candidate matches the requested attributes. unguided: " +
                      join(unguided) + "; misapplied: " + join(misapplied);
    if (ambiguous) out += "; ambiguous";
    return out;
}

NoteFields parse_note(std::string_view note) {
    NoteFields out;
    const std::string text(note);
    auto list_after = [&](const std::string& key) {
        std::vector<std::string> items;
        const auto pos = text.find(key);
        if (pos == std::string::npos) return items;
        auto end = text.find(';', pos);
        if (end == std::string::npos) end = text.size();
        std::stringstream ss(text.substr(pos + key.size(), end - pos - key.size()));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = normalize_text(item);
            while (!item.empty() && item.back() == '.') item.pop_back();
            if (!item.empty() && item != "none") items.push_back(item);
        }
        return items;
    };
    out.unguided = list_after("unguided:");
    out.misapplied = list_after("misapplied:");
    out.ambiguous = text.find("; ambiguous") != std::string::npos;
    return out;
}

Verdict judge(const SyntheticImage& source, const std::vector<SyntheticImage>& candidates,
              const std::vector<Target>& targets, const std::vector<std::string>& context_names,
              const std::map<std::string, double>& weights) {
    Verdict v;
    std::set<std::string> requested;
    for (const auto& t : targets) requested.insert(t.family);
    std::set<std::string> covered;
    for (const auto& n : context_names) {
        for (const auto& f : entry_families(n)) covered.insert(f);
    }
    std::set<std::string> inverted;
    for (const auto& h : source.hazards) {
        if (requested.contains(h) && !covered.contains(h)) {
            inverted.insert(h);
            v.unguided.push_back(h);
        }
    }
    std::vector<std::string> sorted_context(context_names.begin(), context_names.end());
    std::sort(sorted_context.begin(), sorted_context.end());
    for (const auto& n : sorted_context) {
        if (!is_heuristic(n)) continue;
        bool fired = false;
        for (const auto& t : targets) {
            if (entry_families(n).contains(t.family) && unconventional(t)) {
                inverted.insert(t.family);
                fired = true;
            }
        }
        if (fired) v.misapplied.push_back(n);
    }
    v.ambiguous = source.ambiguous;

    std::vector<int> truth;
    for (const auto& c : candidates) {
        truth.push_back(true_score(c, targets, weights));
        v.scores.push_back(weighted_score(targets, weights, [&](const Target& t) {
            const auto it = c.attributes.find(t.family);
            const bool match = it != c.attributes.end() && it->second == t.value;
            return match != inverted.contains(t.family);
        }));
    }
    if (!v.corrupted() || candidates.empty()) return v;
    if (induced_ranking(v.scores) != induced_ranking(truth)) return v;

    // Misperception left the ranking intact; disturb it by candidate identity so
    // the outcome does not depend on presentation order.
    const auto groups = induced_ranking(v.scores).groups();
    auto lowest_id = [&](const std::vector<std::size_t>& group) {
        return *std::min_element(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
            return candidates[a].image_id < candidates[b].image_id;
        });
    };
    if (groups.size() == 1) {
        auto& s = v.scores[lowest_id(groups[0])];
        s = s < kMaxScore ? s + 1 : s - 1;
    } else {
        std::swap(v.scores[lowest_id(groups[0])], v.scores[lowest_id(groups[1])]);
    }
    return v;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::string_view salt) {
    return std::mt19937_64(splitmix(seed ^ splitmix(fnv1a(salt))));
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw ValidationError("bounded() needs a positive range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// ---------------------------------------------------------------------------
// Catalog of documents the synthetic orchestrator writes.

namespace {

struct CatalogItem {
    std::string name;
    EntryKind kind;
    std::string description;
    std::vector<std::string> focus;  // criteria for skills, protocol steps for tools
    std::string condition;
};

const std::vector<CatalogItem>& catalog() {
    static const std::vector<CatalogItem> c{
        {"text-and-ocr-analyzer", EntryKind::Tool,
         "Reads rendered text in each candidate and compares it with the requested wording.",
         {"Extract the requested wording from the instruction.", "Read the candidate's text character by character.",
          "Report every difference from the requested wording."},
         "The instruction asks to add or change text."},
        {"visual-qa-tool", EntryKind::Tool, "Answers closed questions about whether requested objects are present.",
         {"Ask one closed question per requested object.", "Answer from the candidate pixels alone."},
         "The instruction asks to add or remove an object."},
        {"spatial-and-object-analyzer", EntryKind::Tool,
         "Counts requested objects and reports their positions and relations.",
         {"List the object classes in the instruction.", "Count instances one at a time.",
          "Report the side of the frame each object occupies."},
         "The instruction names a quantity or a position."},
        {"cultural-and-style-knowledge-oracle", EntryKind::Tool,
         "Names the artistic style a candidate shows and checks it against the request.",
         {"Identify palette, brushwork and motifs.", "Name the closest style and compare it with the request."},
         "The instruction names an art style."},
        {"identity-preservation-checker", EntryKind::Tool,
         "Compares faces in source and candidate to confirm the person is unchanged.",
         {"Locate each face in source and candidate.", "Compare facial structure and report whether identity holds."},
         "The instruction asks to keep a person or face unchanged."},
        {"objective-visual-description-first", EntryKind::Skill,
         "Describe every image factually before scoring it.",
         {"Each image is described before any score is given.", "The overall layout is compared with the source."},
         ""},
        {"realism-quality-heuristics", EntryKind::Skill, "Rewards photographic realism in every edit.",
         {"The result looks like an unedited photograph.", "Stylised or unreal content is penalised."}, ""},
        {"realism-and-artifact-penalties", EntryKind::Skill,
         "Penalise rendering artifacts while accepting unrealism the instruction asks for.",
         {"Seams, smears and warped shapes are penalised.", "Requested unrealism is not a defect."}, ""},
        {"style-and-background-transformation-evaluation", EntryKind::Skill,
         "Judge background and style changes while holding the foreground fixed.",
         {"The requested background or style covers the intended area.", "The foreground subject is unchanged."},
         ""},
        {"color-quality-heuristics", EntryKind::Skill, "Prefers natural, well balanced colour in every edit.",
         {"Colours look natural and balanced.", "Garish or saturated colours are penalised."}, ""},
        {"color-and-lighting-consistency", EntryKind::Skill,
         "Check that requested colour and lighting changes are applied and physically consistent.",
         {"The requested colour is applied to the named object.",
          "Light direction and intensity match the requested lighting."},
         ""},
        {"ambiguity-and-tie-handling", EntryKind::Skill,
         "Give equal scores when candidates cannot be told apart on any requested attribute.",
         {"Candidates that fail the instruction in the same way receive equal scores."}, ""},
    };
    return c;
}

} // namespace

std::string canonical_entry_for(std::string_view family) {
    static const std::map<std::string, std::string, std::less<>> m{
        {"text", "text-and-ocr-analyzer"},
        {"presence", "visual-qa-tool"},
        {"count", "spatial-and-object-analyzer"},
        {"spatial", "spatial-and-object-analyzer"},
        {"style", "cultural-and-style-knowledge-oracle"},
        {"identity", "identity-preservation-checker"},
        {"layout", "objective-visual-description-first"},
        {"realism", "realism-quality-heuristics"},
        {"artifact", "realism-and-artifact-penalties"},
        {"background", "style-and-background-transformation-evaluation"},
        {"color", "color-quality-heuristics"},
        {"lighting", "color-and-lighting-consistency"},
    };
    const auto it = m.find(family);
    if (it == m.end()) throw ValidationError("unknown attribute family '" + std::string(family) + "'");
    return it->second;
}

const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& c : catalog()) out.push_back(c.name);
        return out;
    }();
    return names;
}

LibraryEntry catalog_entry(std::string_view name, int revision) {
    const auto it = std::find_if(catalog().begin(), catalog().end(), [&](const auto& c) { return c.name == name; });
    if (it == catalog().end()) throw NotFoundError("no catalog entry '" + std::string(name) + "'");
    const auto rev = " (revision " + std::to_string(revision) + ")";
    if (it->kind == EntryKind::Skill) {
        SkillDoc d;
        d.name = it->name;
        d.description = it->description;
        for (const auto& f : it->focus) {
            d.rubric.push_back({f, {{1, "Clearly violated."}, {3, "Partly met."}, {5, "Fully met."}}});
        }
        if (revision > 0) {
            d.examples.push_back({"A training error was traced to this skill" + rev + ".",
                                  "Apply each criterion only to attributes the instruction names."});
        }
        return LibraryEntry{d, EntryStatus::Active, {}};
    }
    ToolDoc d;
    d.name = it->name;
    d.description = it->description;
    d.purpose = it->description;
    d.inputs = {{"candidate_image", "image", "One edited candidate."},
                {"instruction", "text", "The editing instruction."}};
    d.outputs = {{"finding", "string", "What the analysis observed."},
                 {"satisfied", "boolean", "Whether the requested attribute is present."}};
    d.invocation_conditions = {it->condition};
    d.protocol = it->focus;
    if (revision > 0) d.protocol.push_back("Double-check the observation before reporting" + rev + ".");
    d.query_schema = std::vector<SchemaField>{{"finding", "string"}, {"satisfied", "boolean"}};
    return LibraryEntry{d, EntryStatus::Active, {}};
}

// ---------------------------------------------------------------------------
// Dataset

GeneratedDemo make_demo(const std::string& id, const DemoSpec& spec, std::uint64_t seed,
                        const std::map<std::string, double>& weights) {
    auto rng = make_rng(seed, "demo:" + id);
    std::vector<std::string> fams(spec.hazards.begin(), spec.hazards.end());
    if (spec.trap && std::find(fams.begin(), fams.end(), *spec.trap) == fams.end()) fams.push_back(*spec.trap);
    // One or two requested families beyond the hazards, drawn from families no
    // hazard of this demo touches.
    std::vector<std::string> pool;
    for (const auto& f : families()) {
        if (std::find(fams.begin(), fams.end(), f) == fams.end()) pool.push_back(f);
    }
    const auto extra = 1 + bounded(rng, 2);
    for (std::uint64_t i = 0; i < extra && !pool.empty(); ++i) {
        const auto k = bounded(rng, pool.size());
        fams.push_back(pool[k]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    }
    std::sort(fams.begin(), fams.end(), [](const std::string& a, const std::string& b) {
        const auto& f = families();
        return std::find(f.begin(), f.end(), a) < std::find(f.begin(), f.end(), b);
    });

    std::vector<Target> targets;
    for (const auto& f : fams) {
        const auto& fi = info(f);
        std::string value;
        if (spec.trap && *spec.trap == f) {
            value = pick(rng, fi.unconventional);
        } else if (!fi.values.empty()) {
            value = pick(rng, fi.values);
        } else {
            value = fi.fixed_value;
        }
        targets.push_back({f, value});
    }

    auto image_id = [&](std::size_t index) {
        return "img-" + sha256_hex(id + "/" + std::to_string(index) + "/" + std::to_string(seed)).substr(0, 12);
    };
    GeneratedDemo out;
    out.spec = spec;
    SyntheticImage source;
    source.image_id = image_id(0);
    source.hazards = spec.hazards;
    source.ambiguous = spec.ambiguous;
    out.images.push_back(source);

    auto miss = [&](const Target& t) {
        const auto& fi = info(t.family);
        if (!fi.miss_value.empty()) return fi.miss_value;
        if (t.family == "text") {
            auto v = t.value;
            const auto i = 1 + bounded(rng, v.size() - 2);
            std::swap(v[i], v[i + (v[i + 1] == ' ' ? -1 : 1)]);
            if (v == t.value) v += "S";
            return v;
        }
        if (t.family == "count") return std::to_string(std::stoi(t.value) + (bounded(rng, 2) ? 1 : -1));
        std::vector<std::string> others;
        for (const auto& v : fi.values) {
            if (v != t.value) others.push_back(v);
        }
        for (const auto& v : fi.unconventional) {
            if (v != t.value) others.push_back(v);
        }
        return pick(rng, others);
    };

    const std::size_t k = 2 + bounded(rng, 3);
    Demonstration& d = out.demo;
    d.id = id;
    d.instruction = render_instruction(targets);
    d.source_image = ImageRef::from_path("images/" + source.image_id + ".json");
    std::vector<int> gt;
    for (std::size_t c = 0; c < k; ++c) {
        SyntheticImage cand;
        cand.image_id = image_id(c + 1);
        for (const auto& t : targets) cand.attributes[t.family] = bounded(rng, 2) ? t.value : miss(t);
        gt.push_back(true_score(cand, targets, weights));
        d.candidates.push_back(ImageRef::from_path("images/" + cand.image_id + ".json"));
        out.images.push_back(std::move(cand));
    }
    d.gt_scores = gt;
    return out;
}

} // namespace evojudge::synthetic
