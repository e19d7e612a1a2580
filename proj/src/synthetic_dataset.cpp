#include "evojudge/synthetic.hpp"

#include "evojudge/errors.hpp"
#include "evojudge/evolution.hpp"

#include <fstream>

namespace evojudge::synthetic {

namespace {

DemoSpec single(std::string family) { return {{std::move(family)}, false, std::nullopt}; }
DemoSpec pair(std::string a, std::string b) { return {{std::move(a), std::move(b)}, false, std::nullopt}; }
DemoSpec clean() { return {}; }
DemoSpec trap(std::string family) { return {{}, false, std::move(family)}; }
DemoSpec ambiguous() { return {{}, true, std::nullopt}; }

void repeat(std::vector<DemoSpec>& out, const DemoSpec& spec, int n) {
    for (int i = 0; i < n; ++i) out.push_back(spec);
}

std::vector<DemoSpec> train_specs() {
    std::vector<DemoSpec> s;
    repeat(s, single("text"), 6);
    repeat(s, single("presence"), 5);
    repeat(s, single("count"), 5);
    repeat(s, single("style"), 4);
    repeat(s, single("identity"), 4);
    repeat(s, single("color"), 4);
    repeat(s, single("realism"), 4);
    repeat(s, single("layout"), 3);
    repeat(s, single("background"), 3);
    repeat(s, single("artifact"), 2);
    repeat(s, single("lighting"), 2);
    repeat(s, ambiguous(), 6);
    repeat(s, clean(), 10);
    s.push_back(trap("realism"));
    s.push_back(trap("color"));
    return s;
}

std::vector<DemoSpec> val_specs() {
    std::vector<DemoSpec> s;
    repeat(s, clean(), 15);
    s.push_back(trap("realism"));
    s.push_back(trap("color"));
    for (const auto* f : {"text", "presence", "count", "style", "layout", "realism", "artifact", "background"}) {
        s.push_back(single(f));
    }
    s.push_back(single("color"));
    repeat(s, single("lighting"), 2);
    repeat(s, single("identity"), 2);
    repeat(s, ambiguous(), 5);
    s.push_back(pair("text", "color"));
    s.push_back(pair("count", "identity"));
    s.push_back(pair("background", "lighting"));
    s.push_back(pair("realism", "color"));
    s.push_back(pair("spatial", "identity"));
    return s;
}

std::string demo_id(std::size_t i) {
    std::string n = std::to_string(i);
    return "syn-" + std::string(3 - n.size(), '0') + n;
}

} // namespace

std::vector<GeneratedDemo> make_dataset(std::uint64_t seed, std::uint64_t split_seed,
                                        const std::map<std::string, double>& weights) {
    const auto train = train_specs();
    const auto val = val_specs();
    const std::size_t n = train.size() + val.size();
    const auto order = shuffled_indices(n, split_seed);
    std::vector<DemoSpec> specs(n);
    for (std::size_t i = 0; i < n; ++i) specs[order[i]] = i < train.size() ? train[i] : val[i - train.size()];
    std::vector<GeneratedDemo> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_demo(demo_id(i), specs[i], seed, weights));
    return out;
}

void write_dataset(const std::vector<GeneratedDemo>& demos, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream jsonl(dir / "demos.jsonl", std::ios::trunc);
    for (const auto& g : demos) {
        jsonl << nlohmann::json(g.demo).dump() << "\n";
        for (const auto& img : g.images) {
            std::ofstream f(dir / "images" / (img.image_id + ".json"), std::ios::trunc);
            f << img.to_bytes();
            if (!f) throw Error("cannot write image " + img.image_id);
        }
    }
    if (!jsonl) throw Error("cannot write " + (dir / "demos.jsonl").string());
}

std::vector<Demonstration> inline_demos(const std::vector<GeneratedDemo>& demos) {
    std::vector<Demonstration> out;
    for (const auto& g : demos) {
        auto d = g.demo;
        d.source_image = ImageRef::from_bytes(g.images[0].to_bytes(), std::string(kSyntheticImageType));
        for (std::size_t c = 0; c < d.candidates.size(); ++c) {
            d.candidates[c] = ImageRef::from_bytes(g.images[c + 1].to_bytes(), std::string(kSyntheticImageType));
        }
        out.push_back(std::move(d));
    }
    return out;
}

} // namespace evojudge::synthetic
