#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/judge.hpp"
#include "evojudge/synthetic.hpp"

#include <gtest/gtest.h>

#include <random>

namespace evojudge::synthetic {
namespace {

// Hidden linear scorer in integer arithmetic: 1 + round_half_up(4 * hit / total).
int linear_score(const std::map<std::string, std::string>& attrs, const std::vector<Target>& targets,
                 const std::map<std::string, int>& weights) {
    long hit = 0;
    long total = 0;
    for (const auto& t : targets) {
        const long w = weights.at(t.family);
        total += w;
        const auto it = attrs.find(t.family);
        if (it != attrs.end() && it->second == t.value) hit += w;
    }
    if (total == 0) return 3;
    return 1 + static_cast<int>((8 * hit + total) / (2 * total));
}

ImageRef inline_image(const SyntheticImage& img) {
    return ImageRef::from_bytes(img.to_bytes(), std::string(kSyntheticImageType));
}

LibraryState catalog_state(const std::vector<std::string>& names) {
    std::vector<LibraryAction> actions;
    for (const auto& n : names) actions.push_back(LibraryAction::create(catalog_entry(n)));
    return commit(empty_library(), actions, 1, "catalog");
}

TEST(Oracle, ScoreMatchesIndependentLinearScorer) {
    const std::vector<Target> targets{{"text", "OPEN LATE"}, {"presence", "kite"}, {"color", "red"}};
    const std::string instruction = render_instruction(targets);
    EXPECT_EQ(instruction, "Change the sign text to \"OPEN LATE\", add a kite and turn the car red.");

    SyntheticImage source{"img-src", {}, false, {}};
    std::vector<SyntheticImage> cands{
        {"img-a", {}, false, {{"text", "OPEN LATE"}, {"presence", "kite"}, {"color", "red"}}},
        {"img-b", {}, false, {{"text", "OPEN LAET"}, {"presence", "kite"}, {"color", "red"}}},
        {"img-c", {}, false, {{"text", "OPEN LATE"}, {"presence", "none"}, {"color", "blue"}}},
        {"img-d", {}, false, {{"text", "OPNE LATE"}, {"presence", "none"}, {"color", "red"}}},
    };
    Demonstration demo;
    demo.id = "hand-1";
    demo.instruction = instruction;
    demo.source_image = inline_image(source);
    for (const auto& c : cands) demo.candidates.push_back(inline_image(c));

    const std::map<std::string, int> w{{"text", 5}, {"presence", 1}, {"color", 2}};
    OracleConfig config;
    for (const auto& [f, v] : w) config.weights[f] = v;
    SyntheticOracleBackend backend(config);

    const auto state = catalog_state({"text-and-ocr-analyzer"});
    const auto ctx = make_context(state, {}, {"text-and-ocr-analyzer"}, instruction);
    const auto j = judge(demo, ctx, backend);
    ASSERT_EQ(j.scores.size(), cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        EXPECT_EQ(j.scores[i], linear_score(cands[i].attributes, targets, w)) << "candidate " << i;
    }
    // 8/8, 3/8, 5/8, 2/8 of the weight.
    EXPECT_EQ(j.scores, (std::vector<int>{5, 3, 4, 2}));
}

TEST(Oracle, TrueScoreProperty) {
    std::mt19937 rng(11);
    const auto& fams = families();
    for (int trial = 0; trial < 500; ++trial) {
        std::map<std::string, int> w;
        std::map<std::string, double> wd;
        for (const auto& f : fams) {
            w[f] = 1 + static_cast<int>(rng() % 5);
            wd[f] = w[f];
        }
        std::vector<Target> targets;
        SyntheticImage cand{"c", {}, false, {}};
        for (const auto& f : fams) {
            if (rng() % 3 != 0) continue;
            targets.push_back({f, "v" + std::to_string(rng() % 3)});
            if (rng() % 4 != 0) cand.attributes[f] = "v" + std::to_string(rng() % 3);
        }
        EXPECT_EQ(true_score(cand, targets, wd), linear_score(cand.attributes, targets, w));
    }
}

TEST(Oracle, InstructionRoundTripProperty) {
    std::mt19937 rng(5);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const auto& fams = families();
        DemoSpec spec{{fams[seed % fams.size()]}, false, std::nullopt};
        const auto g = make_demo("t", spec, seed, default_weights());
        const auto targets = parse_instruction(g.demo.instruction);
        ASSERT_FALSE(targets.empty());
        EXPECT_EQ(render_instruction(targets), g.demo.instruction);
        // Any subset renders to text that parses back to itself.
        std::vector<Target> subset;
        for (const auto& t : targets) {
            if (rng() % 2) subset.push_back(t);
        }
        EXPECT_EQ(parse_instruction(render_instruction(subset)), subset);
    }
    EXPECT_EQ(render_instruction({}), "Leave the image as it is.");
    EXPECT_TRUE(parse_instruction("Make it nicer.").empty());
}

TEST(Oracle, UncorruptedVerdictIsTruthAndCorruptedIsWrong) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto rng = make_rng(seed, "spec");
        DemoSpec spec;
        const auto& fams = families();
        if (bounded(rng, 2)) spec.hazards.push_back(fams[bounded(rng, fams.size())]);
        spec.ambiguous = bounded(rng, 5) == 0;
        if (bounded(rng, 4) == 0) spec.trap = bounded(rng, 2) ? "realism" : "color";
        const auto g = make_demo("p-" + std::to_string(seed), spec, seed, default_weights());
        const auto targets = parse_instruction(g.demo.instruction);
        const std::vector<SyntheticImage> cands(g.images.begin() + 1, g.images.end());

        std::vector<std::string> context;
        if (bounded(rng, 2)) {
            for (const auto& t : targets) context.push_back(canonical_entry_for(t.family));
        }
        const auto v = judge(g.images[0], cands, targets, context, default_weights());
        std::vector<int> truth;
        for (const auto& c : cands) truth.push_back(true_score(c, targets, default_weights()));
        if (!v.corrupted()) {
            EXPECT_EQ(v.scores, truth);
        } else if (cands.size() >= 2) {
            EXPECT_NE(induced_ranking(v.scores), induced_ranking(truth)) << g.demo.id;
        }
    }
}

TEST(Oracle, CoverageIsMonotoneForSpecificEntries) {
    std::vector<std::string> specific;
    for (const auto& n : catalog_names()) {
        if (!is_heuristic(n)) specific.push_back(n);
    }
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto rng = make_rng(seed, "mono");
        const auto& fams = families();
        DemoSpec spec;
        for (int h = 0; h < 2; ++h) {
            if (bounded(rng, 2)) spec.hazards.push_back(fams[bounded(rng, fams.size())]);
        }
        std::sort(spec.hazards.begin(), spec.hazards.end());
        spec.hazards.erase(std::unique(spec.hazards.begin(), spec.hazards.end()), spec.hazards.end());
        const auto g = make_demo("m-" + std::to_string(seed), spec, seed, default_weights());
        const auto targets = parse_instruction(g.demo.instruction);
        const std::vector<SyntheticImage> cands(g.images.begin() + 1, g.images.end());
        std::vector<int> truth;
        for (const auto& c : cands) truth.push_back(true_score(c, targets, default_weights()));
        auto correct = [&](const std::vector<std::string>& ctx) {
            return induced_ranking(judge(g.images[0], cands, targets, ctx, default_weights()).scores) ==
                   induced_ranking(truth);
        };
        std::vector<std::string> small;
        std::vector<std::string> large;
        for (const auto& n : specific) {
            const auto pick = bounded(rng, 3);
            if (pick == 0) small.push_back(n);
            if (pick <= 1) large.push_back(n);
        }
        if (correct(small)) {
            EXPECT_TRUE(correct(large)) << g.demo.id;
        }
    }
}

TEST(Oracle, NoteRoundTrip) {
    Verdict v;
    v.unguided = {"count", "text"};
    v.misapplied = {"realism-quality-heuristics"};
    v.ambiguous = true;
    const auto f = parse_note(v.note());
    EXPECT_EQ(f.unguided, v.unguided);
    EXPECT_EQ(f.misapplied, v.misapplied);
    EXPECT_TRUE(f.ambiguous);
    const auto empty = parse_note(Verdict{}.note());
    EXPECT_TRUE(empty.unguided.empty());
    EXPECT_FALSE(empty.ambiguous);
}

TEST(Oracle, ImageBytesRoundTrip) {
    SyntheticImage src{"img-1", {"text", "count"}, true, {}};
    const auto back = SyntheticImage::from_bytes(src.to_bytes());
    EXPECT_EQ(back.image_id, "img-1");
    EXPECT_EQ(back.hazards, src.hazards);
    EXPECT_TRUE(back.ambiguous);
    SyntheticImage cand{"img-2", {}, false, {{"color", "red"}}};
    EXPECT_EQ(SyntheticImage::from_bytes(cand.to_bytes()).attributes, cand.attributes);
    EXPECT_THROW(SyntheticImage::from_bytes("\x89PNG"), ValidationError);
}

TEST(Oracle, EntryFamiliesFromNameTokens) {
    EXPECT_EQ(entry_families("text-and-ocr-analyzer"), (std::set<std::string>{"text"}));
    EXPECT_EQ(entry_families("spatial-and-object-analyzer"), (std::set<std::string>{"count", "spatial"}));
    EXPECT_TRUE(entry_families("ambiguity-and-tie-handling").empty());
    EXPECT_TRUE(is_heuristic("color-quality-heuristics"));
    EXPECT_FALSE(is_heuristic("color-and-lighting-consistency"));
}

TEST(Rng, BoundedStaysInRangeAndIsSeeded) {
    auto a = make_rng(3, "x");
    auto b = make_rng(3, "x");
    auto c = make_rng(3, "y");
    std::vector<int> hist(7, 0);
    bool differs = false;
    for (int i = 0; i < 7000; ++i) {
        const auto va = bounded(a, 7);
        ASSERT_LT(va, 7u);
        EXPECT_EQ(va, bounded(b, 7));
        differs |= va != bounded(c, 7);
        ++hist[va];
    }
    EXPECT_TRUE(differs);
    for (int h : hist) EXPECT_GT(h, 800);
    EXPECT_THROW(bounded(a, 0), ValidationError);
}

TEST(Dataset, DeterministicAndWellFormed) {
    const auto a = make_dataset(7, 7, default_weights());
    const auto b = make_dataset(7, 7, default_weights());
    ASSERT_EQ(a.size(), 100u);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(nlohmann::json(a[i].demo), nlohmann::json(b[i].demo));
        ids.insert(a[i].demo.id);
        EXPECT_NO_THROW(a[i].demo.validate());
        EXPECT_GE(a[i].demo.k(), 2u);
        EXPECT_LE(a[i].demo.k(), 4u);
        EXPECT_EQ(a[i].images.size(), a[i].demo.k() + 1);
        std::vector<int> truth;
        const auto targets = parse_instruction(a[i].demo.instruction);
        for (std::size_t c = 1; c < a[i].images.size(); ++c) {
            truth.push_back(true_score(a[i].images[c], targets, default_weights()));
        }
        EXPECT_EQ(*a[i].demo.gt_scores, truth);
    }
    EXPECT_EQ(ids.size(), 100u);
    EXPECT_TRUE(ids.contains("syn-000"));
    EXPECT_TRUE(ids.contains("syn-099"));
}

} // namespace
} // namespace evojudge::synthetic
