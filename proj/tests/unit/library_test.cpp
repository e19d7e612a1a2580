#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/library.hpp"

#include <gtest/gtest.h>

#include "../support/generators.hpp"

#include <filesystem>

namespace evojudge {
namespace {

const std::filesystem::path kFixtures = std::filesystem::path(EVOJUDGE_ASSET_DIR) / "fixtures" / "library";

std::size_t parse_error_line(const std::string& text) {
    try {
        (void)parse_entry(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    ADD_FAILURE() << "no ParseError for:\n" << text;
    return 0;
}

TEST(ParseEntry, FixtureSkill) {
    const auto e = parse_entry(read_file(kFixtures / "realism-and-artifact-penalties.md"));
    EXPECT_EQ(e.kind(), EntryKind::Skill);
    EXPECT_EQ(e.name(), "realism-and-artifact-penalties");
    ASSERT_GE(e.skill().rubric.size(), 2u);
    EXPECT_EQ(e.skill().rubric[0].criterion, "Rendering artifacts");
    EXPECT_EQ(e.skill().rubric[1].criterion, "Requested unrealism is not a defect");
}

TEST(ParseEntry, FixtureTool) {
    const auto e = parse_entry(read_file(kFixtures / "text-and-ocr-analyzer.md"));
    ASSERT_EQ(e.kind(), EntryKind::Tool);
    const auto& t = e.tool();
    EXPECT_EQ(t.protocol.size(), 5u);
    EXPECT_NE(t.protocol[1].find("Read all text"), std::string::npos);
    ASSERT_TRUE(t.query_schema.has_value());
    EXPECT_EQ(t.query_schema->size(), t.outputs.size());
}

TEST(ParseEntry, SpatialToolSchema) {
    const auto e = parse_entry(read_file(kFixtures / "spatial-and-object-analyzer.md"));
    const std::vector<SchemaField> want{{"objects", "array<object>"}, {"relations", "array<string>"}};
    EXPECT_EQ(e.tool().query_schema, want);
}

TEST(ParseEntry, EveryFixtureRendersByteIdentically) {
    int skills = 0;
    int tools = 0;
    for (const auto& f : std::filesystem::directory_iterator(kFixtures)) {
        const auto text = read_file(f.path());
        const auto e = parse_entry(text);
        EXPECT_EQ(render_entry(e), text) << f.path();
        EXPECT_EQ(e.name() + ".md", f.path().filename().string());
        (e.kind() == EntryKind::Skill ? skills : tools)++;
    }
    EXPECT_EQ(skills, 3);
    EXPECT_EQ(tools, 4);
}

TEST(ParseEntry, EmptyInputIsAnError) {
    EXPECT_THROW((void)parse_entry(""), ParseError);
    EXPECT_THROW((void)parse_entry("\n\n"), ParseError);
}

TEST(ParseEntry, ErrorsCarryLineNumbers) {
    const std::string head = "---\nkind: skill\nname: a-b\ndescription: d\n---\n\n# a-b\n\n";
    EXPECT_EQ(parse_error_line(head + "## Rubric\n\nloose text\n"), 11u);
    EXPECT_EQ(parse_error_line(head + "## Rubric\n\n### c\n\n- 7: too high\n"), 13u);
    EXPECT_EQ(parse_error_line(head + "## Rubric\n\n### c\n\n## Bogus\n\nx\n"), 13u);
    EXPECT_EQ(parse_error_line("---\nkind: skill\nname: Bad_Name\ndescription: d\n---\n"), 1u);
    EXPECT_EQ(parse_error_line("---\nkind: skill\nname: a\ncolour: red\n---\n"), 4u);
    // missing Rubric
    EXPECT_GT(parse_error_line(head), 0u);
    // title mismatch
    EXPECT_EQ(parse_error_line("---\nkind: skill\nname: a-b\ndescription: d\n---\n\n# other\n"), 7u);
}

TEST(ParseEntry, ToolRequiresConditionsAndProtocol) {
    const std::string head = "---\nkind: tool\nname: t\ndescription: d\n---\n\n# t\n\n## Purpose\n\np\n\n";
    EXPECT_THROW((void)parse_entry(head + "## Protocol\n\n1. go\n"), ParseError);
    EXPECT_THROW((void)parse_entry(head + "## Invocation Conditions\n\n- always\n"), ParseError);
    EXPECT_NO_THROW((void)parse_entry(head + "## Invocation Conditions\n\n- always\n\n## Protocol\n\n1. go\n"));
    // schema fields must mirror outputs
    EXPECT_THROW((void)parse_entry(head + "## Outputs\n\n- `a` (text): x\n\n## Invocation Conditions\n\n- always\n\n"
                                          "## Protocol\n\n1. go\n\n## Query Schema\n\n- `b`: string\n"),
                 ParseError);
}

TEST(ParseEntry, ContinuationLinesAndCrlfAreNormalised) {
    const std::string text =
        "---\r\nkind: skill\r\nname: s\r\ndescription: one   line\r\n---\r\n\r\n# s\r\n\r\n## Rubric\r\n\r\n"
        "### crit\r\n\r\n- 1: bad\r\n  and worse\r\n";
    const auto e = parse_entry(text);
    EXPECT_EQ(e.description(), "one line");
    EXPECT_EQ(e.skill().rubric[0].score_anchors.at(1), "bad and worse");
    EXPECT_EQ(parse_entry(render_entry(e)), e);
}

TEST(RenderEntry, MinimalSkill) {
    LibraryEntry e{SkillDoc{"m", "d", {{"c", {}}}, {}}, EntryStatus::Active, {}};
    const auto text = render_entry(e);
    EXPECT_EQ(text, "---\nkind: skill\nname: m\ndescription: d\n---\n\n# m\n\n## Rubric\n\n### c\n");
    EXPECT_EQ(parse_entry(text), e);
}

TEST(RenderEntry, RandomEntriesRoundTrip) {
    std::mt19937 rng(2024);
    for (int i = 0; i < 300; ++i) {
        const auto e = gen::entry(rng);
        ASSERT_NO_THROW(validate(e)) << render_entry(e);
        const auto text = render_entry(e);
        const auto back = parse_entry(text);
        ASSERT_EQ(back, e) << text;
        ASSERT_EQ(render_entry(back), text);
    }
}

TEST(Validate, NameRule) {
    EXPECT_TRUE(is_valid_entry_name("a"));
    EXPECT_TRUE(is_valid_entry_name("text-and-ocr-2"));
    EXPECT_FALSE(is_valid_entry_name(""));
    EXPECT_FALSE(is_valid_entry_name("-a"));
    EXPECT_FALSE(is_valid_entry_name("a--b"));
    EXPECT_FALSE(is_valid_entry_name("A"));
    EXPECT_FALSE(is_valid_entry_name("a_b"));
}

} // namespace
} // namespace evojudge
