#pragma once

// A small synthetic world for running the evolution loop without hosted models.
//
// "Images" are JSON documents. A source image lists the attribute families
// that are hard to perceive without guidance (`hazards`) and whether the demo
// is inherently ambiguous. A candidate carries one value per attribute family
// the instruction talks about. Instructions are built from fixed phrases, one
// per family, so the oracle can read the requested value back.
//
// The oracle judges a candidate by comparing its attributes with the requested
// values. A hazard family is misperceived unless some context entry covers it;
// an over-general "heuristics" entry misfires when the instruction asks for an
// unconventional value of a family it covers. Any misperception makes the
// predicted ranking wrong.

#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/preference.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace evojudge::synthetic {

const std::vector<std::string>& families();
bool is_family(std::string_view name);
const std::map<std::string, double>& default_weights();

// Families an entry covers, from the dash-separated tokens of its name.
std::set<std::string> entry_families(std::string_view entry_name);
// Over-general entries carry the token "heuristics" in their name.
bool is_heuristic(std::string_view entry_name);

struct Target {
    std::string family;
    std::string value;
    bool operator==(const Target&) const = default;
};

// Requested values that an over-general heuristic gets wrong.
bool unconventional(const Target& t);

std::string render_instruction(const std::vector<Target>& targets);
// Targets named by the instruction, in family order. Unrecognised text is ignored.
std::vector<Target> parse_instruction(std::string_view instruction);

struct SyntheticImage {
    std::string image_id;
    std::vector<std::string> hazards;  // source only
    bool ambiguous = false;            // source only
    std::map<std::string, std::string> attributes;  // candidates only

    [[nodiscard]] bool is_source() const noexcept { return attributes.empty(); }
    [[nodiscard]] std::string to_bytes() const;
    static SyntheticImage from_bytes(std::string_view bytes);  // throws ValidationError
};

// 1 + round_half_up(4 * sum_f w_f * [attr_f == target_f] / sum_f w_f) over the
// requested families. 3 when nothing is requested.
int true_score(const SyntheticImage& candidate, const std::vector<Target>& targets,
               const std::map<std::string, double>& weights);

struct Verdict {
    std::vector<int> scores;
    std::vector<std::string> unguided;    // hazard families nobody covered
    std::vector<std::string> misapplied;  // heuristic entries that misfired
    bool ambiguous = false;
    [[nodiscard]] bool corrupted() const { return ambiguous || !unguided.empty() || !misapplied.empty(); }
    [[nodiscard]] std::string note() const;
};

// Oracle judgment of `candidates` under a context holding `context_names`.
Verdict judge(const SyntheticImage& source, const std::vector<SyntheticImage>& candidates,
              const std::vector<Target>& targets, const std::vector<std::string>& context_names,
              const std::map<std::string, double>& weights);

struct NoteFields {
    std::vector<std::string> unguided;
    std::vector<std::string> misapplied;
    bool ambiguous = false;
};
NoteFields parse_note(std::string_view note);

// Canonical library entry that addresses `family`.
std::string canonical_entry_for(std::string_view family);
// Catalog document for a known entry name; `revision` > 0 adds a revision note.
LibraryEntry catalog_entry(std::string_view name, int revision = 0);
const std::vector<std::string>& catalog_names();

// Deterministic stream keyed by (seed, salt).
std::mt19937_64 make_rng(std::uint64_t seed, std::string_view salt);
// Uniform integer in [0, n) by rejection sampling; identical on every platform.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n);

// ---------------------------------------------------------------------------
// Dataset

struct DemoSpec {
    std::vector<std::string> hazards;
    bool ambiguous = false;
    std::optional<std::string> trap;  // family whose requested value is unconventional
};

struct GeneratedDemo {
    Demonstration demo;  // image refs point to images/<image_id>.json
    std::vector<SyntheticImage> images;  // source first
    DemoSpec spec;
};

// Builds one demonstration from a spec; `salt` seeds its attribute draws.
GeneratedDemo make_demo(const std::string& id, const DemoSpec& spec, std::uint64_t seed,
                        const std::map<std::string, double>& weights);

// The committed 100-demonstration set: ids syn-000..syn-099, composed so that
// the ids landing in validation under `split_seed` get the validation specs.
std::vector<GeneratedDemo> make_dataset(std::uint64_t seed, std::uint64_t split_seed,
                                        const std::map<std::string, double>& weights);

// Writes demos.jsonl and images/<image_id>.json under `dir`.
void write_dataset(const std::vector<GeneratedDemo>& demos, const std::filesystem::path& dir);

// Demonstrations with their images inlined, for in-memory use.
std::vector<Demonstration> inline_demos(const std::vector<GeneratedDemo>& demos);

// ---------------------------------------------------------------------------
// Backend

class SyntheticOracleBackend : public Backend {
public:
    explicit SyntheticOracleBackend(OracleConfig config = {}, std::size_t max_in_flight = 8);
    [[nodiscard]] std::string id() const override { return "synthetic_oracle"; }
    [[nodiscard]] const std::map<std::string, double>& weights() const noexcept { return weights_; }

protected:
    ModelResponse do_complete(const ModelRequest& request) override;

private:
    OracleConfig config_;
    std::map<std::string, double> weights_;
};

} // namespace evojudge::synthetic
