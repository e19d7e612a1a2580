#pragma once

#include "evojudge/library.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evojudge {

struct LibraryAction {
    enum class Op { Create, Modify, Deprecate, Prune };

    Op op = Op::Create;
    std::string target;                  // Create/Modify/Deprecate
    std::optional<LibraryEntry> entry;   // full document for Create/Modify
    std::vector<std::string> names;      // Prune
    std::string rationale;
    std::vector<std::string> cases;      // demonstration ids the rationale refers to

    static LibraryAction create(LibraryEntry entry, std::string rationale = {});
    static LibraryAction modify(LibraryEntry entry, std::string rationale = {});
    static LibraryAction deprecate(std::string name, std::string rationale = {});
    static LibraryAction prune(std::vector<std::string> names, std::string rationale = {});
};

std::string_view to_string(LibraryAction::Op op) noexcept;

struct CreatedBy {
    int iteration = 0;
    std::string summary;
};

struct EntryCounts {
    int skills = 0;
    int tools = 0;
    [[nodiscard]] int total() const noexcept { return skills + tools; }
    bool operator==(const EntryCounts&) const = default;
};

// Immutable snapshot of the library. `version` is the content hash of the
// active entries, so equal active content always means equal version.
struct LibraryState {
    std::string version;
    std::optional<std::string> parent;
    std::map<std::string, LibraryEntry> entries;  // includes deprecated entries
    CreatedBy created_by;
    std::vector<LibraryAction> actions;  // the commit that produced this state

    [[nodiscard]] std::vector<const LibraryEntry*> active_entries() const;
    [[nodiscard]] const LibraryEntry* find_active(std::string_view name) const;
    [[nodiscard]] EntryCounts counts() const;
};

struct EntrySummary {
    std::string name;
    EntryKind kind;
    std::string description;
    bool operator==(const EntrySummary&) const = default;
};

LibraryState empty_library();

// Digest of the sorted (name, canonical bytes) pairs of active entries.
std::string content_version(const std::map<std::string, LibraryEntry>& entries);

// Concatenated canonical Markdown of the active entries, sorted by name.
std::string canonical_serialization(const LibraryState& state);

// Applies `actions` in order to a copy of `state`. All-or-nothing: any invalid
// action throws ActionError and nothing is produced. When the active content
// does not change the input state is returned as is.
LibraryState commit(const LibraryState& state, std::span<const LibraryAction> actions, int iteration,
                    std::string summary = {});

// Names and descriptions of active entries, sorted by name.
std::vector<EntrySummary> entry_summaries(const LibraryState& state);

nlohmann::json action_to_json(const LibraryAction& action);
LibraryAction action_from_json(const nlohmann::json& j);

// Versioned store of library states with a movable head.
//
// Every state ever put stays checkout-able. Rollback moves the head without
// deleting descendants. When opened on a directory, each version is persisted
// as `<dir>/<version>/entries/<name>.md` + `manifest.json` and the head in
// `<dir>/HEAD`. Writers are serialised; readers may run concurrently.
class LibraryStore {
public:
    LibraryStore();  // in-memory, holding only the empty root
    static LibraryStore open(const std::filesystem::path& dir);

    LibraryStore(LibraryStore&&) noexcept;
    LibraryStore& operator=(LibraryStore&&) noexcept;
    ~LibraryStore();

    [[nodiscard]] LibraryState head() const;
    [[nodiscard]] std::string head_version() const;
    [[nodiscard]] std::string root_version() const;

    // Throws NotFoundError for unknown versions.
    [[nodiscard]] LibraryState checkout(std::string_view version) const;
    [[nodiscard]] bool contains(std::string_view version) const;

    // Stores `state` (no-op when its version already exists) and returns the
    // stored snapshot. Does not move the head.
    LibraryState put(const LibraryState& state);

    // Makes `version` the head. Descendants are kept.
    LibraryState rollback(std::string_view version);

    // Lineage root -> head, following parent links.
    [[nodiscard]] std::vector<std::string> list_versions() const;
    // Every stored version in the order it was first stored (root first).
    [[nodiscard]] std::vector<std::string> all_versions() const;

    // Accepts a full id, a unique prefix (>= 4 chars), `root`, `head`, or `vN`
    // (the N-th stored version, root = v0).
    [[nodiscard]] std::string resolve(std::string_view ref) const;

    void annotate(std::string_view version, double validation_accuracy);
    [[nodiscard]] std::optional<double> validation_accuracy(std::string_view version) const;

    [[nodiscard]] std::optional<std::filesystem::path> directory() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Entry-level textual differences between two states.
struct EntryDiff {
    enum class Change { Added, Removed, Modified };
    Change change;
    std::string name;
    std::string unified;  // line diff of the canonical documents
};

std::vector<EntryDiff> diff_states(const LibraryState& from, const LibraryState& to);
std::string render_diff(const std::vector<EntryDiff>& diffs);

} // namespace evojudge
