#pragma once

// Command-line surface: evolve, eval, serve, lib {list,show,diff,checkout}, ingest.
//
// The run configuration is one JSON file. Relative paths resolve against the
// file's directory. Environment variables override the file and flags
// override both:
//
//   EVOJUDGE_LIBRARY, EVOJUDGE_RUN_DIR, EVOJUDGE_BIND, plus the backend
//   variables handled by apply_env_overrides().

#include "evojudge/evolution.hpp"
#include "evojudge/library_store.hpp"
#include "evojudge/model.hpp"
#include "evojudge/service.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace evojudge {

struct RunConfig {
    std::filesystem::path demos;
    std::filesystem::path image_root;
    std::filesystem::path library;
    std::string library_version = "head";
    std::optional<std::filesystem::path> run_dir;
    std::optional<std::uint64_t> split_seed;  // defaults to loop.seed
    std::map<std::string, BackendConfig> backends;  // orchestrator, subagent, tool
    LoopConfig loop;
    ServiceConfig service;
    std::string bind = "127.0.0.1:8080";
};

// Unknown keys are rejected. Does not read the environment.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Inverse of run_config_from_json; credentials are not written.
nlohmann::json run_config_to_json(const RunConfig& config);
void apply_env_overrides(RunConfig& config);

// "synthetic_oracle", "scripted:<transcript>", or the path of a JSON backend config.
BackendConfig parse_backend_flag(const std::string& flag);

// Backend instances for the three roles. Roles with identical configuration
// share one instance; the tool role falls back to the Sub-Agent.
class BackendSet {
public:
    explicit BackendSet(const std::map<std::string, BackendConfig>& roles);
    [[nodiscard]] const Backends& view() const noexcept { return view_; }

private:
    std::vector<std::unique_ptr<Backend>> owned_;
    Backends view_;
};

// A library state holding every `*.md` document under `dir` as a Create.
LibraryState library_from_documents(const std::filesystem::path& dir);

// Opens a store directory, or wraps a directory of documents in an in-memory
// store whose head is library_from_documents(dir). Throws NotFoundError when
// `dir` does not exist.
LibraryStore open_library(const std::filesystem::path& dir);

// Everything eval reports, in a form usable without the CLI.
struct EvalReport {
    std::string library_version;
    std::size_t demos = 0;
    std::size_t failed = 0;
    double ranking = 0.0;
    double pairwise = 0.0;
    std::vector<BucketAccuracy> buckets;
};
nlohmann::json to_json(const EvalReport& report);

// Single-line JSON error as written to stderr on failure.
std::string error_line(std::string_view code, std::string_view message, const nlohmann::json& extra = nullptr);

// Entry point. Returns the process exit code; 0 on success, 2 on usage
// errors, 1 on every other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace evojudge
