#include "evojudge/cli.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/library.hpp"
#include "evojudge/preference.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <set>

namespace evojudge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kRoles = {"orchestrator", "subagent", "tool"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
    }
}

fs::path resolve_path(const std::string& text, const fs::path& base) {
    fs::path p = text;
    return (p.is_relative() && !base.empty()) ? base / p : p;
}

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

// Thrown after CLI11 has already reported; carries the exit code.
struct Exit {
    int code;
};

} // namespace

// ---------------------------------------------------------------------------
// Configuration

RunConfig run_config_from_json(const json& j, const fs::path& base) {
    reject_unknown(j, {"demos", "image_root", "library", "library_version", "run_dir", "split_seed", "backend",
                       "backends", "loop", "service"},
                   "config");
    RunConfig c;
    if (j.contains("demos")) c.demos = resolve_path(j["demos"].get<std::string>(), base);
    if (j.contains("image_root")) c.image_root = resolve_path(j["image_root"].get<std::string>(), base);
    if (j.contains("library")) c.library = resolve_path(j["library"].get<std::string>(), base);
    c.library_version = j.value("library_version", c.library_version);
    if (j.contains("run_dir")) c.run_dir = resolve_path(j["run_dir"].get<std::string>(), base);
    if (j.contains("split_seed")) c.split_seed = j["split_seed"].get<std::uint64_t>();

    if (j.contains("backend") && j.contains("backends")) throw ValidationError("give either backend or backends");
    if (j.contains("backend")) {
        const auto b = backend_config_from_json(j["backend"], base);
        for (const auto& role : kRoles) c.backends.insert_or_assign(role, b);
    }
    if (j.contains("backends")) {
        reject_unknown(j["backends"], {kRoles.begin(), kRoles.end()}, "backends");
        for (const auto& [role, b] : j["backends"].items()) c.backends.insert_or_assign(role, backend_config_from_json(b, base));
    }

    if (j.contains("loop")) {
        const auto& l = j["loop"];
        reject_unknown(l, {"budget", "seed", "plateau", "prune_min_entries", "max_growth_actions", "workers", "resume",
                           "temperature", "max_tokens"},
                       "loop");
        c.loop.budget = l.value("budget", c.loop.budget);
        c.loop.seed = l.value("seed", c.loop.seed);
        c.loop.plateau = l.value("plateau", c.loop.plateau);
        c.loop.prune_min_entries = l.value("prune_min_entries", c.loop.prune_min_entries);
        c.loop.max_growth_actions = l.value("max_growth_actions", c.loop.max_growth_actions);
        c.loop.workers = l.value("workers", c.loop.workers);
        c.loop.resume = l.value("resume", c.loop.resume);
        c.loop.decode.temperature = l.value("temperature", c.loop.decode.temperature);
        c.loop.decode.max_tokens = l.value("max_tokens", c.loop.decode.max_tokens);
    }
    if (j.contains("service")) {
        const auto& s = j["service"];
        reject_unknown(s, {"bind", "cache_capacity", "max_image_bytes", "fetch_timeout_s", "batch_workers",
                           "retry_after_s"},
                       "service");
        c.bind = s.value("bind", c.bind);
        c.service.cache_capacity = s.value("cache_capacity", c.service.cache_capacity);
        c.service.max_image_bytes = s.value("max_image_bytes", c.service.max_image_bytes);
        c.service.fetch_timeout_s = s.value("fetch_timeout_s", c.service.fetch_timeout_s);
        c.service.batch_workers = s.value("batch_workers", c.service.batch_workers);
        c.service.retry_after_s = s.value("retry_after_s", c.service.retry_after_s);
    }
    if (c.loop.workers < 1) throw ValidationError("loop.workers must be >= 1");
    if (c.service.cache_capacity < 1) throw ValidationError("service.cache_capacity must be >= 1");
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    try {
        return run_config_from_json(j, path.parent_path());
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

json run_config_to_json(const RunConfig& c) {
    json backends = json::object();
    for (const auto& [role, b] : c.backends) backends[role] = backend_config_to_json(b);
    json j{{"demos", c.demos.string()},
           {"image_root", c.image_root.string()},
           {"library", c.library.string()},
           {"library_version", c.library_version},
           {"backends", backends},
           {"loop",
            {{"budget", c.loop.budget},
             {"seed", c.loop.seed},
             {"plateau", c.loop.plateau},
             {"prune_min_entries", c.loop.prune_min_entries},
             {"max_growth_actions", c.loop.max_growth_actions},
             {"workers", c.loop.workers},
             {"resume", c.loop.resume},
             {"temperature", c.loop.decode.temperature},
             {"max_tokens", c.loop.decode.max_tokens}}},
           {"service",
            {{"bind", c.bind},
             {"cache_capacity", c.service.cache_capacity},
             {"max_image_bytes", c.service.max_image_bytes},
             {"fetch_timeout_s", c.service.fetch_timeout_s},
             {"batch_workers", c.service.batch_workers},
             {"retry_after_s", c.service.retry_after_s}}}};
    if (c.run_dir) j["run_dir"] = c.run_dir->string();
    if (c.split_seed) j["split_seed"] = *c.split_seed;
    return j;
}

void apply_env_overrides(RunConfig& c) {
    if (auto v = env("EVOJUDGE_LIBRARY")) c.library = *v;
    if (auto v = env("EVOJUDGE_RUN_DIR")) c.run_dir = fs::path(*v);
    if (auto v = env("EVOJUDGE_BIND")) c.bind = *v;
    for (auto& [_, b] : c.backends) apply_env_overrides(b);
}

BackendConfig parse_backend_flag(const std::string& flag) {
    if (flag == "synthetic_oracle") return backend_config_from_json(json{{"kind", "synthetic_oracle"}});
    if (flag.rfind("scripted:", 0) == 0) {
        return backend_config_from_json(json{{"kind", "scripted"}, {"transcript", flag.substr(9)}});
    }
    const fs::path path = flag;
    if (!fs::exists(path)) throw NotFoundError("backend config " + flag + " not found");
    try {
        return backend_config_from_json(json::parse(read_file(path)), path.parent_path());
    } catch (const json::exception& e) {
        throw ValidationError(flag + ": " + e.what());
    }
}

BackendSet::BackendSet(const std::map<std::string, BackendConfig>& roles) {
    std::map<std::string, Backend*> by_config;
    auto build = [&](const BackendConfig& config) {
        const auto key = backend_config_to_json(config).dump();
        auto it = by_config.find(key);
        if (it != by_config.end()) return it->second;
        owned_.push_back(make_backend(config));
        return by_config[key] = owned_.back().get();
    };
    for (const char* role : {"orchestrator", "subagent"}) {
        if (!roles.contains(role)) throw ValidationError(std::string("no backend configured for ") + role);
    }
    view_.orchestrator = build(roles.at("orchestrator"));
    view_.subagent = build(roles.at("subagent"));
    view_.tool = roles.contains("tool") ? build(roles.at("tool")) : view_.subagent;
}

// ---------------------------------------------------------------------------
// Libraries

LibraryState library_from_documents(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& item : fs::directory_iterator(dir)) {
        if (item.is_regular_file() && item.path().extension() == ".md") files.push_back(item.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<LibraryAction> actions;
    for (const auto& f : files) {
        try {
            actions.push_back(LibraryAction::create(parse_entry(read_file(f))));
        } catch (const ParseError& e) {
            throw ValidationError(f.string() + ": " + e.what());
        }
    }
    return commit(empty_library(), actions, 0, "documents from " + dir.filename().string());
}

LibraryStore open_library(const fs::path& dir) {
    if (dir.empty()) throw ValidationError("no library directory given");
    if (!fs::is_directory(dir)) throw NotFoundError("no library at " + dir.string());
    bool has_versions = fs::exists(dir / "HEAD");
    bool has_documents = false;
    for (const auto& item : fs::directory_iterator(dir)) {
        if (item.is_directory() && fs::exists(item.path() / "manifest.json")) has_versions = true;
        if (item.is_regular_file() && item.path().extension() == ".md") has_documents = true;
    }
    if (has_versions || !has_documents) return LibraryStore::open(dir);
    LibraryStore store;
    const auto state = store.put(library_from_documents(dir));
    store.rollback(state.version);
    return store;
}

json to_json(const EvalReport& r) {
    json buckets = json::array();
    for (const auto& b : r.buckets) {
        buckets.push_back({{"k", b.k}, {"count", b.count}, {"ranking_accuracy", b.ranking},
                           {"pairwise_accuracy", b.pairwise}});
    }
    return {{"library_version", r.library_version}, {"demos", r.demos}, {"failed", r.failed},
            {"ranking_accuracy", r.ranking}, {"pairwise_accuracy", r.pairwise}, {"by_k", buckets}};
}

std::string error_line(std::string_view code, std::string_view message, const json& extra) {
    json err{{"code", code}, {"message", message}};
    if (extra.is_object()) {
        for (const auto& [k, v] : extra.items()) err[k] = v;
    }
    return json{{"error", err}}.dump(-1, ' ', false, json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct Flags {
    std::string config;
    std::string library;
    std::string library_version;
    std::string backend;
    std::optional<std::uint64_t> seed;
    std::optional<int> budget;
    std::string bind;
    std::string demos;
    std::string image_root;
    std::string out;
    std::string run_dir;
    std::optional<std::size_t> workers;
    bool json_output = false;
    std::string ref_a;
    std::string ref_b;
    std::string entry;
};

RunConfig effective_config(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    apply_env_overrides(c);
    if (!f.library.empty()) c.library = f.library;
    if (!f.library_version.empty()) c.library_version = f.library_version;
    if (!f.demos.empty()) c.demos = f.demos;
    if (!f.image_root.empty()) c.image_root = f.image_root;
    if (!f.run_dir.empty()) c.run_dir = fs::path(f.run_dir);
    if (!f.bind.empty()) c.bind = f.bind;
    if (f.seed) c.loop.seed = *f.seed;
    if (f.budget) c.loop.budget = *f.budget;
    if (f.workers) c.loop.workers = *f.workers;
    if (!f.backend.empty()) {
        auto b = parse_backend_flag(f.backend);
        apply_env_overrides(b);
        for (const auto& role : kRoles) c.backends.insert_or_assign(role, b);
    }
    if (c.image_root.empty() && !c.demos.empty()) c.image_root = c.demos.parent_path();
    c.loop.image_root = c.image_root;
    c.loop.run_dir = c.run_dir;
    return c;
}

std::vector<Demonstration> demos_of(const RunConfig& c) {
    if (c.demos.empty()) throw ValidationError("no demonstrations given");
    if (!fs::exists(c.demos)) throw NotFoundError("missing demonstrations file " + c.demos.string());
    return load_demonstrations(c.demos);
}

// Loads every image (NotFoundError names the first missing one), validates
// each demonstration and the split.
json calibration_manifest(const RunConfig& c, const std::vector<Demonstration>& demos) {
    json items = json::array();
    std::string digest_input;
    for (const auto& d : demos) {
        d.validate();
        json images = json::array();
        auto add = [&](const ImageRef& ref) {
            const auto loaded = load_image(ref, c.image_root);
            const auto sha = sha256_hex(loaded.bytes);
            digest_input += sha;
            images.push_back({{"path", ref.path}, {"sha256", sha}, {"media_type", loaded.media_type}});
        };
        add(d.source_image);
        for (const auto& cand : d.candidates) add(cand);
        digest_input += d.id + '\n';
        items.push_back({{"id", d.id}, {"k", d.k()}, {"images", images}});
    }
    const auto seed = c.split_seed.value_or(c.loop.seed);
    const auto calibration = split(demos, seed);
    auto ids = [](const std::vector<Demonstration>& v) {
        json a = json::array();
        for (const auto& d : v) a.push_back(d.id);
        return a;
    };
    return {{"demos", c.demos.string()},   {"image_root", c.image_root.string()},
            {"count", demos.size()},       {"digest", sha256_hex(digest_input)},
            {"split_seed", seed},          {"train", ids(calibration.train)},
            {"val", ids(calibration.val)}, {"items", items}};
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    file << text;
    if (!file) throw Error("cannot write " + path.string());
}

int cmd_evolve(const Flags& f, std::ostream& out) {
    auto c = effective_config(f);
    if (c.library.empty() && c.run_dir) c.library = *c.run_dir / "library";
    if (c.library.empty()) throw ValidationError("no library directory given");
    const auto demos = demos_of(c);
    if (c.run_dir) {
        write_file(*c.run_dir / "config.json", run_config_to_json(c).dump(2) + "\n");
        write_file(*c.run_dir / "calibration.json", calibration_manifest(c, demos).dump(2) + "\n");
    }
    auto store = LibraryStore::open(c.library);
    const BackendSet backends(c.backends);
    auto calibration = split(demos, c.split_seed.value_or(c.loop.seed));
    EvolutionLoop loop(std::move(calibration), store, backends.view(), c.loop);
    const auto trajectory = loop.run([&](const IterationRecord& r) { out << to_json(r).dump() << '\n' << std::flush; });
    out << json{{"initial_version", trajectory.initial_version},
                {"initial_val_accuracy", trajectory.initial_val_accuracy},
                {"final_version", trajectory.final_version},
                {"final_val_accuracy", trajectory.final_val_accuracy}}
               .dump()
        << '\n';
    return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
    const auto c = effective_config(f);
    const auto demos = demos_of(c);
    if (demos.empty()) throw ValidationError("no demonstrations in " + c.demos.string());
    const auto store = open_library(c.library);
    const auto state = store.checkout(store.resolve(c.library_version));
    const BackendSet backends(c.backends);
    auto loop = c.loop;
    if (!loop.decode.seed) loop.decode.seed = static_cast<std::int64_t>(loop.seed);
    const auto outcomes = evaluate_demos(demos, state, backends.view(), loop);

    std::vector<EvalRecord> records;
    EvalReport report;
    report.library_version = state.version;
    for (const auto& o : outcomes) {
        records.push_back(o.record);
        if (!o.record.judgment) ++report.failed;
    }
    report.demos = records.size();
    report.ranking = ranking_accuracy(records);
    report.pairwise = pairwise_accuracy(records).value;
    report.buckets = accuracy_by_k(records);

    if (f.json_output) {
        out << to_json(report).dump() << '\n';
        return 0;
    }
    out << "library_version " << report.library_version << '\n';
    out << "k\tcount\tranking_accuracy\tpairwise_accuracy\n";
    for (const auto& b : report.buckets) {
        out << b.k << '\t' << b.count << '\t' << fixed(b.ranking) << '\t' << fixed(b.pairwise) << '\n';
    }
    out << "all\t" << report.demos << '\t' << fixed(report.ranking) << '\t' << fixed(report.pairwise) << '\n';
    if (report.failed) out << "failed\t" << report.failed << '\n';
    return 0;
}

int cmd_serve(const Flags& f, std::ostream& out) {
    const auto c = effective_config(f);
    const auto store = open_library(c.library);
    const auto version = store.resolve(c.library_version);
    const BackendSet backends(c.backends);
    const auto [host, port] = parse_bind(c.bind);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &signals, &previous);  // inherited by the server threads
    RewardService service(store, version, backends.view(), c.service);
    int bound = 0;
    try {
        bound = service.start(host, port);
    } catch (...) {
        pthread_sigmask(SIG_SETMASK, &previous, nullptr);
        throw;
    }
    out << json{{"listening", host + ":" + std::to_string(bound)}, {"library_version", version}}.dump() << '\n'
        << std::flush;
    int received = 0;
    sigwait(&signals, &received);
    service.stop();
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    return 0;
}

LibraryStore store_for_lib(const Flags& f) {
    auto c = effective_config(f);
    return open_library(c.library);
}

int cmd_lib_list(const Flags& f, std::ostream& out) {
    const auto store = store_for_lib(f);
    const auto head = store.head_version();
    const auto all = store.all_versions();
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto s = store.checkout(all[i]);
        const auto counts = s.counts();
        const auto acc = store.validation_accuracy(all[i]);
        out << 'v' << i << '\t' << s.version << '\t' << (s.parent ? *s.parent : "-") << '\t' << "skills=" << counts.skills
            << '\t' << "tools=" << counts.tools << '\t' << "val=" << (acc ? fixed(*acc) : "-")
            << (s.version == head ? "\tHEAD" : "") << '\n';
    }
    return 0;
}

int cmd_lib_show(const Flags& f, std::ostream& out) {
    const auto store = store_for_lib(f);
    const auto state = store.checkout(store.resolve(f.ref_a));
    if (!f.entry.empty()) {
        auto it = state.entries.find(f.entry);
        if (it == state.entries.end()) throw NotFoundError("no entry " + f.entry + " in " + state.version);
        out << render_entry(it->second);
        return 0;
    }
    out << "version " << state.version << '\n';
    for (const auto& s : entry_summaries(state)) {
        out << to_string(s.kind) << '\t' << s.name << '\t' << s.description << '\n';
    }
    return 0;
}

int cmd_lib_diff(const Flags& f, std::ostream& out) {
    const auto store = store_for_lib(f);
    const auto a = store.checkout(store.resolve(f.ref_a));
    const auto b = store.checkout(store.resolve(f.ref_b));
    out << render_diff(diff_states(a, b));
    return 0;
}

int cmd_lib_checkout(const Flags& f, std::ostream& out) {
    auto store = store_for_lib(f);
    if (!store.directory()) throw ValidationError("checkout needs a versioned library store");
    const auto state = store.rollback(store.resolve(f.ref_a));
    out << state.version << '\n';
    return 0;
}

int cmd_ingest(const Flags& f, std::ostream& out) {
    const auto c = effective_config(f);
    const auto manifest = calibration_manifest(c, demos_of(c));
    if (f.out.empty()) {
        out << manifest.dump(2) << '\n';
    } else {
        std::ofstream file(f.out, std::ios::binary | std::ios::trunc);
        file << manifest.dump(2) << '\n';
        if (!file) throw Error("cannot write " + f.out);
        out << json{{"manifest", f.out}, {"count", manifest["count"]}, {"train", manifest["train"].size()},
                    {"val", manifest["val"].size()}}
                   .dump()
            << '\n';
    }
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Preference-calibrated reward judge with an evolving library"};
    app.name("evojudge");
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--config", f.config, "Run configuration (JSON)");
        cmd->add_option("--library", f.library, "Library store directory or directory of documents");
    };
    auto backend_flag = [&](CLI::App* cmd) {
        cmd->add_option("--backend", f.backend, "synthetic_oracle, scripted:<transcript> or a backend config file");
    };

    auto* evolve = app.add_subcommand("evolve", "Run the evolution loop");
    common(evolve);
    backend_flag(evolve);
    evolve->add_option("--seed", f.seed, "Loop seed");
    evolve->add_option("--budget", f.budget, "Iteration budget");
    evolve->add_option("--demos", f.demos, "Demonstrations JSONL");
    evolve->add_option("--image-root", f.image_root, "Directory image paths resolve against");
    evolve->add_option("--run-dir", f.run_dir, "Directory for iteration logs and loop state");
    evolve->add_option("--workers", f.workers, "Concurrent demonstrations");

    auto* eval = app.add_subcommand("eval", "Judge a demonstration set against one library version");
    common(eval);
    backend_flag(eval);
    eval->add_option("--library-version", f.library_version, "Version ref (id, prefix, root, head, vN)");
    eval->add_option("--demos", f.demos, "Demonstrations JSONL");
    eval->add_option("--image-root", f.image_root, "Directory image paths resolve against");
    eval->add_option("--seed", f.seed, "Decoding seed");
    eval->add_option("--workers", f.workers, "Concurrent demonstrations");
    eval->add_flag("--json", f.json_output, "Print one JSON object");

    auto* serve = app.add_subcommand("serve", "Serve rewards over HTTP");
    common(serve);
    backend_flag(serve);
    serve->add_option("--library-version", f.library_version, "Version ref to serve");
    serve->add_option("--bind", f.bind, "host:port or port");

    auto* lib = app.add_subcommand("lib", "Inspect and move the library store");
    lib->require_subcommand(1);
    auto* list = lib->add_subcommand("list", "Every stored version");
    common(list);
    auto* show = lib->add_subcommand("show", "Entries of a version, or one entry document");
    common(show);
    show->add_option("version", f.ref_a, "Version ref")->required();
    show->add_option("entry", f.entry, "Entry name");
    auto* diff = lib->add_subcommand("diff", "Entry-level diff between two versions");
    common(diff);
    diff->add_option("from", f.ref_a, "Version ref")->required();
    diff->add_option("to", f.ref_b, "Version ref")->required();
    auto* checkout = lib->add_subcommand("checkout", "Move the head to a version");
    common(checkout);
    checkout->add_option("version", f.ref_a, "Version ref")->required();

    auto* ingest = app.add_subcommand("ingest", "Validate demonstrations and images into a calibration manifest");
    ingest->add_option("--config", f.config, "Run configuration (JSON)");
    ingest->add_option("--demos", f.demos, "Demonstrations JSONL");
    ingest->add_option("--image-root", f.image_root, "Directory image paths resolve against");
    ingest->add_option("--seed", f.seed, "Split seed");
    ingest->add_option("--out", f.out, "Manifest path; stdout when omitted");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            throw Exit{app.exit(e, out, err)};
        } catch (const CLI::CallForAllHelp& e) {
            throw Exit{app.exit(e, out, err)};
        } catch (const CLI::ParseError& e) {
            err << error_line("usage", e.what()) << '\n';
            return 2;
        }
        if (*evolve) return cmd_evolve(f, out);
        if (*eval) return cmd_eval(f, out);
        if (*serve) return cmd_serve(f, out);
        if (*ingest) return cmd_ingest(f, out);
        if (*list) return cmd_lib_list(f, out);
        if (*show) return cmd_lib_show(f, out);
        if (*diff) return cmd_lib_diff(f, out);
        if (*checkout) return cmd_lib_checkout(f, out);
        return 2;
    } catch (const Exit& e) {
        return e.code;
    } catch (const LoopAborted& e) {
        err << error_line(e.code(), e.what(), json{{"resume_token", e.resume_token()}}) << '\n';
    } catch (const BackendError& e) {
        err << error_line(e.code(), e.what(), json{{"http_status", e.http_status()}, {"attempts", e.attempts()}})
            << '\n';
    } catch (const Error& e) {
        err << error_line(e.code(), e.what()) << '\n';
    } catch (const json::exception& e) {
        err << error_line("validation", e.what()) << '\n';
    } catch (const fs::filesystem_error& e) {
        err << error_line("io", e.what()) << '\n';
    } catch (const std::exception& e) {
        err << error_line("internal", e.what()) << '\n';
    }
    return 1;
}

} // namespace evojudge
