#include "evojudge/library_store.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <sstream>

namespace evojudge {

namespace fs = std::filesystem;

LibraryAction LibraryAction::create(LibraryEntry entry, std::string rationale) {
    LibraryAction a;
    a.op = Op::Create;
    a.target = entry.name();
    a.entry = std::move(entry);
    a.rationale = std::move(rationale);
    return a;
}

LibraryAction LibraryAction::modify(LibraryEntry entry, std::string rationale) {
    LibraryAction a = create(std::move(entry), std::move(rationale));
    a.op = Op::Modify;
    return a;
}

LibraryAction LibraryAction::deprecate(std::string name, std::string rationale) {
    LibraryAction a;
    a.op = Op::Deprecate;
    a.target = std::move(name);
    a.rationale = std::move(rationale);
    return a;
}

LibraryAction LibraryAction::prune(std::vector<std::string> names, std::string rationale) {
    LibraryAction a;
    a.op = Op::Prune;
    a.names = std::move(names);
    a.rationale = std::move(rationale);
    return a;
}

std::string_view to_string(LibraryAction::Op op) noexcept {
    switch (op) {
    case LibraryAction::Op::Create: return "create";
    case LibraryAction::Op::Modify: return "modify";
    case LibraryAction::Op::Deprecate: return "deprecate";
    case LibraryAction::Op::Prune: return "prune";
    }
    return "create";
}

std::vector<const LibraryEntry*> LibraryState::active_entries() const {
    std::vector<const LibraryEntry*> out;
    for (const auto& [name, e] : entries) {
        if (e.active()) out.push_back(&e);
    }
    return out;
}

const LibraryEntry* LibraryState::find_active(std::string_view name) const {
    const auto it = entries.find(std::string(name));
    return it != entries.end() && it->second.active() ? &it->second : nullptr;
}

EntryCounts LibraryState::counts() const {
    EntryCounts c;
    for (const auto* e : active_entries()) (e->kind() == EntryKind::Skill ? c.skills : c.tools)++;
    return c;
}

std::string content_version(const std::map<std::string, LibraryEntry>& entries) {
    std::string material;
    for (const auto& [name, e] : entries) {
        if (!e.active()) continue;
        const auto bytes = render_entry(e);
        material += std::to_string(name.size()) + ":" + name + "\n" + std::to_string(bytes.size()) + ":" + bytes + "\n";
    }
    return sha256_hex(material);
}

LibraryState empty_library() {
    LibraryState s;
    s.version = content_version(s.entries);
    s.created_by = {0, "empty library"};
    return s;
}

std::string canonical_serialization(const LibraryState& state) {
    std::string out;
    for (const auto* e : state.active_entries()) out += render_entry(*e);
    return out;
}

LibraryState commit(const LibraryState& state, std::span<const LibraryAction> actions, int iteration,
                    std::string summary) {
    auto entries = state.entries;
    auto require_active = [&](const std::string& name, std::string_view op) -> LibraryEntry& {
        const auto it = entries.find(name);
        if (it == entries.end() || !it->second.active()) {
            throw ActionError(std::string(op) + " target '" + name + "' is not an active entry");
        }
        return it->second;
    };
    for (const auto& a : actions) {
        switch (a.op) {
        case LibraryAction::Op::Create: {
            if (!a.entry) throw ActionError("create '" + a.target + "' carries no document");
            if (a.entry->name() != a.target) throw ActionError("create target does not match document name");
            if (const auto it = entries.find(a.target); it != entries.end() && it->second.active()) {
                throw ActionError("create '" + a.target + "' collides with an active entry");
            }
            try {
                validate(*a.entry);
            } catch (const ValidationError& e) {
                throw ActionError("create '" + a.target + "': " + e.what());
            }
            LibraryEntry e = *a.entry;
            e.status = EntryStatus::Active;
            e.provenance = {iteration, iteration};
            entries[a.target] = std::move(e);
            break;
        }
        case LibraryAction::Op::Modify: {
            if (!a.entry) throw ActionError("modify '" + a.target + "' carries no document");
            if (a.entry->name() != a.target) throw ActionError("modify target does not match document name");
            auto& current = require_active(a.target, "modify");
            if (current.kind() != a.entry->kind()) throw ActionError("modify '" + a.target + "' changes the entry kind");
            try {
                validate(*a.entry);
            } catch (const ValidationError& e) {
                throw ActionError("modify '" + a.target + "': " + e.what());
            }
            const auto created = current.provenance.created_iter;
            current.doc = a.entry->doc;
            current.provenance = {created, iteration};
            break;
        }
        case LibraryAction::Op::Deprecate: {
            auto& current = require_active(a.target, "deprecate");
            current.status = EntryStatus::Deprecated;
            current.provenance.last_modified_iter = iteration;
            break;
        }
        case LibraryAction::Op::Prune: {
            if (a.names.empty()) throw ActionError("prune names no entries");
            std::set<std::string> unique(a.names.begin(), a.names.end());
            if (unique.size() != a.names.size()) throw ActionError("prune lists a name twice");
            for (const auto& n : a.names) require_active(n, "prune");
            for (const auto& n : a.names) {
                entries[n].status = EntryStatus::Deprecated;
                entries[n].provenance.last_modified_iter = iteration;
            }
            break;
        }
        }
    }
    auto version = content_version(entries);
    if (version == state.version) return state;
    LibraryState next;
    next.version = std::move(version);
    next.parent = state.version;
    next.entries = std::move(entries);
    next.created_by = {iteration, std::move(summary)};
    next.actions.assign(actions.begin(), actions.end());
    return next;
}

std::vector<EntrySummary> entry_summaries(const LibraryState& state) {
    std::vector<EntrySummary> out;
    for (const auto* e : state.active_entries()) out.push_back({e->name(), e->kind(), e->description()});
    return out;  // map order is name order
}

nlohmann::json action_to_json(const LibraryAction& a) {
    nlohmann::json j{{"op", to_string(a.op)}, {"rationale", a.rationale}, {"cases", a.cases}};
    if (a.op == LibraryAction::Op::Prune) {
        j["names"] = a.names;
    } else {
        j["target"] = a.target;
    }
    if (a.entry) j["doc"] = render_entry(*a.entry);
    return j;
}

LibraryAction action_from_json(const nlohmann::json& j) {
    LibraryAction a;
    const auto op = j.at("op").get<std::string>();
    if (op == "create") {
        a.op = LibraryAction::Op::Create;
    } else if (op == "modify") {
        a.op = LibraryAction::Op::Modify;
    } else if (op == "deprecate") {
        a.op = LibraryAction::Op::Deprecate;
    } else if (op == "prune") {
        a.op = LibraryAction::Op::Prune;
    } else {
        throw ValidationError("unknown action op '" + op + "'");
    }
    a.target = j.value("target", "");
    a.names = j.value("names", std::vector<std::string>{});
    a.rationale = j.value("rationale", "");
    a.cases = j.value("cases", std::vector<std::string>{});
    if (j.contains("doc") && j["doc"].is_string()) a.entry = parse_entry(j["doc"].get<std::string>());
    return a;
}

// ---------------------------------------------------------------------------
// Store

struct LibraryStore::Impl {
    mutable std::shared_mutex mutex;
    std::map<std::string, LibraryState, std::less<>> states;
    std::map<std::string, double, std::less<>> accuracy;
    std::vector<std::string> order;
    std::string root;
    std::string head;
    std::optional<fs::path> dir;

    void insert(LibraryState s) {
        const auto v = s.version;
        if (states.emplace(v, std::move(s)).second) order.push_back(v);
    }

    nlohmann::json manifest(const LibraryState& s) const {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [name, e] : s.entries) {
            entries.push_back({{"name", name},
                               {"kind", to_string(e.kind())},
                               {"status", to_string(e.status)},
                               {"created_iter", e.provenance.created_iter},
                               {"last_modified_iter", e.provenance.last_modified_iter}});
        }
        nlohmann::json actions = nlohmann::json::array();
        for (const auto& a : s.actions) actions.push_back(action_to_json(a));
        nlohmann::json j{{"version", s.version},
                         {"parent", s.parent ? nlohmann::json(*s.parent) : nlohmann::json(nullptr)},
                         {"iteration", s.created_by.iteration},
                         {"summary", s.created_by.summary},
                         {"sequence", std::find(order.begin(), order.end(), s.version) - order.begin()},
                         {"actions", std::move(actions)},
                         {"entries", std::move(entries)}};
        const auto acc = accuracy.find(s.version);
        j["validation_accuracy"] = acc != accuracy.end() ? nlohmann::json(acc->second) : nlohmann::json(nullptr);
        return j;
    }

    static void write_file(const fs::path& p, std::string_view content) {
        const auto tmp = p.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << content;
            if (!out) throw Error("cannot write " + p.string());
        }
        fs::rename(tmp, p);
    }

    void persist(const LibraryState& s) const {
        if (!dir) return;
        const auto base = *dir / s.version;
        fs::create_directories(base / "entries");
        for (const auto& [name, e] : s.entries) {
            const auto sub = e.active() ? "entries" : "deprecated";
            fs::create_directories(base / sub);
            write_file(base / sub / (name + ".md"), render_entry(e));
        }
        write_file(base / "manifest.json", manifest(s).dump(2) + "\n");
    }

    void persist_head() const {
        if (dir) write_file(*dir / "HEAD", head + "\n");
    }

    static LibraryState load_version(const fs::path& base) {
        const auto m = nlohmann::json::parse(read_file(base / "manifest.json"));
        LibraryState s;
        s.version = m.at("version").get<std::string>();
        if (!m.at("parent").is_null()) s.parent = m["parent"].get<std::string>();
        s.created_by = {m.value("iteration", 0), m.value("summary", "")};
        for (const auto& a : m.value("actions", nlohmann::json::array())) s.actions.push_back(action_from_json(a));
        for (const auto& meta : m.at("entries")) {
            const auto name = meta.at("name").get<std::string>();
            const bool active = meta.at("status").get<std::string>() == "active";
            auto e = parse_entry(read_file(base / (active ? "entries" : "deprecated") / (name + ".md")));
            if (e.name() != name) throw ValidationError("entry file name mismatch for " + name);
            e.status = active ? EntryStatus::Active : EntryStatus::Deprecated;
            e.provenance = {meta.value("created_iter", 0), meta.value("last_modified_iter", 0)};
            s.entries.emplace(name, std::move(e));
        }
        if (content_version(s.entries) != s.version) {
            throw ValidationError("stored version " + s.version + " does not match its content");
        }
        return s;
    }
};

LibraryStore::LibraryStore() : impl_(std::make_unique<Impl>()) {
    auto root = empty_library();
    impl_->root = root.version;
    impl_->head = root.version;
    impl_->insert(std::move(root));
}

LibraryStore::LibraryStore(LibraryStore&&) noexcept = default;
LibraryStore& LibraryStore::operator=(LibraryStore&&) noexcept = default;
LibraryStore::~LibraryStore() = default;

LibraryStore LibraryStore::open(const fs::path& dir) {
    LibraryStore store;
    auto& impl = *store.impl_;
    impl.dir = dir;
    fs::create_directories(dir);
    std::vector<std::pair<long long, LibraryState>> loaded;
    for (const auto& item : fs::directory_iterator(dir)) {
        if (!item.is_directory() || !fs::exists(item.path() / "manifest.json")) continue;
        const auto m = nlohmann::json::parse(read_file(item.path() / "manifest.json"));
        if (m.contains("validation_accuracy") && m["validation_accuracy"].is_number()) {
            impl.accuracy[m["version"].get<std::string>()] = m["validation_accuracy"].get<double>();
        }
        loaded.emplace_back(m.value("sequence", 0LL), Impl::load_version(item.path()));
    }
    std::sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [seq, s] : loaded) impl.insert(std::move(s));
    if (fs::exists(dir / "HEAD")) {
        auto head = read_file(dir / "HEAD");
        while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.pop_back();
        if (!impl.states.contains(head)) throw NotFoundError("HEAD names unknown version " + head);
        impl.head = head;
    }
    impl.persist(impl.states.at(impl.root));
    impl.persist_head();
    return store;
}

LibraryState LibraryStore::head() const {
    std::shared_lock lock(impl_->mutex);
    return impl_->states.at(impl_->head);
}

std::string LibraryStore::head_version() const {
    std::shared_lock lock(impl_->mutex);
    return impl_->head;
}

std::string LibraryStore::root_version() const { return impl_->root; }

LibraryState LibraryStore::checkout(std::string_view version) const {
    std::shared_lock lock(impl_->mutex);
    const auto it = impl_->states.find(version);
    if (it == impl_->states.end()) throw NotFoundError("unknown library version " + std::string(version));
    return it->second;
}

bool LibraryStore::contains(std::string_view version) const {
    std::shared_lock lock(impl_->mutex);
    return impl_->states.find(version) != impl_->states.end();
}

LibraryState LibraryStore::put(const LibraryState& state) {
    std::unique_lock lock(impl_->mutex);
    if (const auto it = impl_->states.find(state.version); it != impl_->states.end()) return it->second;
    if (state.parent && impl_->states.find(*state.parent) == impl_->states.end()) {
        throw NotFoundError("parent version " + *state.parent + " is not in the store");
    }
    impl_->insert(state);
    impl_->persist(state);
    return state;
}

LibraryState LibraryStore::rollback(std::string_view version) {
    std::unique_lock lock(impl_->mutex);
    const auto it = impl_->states.find(version);
    if (it == impl_->states.end()) throw NotFoundError("unknown library version " + std::string(version));
    impl_->head = it->first;
    impl_->persist_head();
    return it->second;
}

std::vector<std::string> LibraryStore::list_versions() const {
    std::shared_lock lock(impl_->mutex);
    std::vector<std::string> lineage;
    std::optional<std::string> v = impl_->head;
    while (v) {
        lineage.push_back(*v);
        v = impl_->states.at(*v).parent;
    }
    std::reverse(lineage.begin(), lineage.end());
    return lineage;
}

std::vector<std::string> LibraryStore::all_versions() const {
    std::shared_lock lock(impl_->mutex);
    return impl_->order;
}

std::string LibraryStore::resolve(std::string_view ref) const {
    std::shared_lock lock(impl_->mutex);
    if (ref == "root") return impl_->root;
    if (ref == "head" || ref == "HEAD") return impl_->head;
    if (ref.size() >= 2 && ref[0] == 'v' &&
        std::all_of(ref.begin() + 1, ref.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        const auto n = std::stoul(std::string(ref.substr(1)));
        if (n < impl_->order.size()) return impl_->order[n];
        throw NotFoundError("no version " + std::string(ref));
    }
    if (impl_->states.find(ref) != impl_->states.end()) return std::string(ref);
    if (ref.size() >= 4) {
        std::vector<std::string> hits;
        for (const auto& [v, s] : impl_->states) {
            if (v.compare(0, ref.size(), ref) == 0) hits.push_back(v);
        }
        if (hits.size() == 1) return hits.front();
        if (hits.size() > 1) throw ValidationError("ambiguous version prefix " + std::string(ref));
    }
    throw NotFoundError("unknown library version " + std::string(ref));
}

void LibraryStore::annotate(std::string_view version, double validation_accuracy) {
    std::unique_lock lock(impl_->mutex);
    const auto it = impl_->states.find(version);
    if (it == impl_->states.end()) throw NotFoundError("unknown library version " + std::string(version));
    impl_->accuracy[it->first] = validation_accuracy;
    impl_->persist(it->second);
}

std::optional<double> LibraryStore::validation_accuracy(std::string_view version) const {
    std::shared_lock lock(impl_->mutex);
    const auto it = impl_->accuracy.find(version);
    if (it == impl_->accuracy.end()) return std::nullopt;
    return it->second;
}

std::optional<fs::path> LibraryStore::directory() const { return impl_->dir; }

// ---------------------------------------------------------------------------
// Diff

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

// Plain LCS line diff; documents are small.
std::string line_diff(const std::string& a_text, const std::string& b_text) {
    const auto a = lines_of(a_text);
    const auto b = lines_of(b_text);
    std::vector<std::vector<int>> lcs(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = a.size(); i-- > 0;) {
        for (std::size_t j = b.size(); j-- > 0;) {
            lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    std::string out;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        if (i < a.size() && j < b.size() && a[i] == b[j]) {
            out += "  " + a[i] + "\n";
            ++i;
            ++j;
        } else if (j < b.size() && (i == a.size() || lcs[i][j + 1] >= lcs[i + 1][j])) {
            out += "+ " + b[j++] + "\n";
        } else {
            out += "- " + a[i++] + "\n";
        }
    }
    return out;
}

} // namespace

std::vector<EntryDiff> diff_states(const LibraryState& from, const LibraryState& to) {
    std::vector<EntryDiff> out;
    std::set<std::string> names;
    for (const auto* e : from.active_entries()) names.insert(e->name());
    for (const auto* e : to.active_entries()) names.insert(e->name());
    for (const auto& name : names) {
        const auto* a = from.find_active(name);
        const auto* b = to.find_active(name);
        if (a && !b) {
            out.push_back({EntryDiff::Change::Removed, name, line_diff(render_entry(*a), "")});
        } else if (!a && b) {
            out.push_back({EntryDiff::Change::Added, name, line_diff("", render_entry(*b))});
        } else {
            const auto ra = render_entry(*a);
            const auto rb = render_entry(*b);
            if (ra != rb) out.push_back({EntryDiff::Change::Modified, name, line_diff(ra, rb)});
        }
    }
    return out;
}

std::string render_diff(const std::vector<EntryDiff>& diffs) {
    std::string out;
    for (const auto& d : diffs) {
        const char* tag = d.change == EntryDiff::Change::Added     ? "added"
                          : d.change == EntryDiff::Change::Removed ? "removed"
                                                                   : "modified";
        out += "=== " + std::string(tag) + " " + d.name + "\n" + d.unified;
    }
    return out;
}

} // namespace evojudge
