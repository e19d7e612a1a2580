#include "evojudge/errors.hpp"
#include "evojudge/image.hpp"
#include "evojudge/model.hpp"

#include <fstream>
#include <sstream>

namespace evojudge {

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path, bool* partial) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open transcript " + path.string());
    std::vector<TranscriptEntry> out;
    bool is_partial = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw TranscriptError(path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
        }
        if (j.value("partial", false)) {
            is_partial = true;
            continue;
        }
        try {
            out.push_back({j.at("digest").get<std::string>(), j.at("request"), response_from_json(j.at("response"))});
        } catch (const nlohmann::json::exception& e) {
            throw TranscriptError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (partial) *partial = is_partial;
    return out;
}

ScriptedBackend::ScriptedBackend(const std::filesystem::path& transcript, std::size_t max_in_flight)
    : Backend(max_in_flight) {
    for (auto& e : read_transcript(transcript, &partial_)) responses_.emplace(e.digest, std::move(e.response));
}

ScriptedBackend::ScriptedBackend(std::vector<TranscriptEntry> entries, std::size_t max_in_flight)
    : Backend(max_in_flight) {
    for (auto& e : entries) responses_.emplace(e.digest, std::move(e.response));
}

ModelResponse ScriptedBackend::do_complete(const ModelRequest& request) {
    const auto digest = request_digest(request);
    const auto it = responses_.find(digest);
    if (it == responses_.end()) throw UnscriptedRequestError(digest);
    return it->second;
}

FileTranscriptSink::FileTranscriptSink(std::filesystem::path path, bool truncate) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, truncate ? std::ios::trunc : std::ios::app);
    if (!out) throw TranscriptError("cannot open transcript " + path_.string() + " for writing");
}

void FileTranscriptSink::append(const std::string& line) {
    std::ofstream out(path_, std::ios::app);
    out << line << '\n';
    out.flush();
    if (!out) throw TranscriptError("write to " + path_.string() + " failed");
}

void FileTranscriptSink::mark_partial(const std::string& reason) noexcept {
    try {
        std::ofstream out(path_, std::ios::app);
        out << nlohmann::json{{"partial", true}, {"reason", reason}}.dump() << '\n';
    } catch (...) {
    }
}

RecordingBackend::RecordingBackend(Backend& inner, std::shared_ptr<TranscriptSink> sink, std::size_t max_in_flight)
    : Backend(max_in_flight), inner_(inner), sink_(std::move(sink)) {}

ModelResponse RecordingBackend::do_complete(const ModelRequest& request) {
    {
        std::lock_guard lock(mutex_);
        if (aborted_) throw TranscriptError("recording session aborted after a failed write");
    }
    auto response = inner_.complete(request);
    const auto digest = request_digest(request);
    const auto line = nlohmann::json{{"digest", digest},
                                     {"request", canonical_json(request)},
                                     {"response", response_to_json(response)}}
                          .dump();
    std::lock_guard lock(mutex_);
    if (aborted_) throw TranscriptError("recording session aborted after a failed write");
    if (!written_.insert(digest).second) return response;
    try {
        sink_->append(line);
    } catch (const std::exception& e) {
        aborted_ = true;
        sink_->mark_partial(e.what());
        throw TranscriptError(std::string("transcript write failed: ") + e.what());
    }
    return response;
}

} // namespace evojudge
