#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evojudge {

// Base of every error the library throws. `code()` is a stable, machine-readable
// tag used by the CLI and the HTTP service when reporting failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual std::string_view code() const noexcept { return "error"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    [[nodiscard]] std::string_view code() const noexcept override { return "validation"; }
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::string_view code() const noexcept override { return "parse"; }

private:
    std::size_t line_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
    [[nodiscard]] std::string_view code() const noexcept override { return "not_found"; }
};

// A library action that cannot be applied to the state it targets.
class ActionError : public ValidationError {
public:
    using ValidationError::ValidationError;
    [[nodiscard]] std::string_view code() const noexcept override { return "invalid_action"; }
};

class BackendError : public Error {
public:
    BackendError(const std::string& message, int attempts, int http_status = 0)
        : Error(message), attempts_(attempts), http_status_(http_status) {}
    [[nodiscard]] int attempts() const noexcept { return attempts_; }
    [[nodiscard]] int http_status() const noexcept { return http_status_; }
    [[nodiscard]] std::string_view code() const noexcept override { return "backend"; }

private:
    int attempts_;
    int http_status_;
};

class UnscriptedRequestError : public Error {
public:
    explicit UnscriptedRequestError(std::string digest)
        : Error("unscripted request " + digest), digest_(std::move(digest)) {}
    [[nodiscard]] const std::string& digest() const noexcept { return digest_; }
    [[nodiscard]] std::string_view code() const noexcept override { return "unscripted_request"; }

private:
    std::string digest_;
};

// Model output that does not match the requested response schema.
class StructuredOutputError : public Error {
public:
    StructuredOutputError(const std::string& message, std::string raw_text)
        : Error(message), raw_text_(std::move(raw_text)) {}
    [[nodiscard]] const std::string& raw_text() const noexcept { return raw_text_; }
    [[nodiscard]] std::string_view code() const noexcept override { return "structured_output"; }

private:
    std::string raw_text_;
};

class TranscriptError : public Error {
public:
    using Error::Error;
    [[nodiscard]] std::string_view code() const noexcept override { return "transcript"; }
};

// A demonstration could not be judged; the record counts as incorrect.
class JudgeError : public Error {
public:
    using Error::Error;
    [[nodiscard]] std::string_view code() const noexcept override { return "judgment"; }
};

// The orchestrator produced no usable proposal for this iteration.
class AnalysisError : public Error {
public:
    using Error::Error;
    [[nodiscard]] std::string_view code() const noexcept override { return "analysis"; }
};

} // namespace evojudge
