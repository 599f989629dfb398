#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace svbias {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition or domain invariant was violated by the caller's input.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Input text could not be parsed. `offset()` is a byte offset when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset = npos)
        : Error(offset == npos ? what : what + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Well-formed input of the wrong kind (e.g. a LineString where a Polygon is required).
class TypeError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage failed; carries the stage name and the input it was reading.
class StageError : public Error {
public:
    StageError(std::string stage, std::string path, const std::string& cause, bool bad_input)
        : Error("stage '" + stage + "' failed" + (path.empty() ? "" : " on '" + path + "'") + ": " + cause),
          stage_(std::move(stage)), path_(std::move(path)), bad_input_(bad_input) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& path() const noexcept { return path_; }
    /// True when the failure is attributable to user input rather than an internal fault.
    bool bad_input() const noexcept { return bad_input_; }

private:
    std::string stage_;
    std::string path_;
    bool bad_input_;
};

} // namespace svbias
