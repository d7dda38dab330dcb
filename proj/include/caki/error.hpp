#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace caki {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Raised for inputs that are well-formed but mathematically degenerate
/// (for example a zero-norm vector handed to cosine).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

class EmptyBank : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FingerprintMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed binary input. `offset()` is the byte position where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace caki
