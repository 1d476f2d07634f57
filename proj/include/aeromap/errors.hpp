#pragma once

#include <stdexcept>
#include <string>

namespace aeromap {

/// Malformed input files (PLY, scene, config, session state).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid input that violates a domain constraint.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what)
        : std::runtime_error(what) {}
};

/// Filesystem failures (missing file, unwritable path).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Persisted state written by an incompatible format revision.
class FormatVersionMismatch : public std::runtime_error {
public:
    explicit FormatVersionMismatch(const std::string& what)
        : std::runtime_error(what) {}
};

}  // namespace aeromap
