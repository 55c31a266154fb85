#pragma once

#include <stdexcept>
#include <string>

namespace lrr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent or invalid voxel geometry (spacing, direction, grid mismatch).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Input is well-formed but numerically degenerate (zero variance, empty mask).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Tensor extents do not fit the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace lrr
