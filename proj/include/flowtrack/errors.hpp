#ifndef FLOWTRACK_ERRORS_HPP
#define FLOWTRACK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace flowtrack {

// Tensor/layer dimension mismatches.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent user input (configs, scenarios, batches, ...).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called out of order (e.g. backward without a cached forward).
class StateError : public std::runtime_error {
public:
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Box arithmetic on degenerate geometry.
class GeometryError : public std::runtime_error {
public:
    explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite gradients, missing foreground samples, and similar.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt on-disk data (bad magic, truncated payload, schema mismatch).
class DataIntegrityError : public std::runtime_error {
public:
    explicit DataIntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flowtrack

#endif  // FLOWTRACK_ERRORS_HPP
