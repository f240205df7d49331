#pragma once

#include <stdexcept>
#include <string>

namespace s2ldm {

// Training produced a non-finite loss or gradient; the run must abort.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file failed validation (magic/version/dims/truncation).
class CorruptCheckpointError : public std::runtime_error {
public:
    explicit CorruptCheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// A metric is undefined for the given inputs (e.g. all-zero target).
class UndefinedMetricError : public std::runtime_error {
public:
    explicit UndefinedMetricError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace s2ldm
