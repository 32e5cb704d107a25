#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hsdc {

/// Shape/layout mismatch between states or fields.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Duplicate or otherwise unusable interpolation nodes.
class DegenerateNodesError : public std::invalid_argument {
public:
    explicit DegenerateNodesError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Non-finite value where a finite one is required.
class NonFiniteError : public std::runtime_error {
public:
    explicit NonFiniteError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A cached quantity was used after its inputs changed without a refresh.
class InternalStateError : public std::logic_error {
public:
    explicit InternalStateError(const std::string& msg) : std::logic_error(msg) {}
};

/// Iteration produced a non-finite state or a runaway residual.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, int node, int step = -1)
        : std::runtime_error(msg), node_index(node), step_index(step) {}
    int node_index;   ///< collocation node where divergence was detected, -1 if n/a
    int step_index;   ///< parallel step index, -1 if n/a
};

/// Iteration cap reached before the residual tolerance was met.
class MaxIterationsError : public std::runtime_error {
public:
    MaxIterationsError(const std::string& msg, std::vector<std::vector<double>> traces)
        : std::runtime_error(msg), residual_traces(std::move(traces)) {}
    /// residual_traces[p][k] = relative residual of step p after iteration k+1
    std::vector<std::vector<double>> residual_traces;
};

/// Malformed, truncated or incompatible state file.
class FileFormatError : public std::runtime_error {
public:
    explicit FileFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace hsdc
