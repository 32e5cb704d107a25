#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hsdc/errors.hpp"

namespace hsdc {

/// Sizes of the three solution blocks: membrane potential, auxiliary ionic
/// variables, and gating variables. Any block may be empty.
struct BlockLayout {
    std::size_t n_vm = 0;
    std::size_t n_wa = 0;
    std::size_t n_wg = 0;

    std::size_t total() const { return n_vm + n_wa + n_wg; }
    bool operator==(const BlockLayout&) const = default;
};

/// Flat solution vector (V_m, w_a, w_g) with block-size metadata.
/// Block sizes are fixed for the lifetime of a problem; all algebra below
/// validates layouts in debug builds only.
class State {
public:
    State() = default;
    State(const BlockLayout& layout, double fill = 0.0)
        : layout_(layout), data_(layout.total(), fill) {}

    const BlockLayout& layout() const { return layout_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> vm() { return {data_.data(), layout_.n_vm}; }
    std::span<const double> vm() const { return {data_.data(), layout_.n_vm}; }
    std::span<double> wa() { return {data_.data() + layout_.n_vm, layout_.n_wa}; }
    std::span<const double> wa() const { return {data_.data() + layout_.n_vm, layout_.n_wa}; }
    std::span<double> wg() { return {data_.data() + layout_.n_vm + layout_.n_wa, layout_.n_wg}; }
    std::span<const double> wg() const { return {data_.data() + layout_.n_vm + layout_.n_wa, layout_.n_wg}; }

    bool operator==(const State&) const = default;

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    BlockLayout layout_;
    std::vector<double> data_;
};

inline void require_same_layout(const State& a, const State& b, const char* where) {
    if (a.layout() != b.layout())
        throw ShapeError(std::string(where) + ": state layouts differ");
}

// Elementwise helpers on full vectors. Hot loops; debug-only layout checks.

inline void set_zero(State& x) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.0;
}

/// y += a*x
inline void axpy(double a, const State& x, State& y) {
    assert(x.layout() == y.layout());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// y = x
inline void copy_into(const State& x, State& y) {
    assert(x.layout() == y.layout());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i];
}

inline double max_abs(const State& x) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i]));
    return m;
}

inline double max_abs_diff(const State& a, const State& b) {
    assert(a.layout() == b.layout());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace hsdc
