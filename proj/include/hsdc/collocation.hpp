#pragma once

#include <cstddef>
#include <vector>

namespace hsdc {

/// Minimal dense row-major matrix, used for node-space operators.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

/// Radau IIA quadrature nodes on (0,1], last node exactly 1.
/// Roots of P_{M-1}(x) - P_M(x) mapped from [-1,1], refined by safeguarded
/// Newton to ~1e-15.
std::vector<double> radau_nodes(int M);

/// Differentiation-at-zero weights by the classical Fornberg recursion:
/// entry (k,j) is the weight of p(c_j) in p^{(k)}(0), exact for every
/// polynomial p of degree <= M-1. Nodes must be distinct.
Matrix fornberg_weights(const std::vector<double>& nodes);

/// phi_k(z) = (1/(k-1)!) * int_0^1 e^{(1-r)z} r^{k-1} dr, k >= 1.
/// z = 0 evaluates the analytic limit 1/k!.
double phi_k(double z, int k);

/// Evaluate phi_1..phi_kmax at one argument; out must hold kmax entries.
void phi_all(double z, int kmax, double* out);

/// Lagrange interpolation matrix: row r holds ell_j(to[r]) for the basis on
/// `from`. Applying it to node values of any polynomial of degree
/// <= from.size()-1 reproduces its values at `to` exactly.
Matrix interp_matrix(const std::vector<double>& from, const std::vector<double>& to);

/// Nodes, substep gaps, Fornberg weights and the z=0 quadrature matrix of one
/// collocation hierarchy level. Immutable after construction; safe to share.
struct CollocationLevel {
    int M = 0;
    std::vector<double> nodes;   ///< c_1..c_M, strictly increasing, c_M = 1
    std::vector<double> deltas;  ///< d_i = c_i - c_{i-1} with c_0 = 0
    Matrix fornberg;             ///< M x M, see fornberg_weights()
    Matrix a0;                   ///< a_ij(0) for i,j = 1..M (stored 0-based)

    static CollocationLevel radau(int M);
};

/// One row of the exponential quadrature matrix for a scalar argument:
/// a_ij(z) = sum_k c_i^k w_j^{k-1} phi_k(c_i z), j = 1..M. `i` is 1-based.
std::vector<double> erk_weight_row(const CollocationLevel& level, int i, double z);

namespace detail {
/// Long-double phi evaluation used wherever a_ij coefficients are assembled;
/// the alternating Fornberg sums cancel several digits at large |z|.
void phi_all_ld(long double z, int kmax, long double* out);
/// Fill row i (1-based) of a_ij(z) in long double workspace `phi` (size M).
void erk_weight_row_ld(const CollocationLevel& level, int i, double z, double* row_out,
                       long double* phi_workspace);
} // namespace detail

} // namespace hsdc
