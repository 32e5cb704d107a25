#include "hsdc/collocation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hsdc/errors.hpp"

namespace hsdc {

namespace {

// P_{M-1}(x) - P_M(x) and its derivative, by the Legendre three-term
// recurrence. The Radau IIA nodes on (0,1] are the roots mapped by
// t = (x+1)/2; x = 1 is always a root.
void radau_poly(int M, long double x, long double& q, long double& dq) {
    long double p0 = 1.0L, p1 = x;    // P_0, P_1
    long double d0 = 0.0L, d1 = 1.0L; // P_0', P_1'
    if (M == 1) {
        q = p0 - p1;
        dq = d0 - d1;
        return;
    }
    for (int n = 1; n < M; ++n) {
        long double p2 = ((2.0L * n + 1.0L) * x * p1 - n * p0) / (n + 1.0L);
        long double d2 = ((2.0L * n + 1.0L) * (p1 + x * d1) - n * d0) / (n + 1.0L);
        p0 = p1; p1 = p2;
        d0 = d1; d1 = d2;
    }
    q = p0 - p1;   // P_{M-1} - P_M
    dq = d0 - d1;
}

// Safeguarded Newton on a sign-change bracket [lo, hi] of the Radau
// polynomial; falls back to bisection whenever the Newton step leaves the
// bracket.
long double newton_root(int M, long double lo, long double hi) {
    long double qlo, dq_unused;
    radau_poly(M, lo, qlo, dq_unused);
    long double x = 0.5L * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        long double q, dq;
        radau_poly(M, x, q, dq);
        if ((q > 0.0L) == (qlo > 0.0L)) lo = x; else hi = x;
        long double xn = (dq != 0.0L) ? x - q / dq : 0.5L * (lo + hi);
        if (!(xn > lo && xn < hi)) xn = 0.5L * (lo + hi);
        if (std::abs(xn - x) < 1e-18L * (1.0L + std::abs(x))) { x = xn; break; }
        x = xn;
    }
    return x;
}

} // namespace

std::vector<double> radau_nodes(int M) {
    if (M < 1) throw std::invalid_argument("radau_nodes: M must be >= 1");

    // Bracket the M-1 interior roots of P_{M-1} - P_M on (-1, 1) by a dense
    // scan, then polish each with Newton. The endpoint root x = 1 is exact.
    std::vector<double> roots;
    if (M > 1) {
        const int n_scan = 512 * M;
        const long double x_hi = 1.0L - 1e-6L;
        long double xp = -1.0L, qp, dqp;
        radau_poly(M, xp, qp, dqp);
        for (int s = 1; s <= n_scan; ++s) {
            long double x = -1.0L + (x_hi + 1.0L) * static_cast<long double>(s) / n_scan;
            long double q, dq;
            radau_poly(M, x, q, dq);
            if ((qp < 0.0L && q > 0.0L) || (qp > 0.0L && q < 0.0L))
                roots.push_back(static_cast<double>(newton_root(M, xp, x)));
            xp = x; qp = q;
        }
        if (static_cast<int>(roots.size()) != M - 1)
            throw std::runtime_error("radau_nodes: root bracketing failed for M=" + std::to_string(M));
    }

    std::vector<double> c;
    c.reserve(M);
    for (double x : roots) c.push_back(0.5 * (x + 1.0));
    c.push_back(1.0);
    std::sort(c.begin(), c.end());
    return c;
}

Matrix fornberg_weights(const std::vector<double>& nodes) {
    const int M = static_cast<int>(nodes.size());
    if (M < 1) throw std::invalid_argument("fornberg_weights: empty node set");
    for (int i = 0; i < M; ++i)
        for (int j = i + 1; j < M; ++j)
            if (nodes[i] == nodes[j])
                throw DegenerateNodesError("fornberg_weights: duplicate node " + std::to_string(nodes[i]));

    // Fornberg's recursion for weights of p^{(k)}(0), orders k = 0..M-1,
    // using all M nodes.
    const long double x0 = 0.0L;
    const int m = M - 1; // highest derivative order
    std::vector<long double> W(static_cast<std::size_t>(M) * M, 0.0L); // W[k*M + j]
    auto w = [&](int k, int j) -> long double& { return W[static_cast<std::size_t>(k) * M + j]; };

    long double c1 = 1.0L;
    long double c4 = nodes[0] - x0;
    w(0, 0) = 1.0L;
    for (int i = 1; i < M; ++i) {
        int mn = std::min(i, m);
        long double c2 = 1.0L;
        long double c5 = c4;
        c4 = nodes[i] - x0;
        for (int j = 0; j < i; ++j) {
            long double c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k)
                    w(k, i) = c1 * (k * w(k - 1, i - 1) - c5 * w(k, i - 1)) / c2;
                w(0, i) = -c1 * c5 * w(0, i - 1) / c2;
            }
            for (int k = mn; k >= 1; --k)
                w(k, j) = (c4 * w(k, j) - k * w(k - 1, j)) / c3;
            w(0, j) = c4 * w(0, j) / c3;
        }
        c1 = c2;
    }

    Matrix out(M, M);
    for (int k = 0; k < M; ++k)
        for (int j = 0; j < M; ++j)
            out(k, j) = static_cast<double>(w(k, j));
    return out;
}

namespace {

struct GaussRule {
    std::array<long double, 32> x; // nodes on [0,1]
    std::array<long double, 32> w; // weights on [0,1]
};

// 32-point Gauss-Legendre rule on [0,1], computed once by Newton on P_32.
const GaussRule& gauss32() {
    static const GaussRule rule = [] {
        GaussRule r{};
        const int n = 32;
        for (int i = 0; i < n; ++i) {
            // Chebyshev initial guess, then Newton on P_n
            long double x = std::cos(static_cast<long double>(M_PI) * (i + 0.75L) / (n + 0.5L));
            long double p, dp;
            for (int it = 0; it < 100; ++it) {
                long double p0 = 1.0L, p1 = x;
                for (int k = 1; k < n; ++k) {
                    long double p2 = ((2.0L * k + 1.0L) * x * p1 - k * p0) / (k + 1.0L);
                    p0 = p1; p1 = p2;
                }
                p = p1;
                dp = n * (x * p1 - p0) / (x * x - 1.0L);
                long double dx = p / dp;
                x -= dx;
                if (std::abs(dx) < 1e-19L) break;
            }
            long double wt = 2.0L / ((1.0L - x * x) * dp * dp);
            r.x[i] = 0.5L * (1.0L - x); // map [-1,1] -> [0,1], reversed order is fine
            r.w[i] = 0.5L * wt;
        }
        return r;
    }();
    return rule;
}

long double factorial_ld(int k) {
    long double f = 1.0L;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

} // namespace

namespace detail {

void phi_all_ld(long double z, int kmax, long double* out) {
    if (z == 0.0L) {
        long double f = 1.0L;
        for (int k = 1; k <= kmax; ++k) {
            f *= k;
            out[k - 1] = 1.0L / f;
        }
        return;
    }
    // Quadrature of e^{(1-r)z} r^{k-1} over [0,1]. For z << 0 the integrand
    // lives in a layer of width ~1/|z| at r = 1 (r = 0 for z >> 0), so the
    // rule is applied on the sub-interval where the exponential is above
    // e^{-60}; the discarded tail is below every tolerance used here.
    const GaussRule& g = gauss32();
    long double lo = 0.0L, hi = 1.0L;
    if (z < -60.0L) lo = 1.0L + 60.0L / z;      // 1 - 60/|z|
    else if (z > 60.0L) hi = 60.0L / z;
    const long double len = hi - lo;

    long double acc[32];
    long double rq[32];
    for (int q = 0; q < 32; ++q) {
        long double r = lo + len * g.x[q];
        rq[q] = r;
        acc[q] = len * g.w[q] * std::exp((1.0L - r) * z);
    }
    long double f = 1.0L; // (k-1)!
    for (int k = 1; k <= kmax; ++k) {
        if (k > 1) f *= (k - 1);
        long double s = 0.0L;
        for (int q = 0; q < 32; ++q) s += acc[q];
        out[k - 1] = s / f;
        // fold one more power of r in for the next k
        for (int q = 0; q < 32; ++q) acc[q] *= rq[q];
    }
}

void erk_weight_row_ld(const CollocationLevel& level, int i, double z, double* row_out,
                       long double* phi) {
    const int M = level.M;
    const long double ci = level.nodes[i - 1];
    phi_all_ld(ci * static_cast<long double>(z), M, phi);
    for (int j = 1; j <= M; ++j) {
        long double s = 0.0L;
        long double cpow = 1.0L;
        for (int k = 1; k <= M; ++k) {
            cpow *= ci; // c_i^k
            s += cpow * static_cast<long double>(level.fornberg(k - 1, j - 1)) * phi[k - 1];
        }
        row_out[j - 1] = static_cast<double>(s);
    }
}

} // namespace detail

double phi_k(double z, int k) {
    if (k < 1) throw std::invalid_argument("phi_k: k must be >= 1");
    if (!std::isfinite(z)) throw NonFiniteError("phi_k: non-finite argument");
    if (k > 64) throw std::invalid_argument("phi_k: k too large");
    long double buf[64];
    detail::phi_all_ld(static_cast<long double>(z), k, buf);
    return static_cast<double>(buf[k - 1]);
}

void phi_all(double z, int kmax, double* out) {
    if (kmax < 1) throw std::invalid_argument("phi_all: kmax must be >= 1");
    if (!std::isfinite(z)) throw NonFiniteError("phi_all: non-finite argument");
    if (kmax > 64) throw std::invalid_argument("phi_all: kmax too large");
    long double buf[64];
    detail::phi_all_ld(static_cast<long double>(z), kmax, buf);
    for (int k = 0; k < kmax; ++k) out[k] = static_cast<double>(buf[k]);
}

Matrix interp_matrix(const std::vector<double>& from, const std::vector<double>& to) {
    const std::size_t Ma = from.size();
    if (Ma == 0) throw std::invalid_argument("interp_matrix: empty source node set");
    for (std::size_t i = 0; i < Ma; ++i)
        for (std::size_t j = i + 1; j < Ma; ++j)
            if (from[i] == from[j])
                throw DegenerateNodesError("interp_matrix: duplicate source node");

    Matrix out(to.size(), Ma);
    for (std::size_t r = 0; r < to.size(); ++r) {
        const double s = to[r];
        for (std::size_t j = 0; j < Ma; ++j) {
            double v = 1.0;
            for (std::size_t k = 0; k < Ma; ++k) {
                if (k == j) continue;
                v *= (s - from[k]) / (from[j] - from[k]);
            }
            out(r, j) = v;
        }
    }
    return out;
}

CollocationLevel CollocationLevel::radau(int M) {
    CollocationLevel lvl;
    lvl.M = M;
    lvl.nodes = radau_nodes(M);
    lvl.deltas.resize(M);
    double prev = 0.0;
    for (int i = 0; i < M; ++i) {
        lvl.deltas[i] = lvl.nodes[i] - prev;
        prev = lvl.nodes[i];
    }
    lvl.fornberg = fornberg_weights(lvl.nodes);
    lvl.a0 = Matrix(M, M);
    std::vector<long double> phi(M);
    std::vector<double> row(M);
    for (int i = 1; i <= M; ++i) {
        detail::erk_weight_row_ld(lvl, i, 0.0, row.data(), phi.data());
        for (int j = 0; j < M; ++j) lvl.a0(i - 1, j) = row[j];
    }
    return lvl;
}

std::vector<double> erk_weight_row(const CollocationLevel& level, int i, double z) {
    if (i < 1 || i > level.M)
        throw std::invalid_argument("erk_weight_row: row index out of range");
    if (!std::isfinite(z)) throw NonFiniteError("erk_weight_row: non-finite argument");
    std::vector<double> row(level.M);
    std::vector<long double> phi(level.M);
    detail::erk_weight_row_ld(level, i, z, row.data(), phi.data());
    return row;
}

} // namespace hsdc
