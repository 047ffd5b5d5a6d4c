#pragma once

#include <sp2n/core.hpp>

#include <iostream>
#include <optional>
#include <utility>

namespace sp2n {

// Couplings, apparatus width parameters, and interaction time for the joint
// position/momentum measurement model. K1 couples q to the first pointer,
// K2 couples p to the second; b1, b2 are the squared-length widths of the
// two pointer Gaussians.
struct AKParams {
    double k1 = 1.0;
    double k2 = 1.0;
    double b1 = 1.0;
    double b2 = 1.0;
    double hbar = 1.0;
    double t = 1.0;

    void validate() const {
        if (!(b1 > 0.0) || !(b2 > 0.0)) throw std::invalid_argument("AKParams: b1, b2 must be positive");
        if (!(hbar > 0.0)) throw std::invalid_argument("AKParams: hbar must be positive");
        if (!(t >= 0.0)) throw std::invalid_argument("AKParams: t must be nonnegative");
        if (!std::isfinite(k1) || !std::isfinite(k2)) throw std::invalid_argument("AKParams: couplings must be finite");
    }
};

// First and second moments of the system mode alone at t = 0.
struct SystemMoments {
    double q0 = 0.0;
    double p0 = 0.0;
    double var_q = 0.5;
    double var_p = 0.5;
    double cov_qp = 0.0;

    bool physical(double hbar) const {
        if (!(var_q > 0.0) || !(var_p > 0.0)) return false;
        const double det = var_q * var_p - cov_qp * cov_qp;
        return det >= 0.25 * hbar * hbar * (1.0 - 1e-12);
    }
};

// H = K1 q P1 + K2 p P2 as a quadratic form.
inline QuadraticHamiltonian ak_hamiltonian(double k1, double k2) {
    Matrix h = Matrix::Zero(6, 6);
    h(0, 3) = h(3, 0) = k1;
    h(1, 5) = h(5, 1) = k2;
    return QuadraticHamiltonian(std::move(h), "K1: 1/time, K2: 1/mass");
}

// Closed-form propagator. The generator is nilpotent of index 3, so this is
// the exact quadratic polynomial in tJ, shared bit for bit with the generic
// propagator path.
inline SymplecticMatrix ak_propagator(const AKParams& p) {
    p.validate();
    return propagator(generator(ak_hamiltonian(p.k1, p.k2)), p.t);
}

// Mean pointer readings: the transposed-propagator components 3 and 5.
inline std::pair<double, double> pointer_means(const Vector& xi0, const AKParams& p) {
    p.validate();
    if (xi0.size() != 6) throw std::invalid_argument("pointer_means: need the 6-component layout");
    const double ff = 0.5 * p.t * p.t * p.k1 * p.k2;
    const double q1 = xi0(2) + p.t * p.k1 * xi0(0) + ff * xi0(5);
    const double q2 = xi0(4) + p.t * p.k2 * xi0(1) - ff * xi0(3);
    return {q1, q2};
}

enum class PhysicalityMode { require, warn_only };

// Product-form initial variance matrix: system block from the given moments,
// each pointer mode a centered Gaussian of width parameter b.
inline VarianceMatrix product_variance(const SystemMoments& m, const AKParams& p,
                                       PhysicalityMode mode = PhysicalityMode::require) {
    p.validate();
    if (!m.physical(p.hbar)) {
        if (mode == PhysicalityMode::require)
            throw std::invalid_argument("product_variance: system moments violate the uncertainty bound");
        std::cerr << "product_variance: warning, system moments violate the uncertainty bound\n";
    }
    Matrix v = Matrix::Zero(6, 6);
    v(0, 0) = m.var_q;
    v(1, 1) = m.var_p;
    v(0, 1) = v(1, 0) = m.cov_qp;
    v(2, 2) = p.b1 / 4.0;
    v(3, 3) = p.hbar * p.hbar / p.b1;
    v(4, 4) = p.b2 / 4.0;
    v(5, 5) = p.hbar * p.hbar / p.b2;
    return VarianceMatrix(std::move(v), p.hbar);
}

// Closed-form pointer variances at time t. Coefficients are the frozen
// expansion of (S^T V0 S) at the two pointer-position slots; the congruence
// route is the reference these are tested against.
inline std::pair<double, double> pointer_spreads(const VarianceMatrix& v0, const AKParams& p) {
    p.validate();
    if (v0.n != 3) throw std::invalid_argument("pointer_spreads: need the 6-component layout");
    const Matrix& v = v0.v;
    const double a = p.t * p.k1;           // q feed into Q1
    const double c = p.t * p.k2;           // p feed into Q2
    const double f = 0.5 * p.t * p.t * p.k1 * p.k2;

    const double var_q1 = v(2, 2) + a * a * v(0, 0) + f * f * v(5, 5)
                        + 2.0 * a * v(0, 2) + 2.0 * f * v(2, 5) + 2.0 * a * f * v(0, 5);
    const double var_q2 = v(4, 4) + c * c * v(1, 1) + f * f * v(3, 3)
                        + 2.0 * c * v(1, 4) - 2.0 * f * v(3, 4) - 2.0 * c * f * v(1, 3);
    return {var_q1, var_q2};
}

// Apparatus-induced parts of the product-form pointer variances: what is
// left at the pointers when the system contributes nothing.
inline std::pair<double, double> inversion_noise_terms(const AKParams& p) {
    p.validate();
    const double d = p.t * p.t * p.hbar * p.k1 * p.k2;
    const double num = p.b1 * p.b2 + d * d;
    return {num / (4.0 * p.b2), num / (4.0 * p.b1)};
}

// Lower bound on the product of pointer spreads for product-form
// minimum-uncertainty-limited preparations.
inline double uncertainty_bound(const AKParams& p) {
    p.validate();
    const double root = std::sqrt(p.b1 * p.b2);
    const double s = root + p.t * p.t * p.hbar * p.k1 * p.k2;
    return s * s / (4.0 * root);
}

// One estimated channel: mean always usable, variance flagged when the noise
// subtraction lands negative. The raw subtracted value is kept either way so
// downstream averaging stays unbiased.
struct ChannelEstimate {
    double mean;
    double variance;
    bool variance_ok;
};

struct MomentEstimate {
    std::optional<ChannelEstimate> q;
    std::optional<ChannelEstimate> p;
};

// Invert the product-form forward model: divide out the couplings and
// subtract the apparatus noise floors. Channels with zero coupling are
// simply absent from the result.
inline MomentEstimate invert_pointer_statistics(double mean_q1, double mean_q2, double var_q1,
                                                double var_q2, const AKParams& p) {
    p.validate();
    const double a = p.t * p.k1;
    const double c = p.t * p.k2;
    if (a == 0.0 && c == 0.0)
        throw std::invalid_argument("invert_pointer_statistics: both channels uncoupled");
    const auto [noise_q, noise_p] = inversion_noise_terms(p);

    MomentEstimate out;
    if (a != 0.0) {
        const double var = (var_q1 - noise_q) / (a * a);
        out.q = ChannelEstimate{mean_q1 / a, var, var >= 0.0};
    }
    if (c != 0.0) {
        const double var = (var_q2 - noise_p) / (c * c);
        out.p = ChannelEstimate{mean_q2 / c, var, var >= 0.0};
    }
    return out;
}

// Composite propagator for a q-measurement stage followed by a p-measurement
// stage. Stage A acts first; in the Heisenberg convention used throughout,
// xi_final = (S_A S_B)^T xi_0.
inline SymplecticMatrix sequential_propagator(const AKParams& stage1, const AKParams& stage2) {
    stage1.validate();
    stage2.validate();
    if (stage1.k2 != 0.0) throw std::invalid_argument("sequential_propagator: stage 1 must have K2 = 0");
    if (stage2.k1 != 0.0) throw std::invalid_argument("sequential_propagator: stage 2 must have K1 = 0");
    return compose(ak_propagator(stage1), ak_propagator(stage2));
}

}  // namespace sp2n
