#pragma once

#include <sp2n/core.hpp>

#include <complex>
#include <vector>

namespace sp2n {

// Symmetric square root of a positive definite matrix. Rejects inputs whose
// smallest eigenvalue is not strictly positive, reporting that eigenvalue.
inline Matrix symmetric_sqrt(const Matrix& v) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(v);
    if (es.info() != Eigen::Success) throw numeric_error("symmetric_sqrt: eigensolver failed");
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > 0.0)) {
        std::ostringstream msg;
        msg << "symmetric_sqrt: matrix not positive definite, eigenvalue " << lo;
        throw numeric_error(msg.str());
    }
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

namespace detail {

// Positive-half spectrum and eigenvectors of the Hermitian matrix
// i * V^{1/2} beta V^{1/2}, whose eigenvalues come in +/- kappa pairs.
// Returned sorted descending in kappa.
struct NormalFormSpectrum {
    Matrix root;                      // V^{1/2}
    std::vector<double> kappas;      // descending
    Eigen::MatrixXcd vectors;        // columns matched to kappas
};

inline NormalFormSpectrum normal_form_spectrum(const VarianceMatrix& v) {
    const int n = v.n;
    Matrix root = symmetric_sqrt(v.v);
    Matrix m = root * metric(n) * root;
    m = (0.5 * (m - m.transpose())).eval();  // keep exactly antisymmetric

    const std::complex<double> iunit(0.0, 1.0);
    Eigen::MatrixXcd h = iunit * m.cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    if (es.info() != Eigen::Success)
        throw numeric_error("normal form: Hermitian eigensolver failed");

    // Ascending spectrum is (-kappa_n .. -kappa_1, kappa_1 .. kappa_n)? No:
    // ascending means the top n entries are the positive half, smallest first.
    NormalFormSpectrum out;
    out.root = std::move(root);
    out.kappas.resize(n);
    out.vectors.resize(2 * n, n);
    for (int j = 0; j < n; ++j) {
        const int src = 2 * n - 1 - j;  // largest first
        out.kappas[j] = es.eigenvalues()(src);
        out.vectors.col(j) = es.eigenvectors().col(src);
    }
    return out;
}

}  // namespace detail

// Moduli of the pairwise +/- i eigenvalues of beta V, sorted descending.
// Invariant under symplectic congruence of V.
inline std::vector<double> symplectic_eigenvalues(const VarianceMatrix& v) {
    return detail::normal_form_spectrum(v).kappas;
}

struct WilliamsonForm {
    std::vector<double> kappas;  // descending
    Matrix v_d;                  // diag(k1,k1,...,kn,kn)
    SymplecticMatrix s0;         // V = s0^T v_d s0
    double residual;             // max-norm reconstruction defect
};

inline WilliamsonForm williamson_decompose(const VarianceMatrix& v) {
    const int n = v.n;
    const auto spec = detail::normal_form_spectrum(v);

    // Real orthogonal column pairs from each positive eigenvector z:
    // u = sqrt(2) Re z, w = -sqrt(2) Im z.
    Matrix o(2 * n, 2 * n);
    Matrix d = Matrix::Zero(2 * n, 2 * n);
    Vector dinvsqrt(2 * n);
    for (int j = 0; j < n; ++j) {
        const double kappa = spec.kappas[j];
        if (!(kappa > 0.0)) throw numeric_error("williamson_decompose: nonpositive symplectic eigenvalue");
        o.col(2 * j) = std::sqrt(2.0) * spec.vectors.col(j).real();
        o.col(2 * j + 1) = -std::sqrt(2.0) * spec.vectors.col(j).imag();
        d(2 * j, 2 * j) = d(2 * j + 1, 2 * j + 1) = kappa;
        dinvsqrt(2 * j) = dinvsqrt(2 * j + 1) = 1.0 / std::sqrt(kappa);
    }

    Matrix s0 = dinvsqrt.asDiagonal() * o.transpose() * spec.root;
    const double vnorm = std::max(1.0, max_abs(v.v));
    Matrix recon = s0.transpose() * d * s0;
    const double residual = max_abs(recon - v.v);
    if (residual > 1e-6 * vnorm) {
        std::ostringstream msg;
        msg << "williamson_decompose: reconstruction residual " << residual
            << " too large for |V| = " << vnorm;
        throw numeric_error(msg.str());
    }
    SymplecticMatrix s(std::move(s0), 1e-9 * std::max(1.0, max_abs(s0)));
    return WilliamsonForm{spec.kappas, std::move(d), std::move(s), residual};
}

struct DimensionedWilliamsonForm {
    std::vector<std::pair<double, double>> pairs;  // (kappa_j, kappa'_j)
    Matrix v_dp;                                   // diag(k1, k1', k2, k2', ...)
    SymplecticMatrix s0p;                          // V = s0p^T v_dp s0p
};

// Push per-pair reciprocal scalings diag(l_j, 1/l_j) through the normal form
// so the diagonal carries (l^2 kappa, kappa / l^2) instead of (kappa, kappa).
inline DimensionedWilliamsonForm dimensioned_form(const VarianceMatrix& v,
                                                  const std::vector<double>& scales) {
    if (scales.size() != static_cast<std::size_t>(v.n))
        throw std::invalid_argument("dimensioned_form: need one scale per mode");
    for (double l : scales)
        if (!(l > 0.0)) throw std::invalid_argument("dimensioned_form: scales must be positive");

    const WilliamsonForm base = williamson_decompose(v);
    const int n = v.n;
    Matrix v_dp = Matrix::Zero(2 * n, 2 * n);
    Vector linv(2 * n);
    std::vector<std::pair<double, double>> pairs(n);
    for (int j = 0; j < n; ++j) {
        const double l2 = scales[j] * scales[j];
        pairs[j] = {base.kappas[j] * l2, base.kappas[j] / l2};
        v_dp(2 * j, 2 * j) = pairs[j].first;
        v_dp(2 * j + 1, 2 * j + 1) = pairs[j].second;
        linv(2 * j) = 1.0 / scales[j];
        linv(2 * j + 1) = scales[j];
    }
    Matrix s0p = linv.asDiagonal() * base.s0.m;
    SymplecticMatrix s(std::move(s0p), 1e-9 * std::max(1.0, max_abs(s0p)));
    return DimensionedWilliamsonForm{std::move(pairs), std::move(v_dp), std::move(s)};
}

struct PhysicalityResult {
    bool physical;
    double margin;  // smallest eigenvalue of V + (i hbar / 2) beta
};

// Covariant uncertainty test: V + (i hbar / 2) beta >= 0 as a Hermitian
// matrix, with a boundary allowance since minimum-uncertainty states sit
// exactly at zero.
inline PhysicalityResult is_physical(const VarianceMatrix& v) {
    const std::complex<double> iunit(0.0, 1.0);
    Eigen::MatrixXcd h = v.v.cast<std::complex<double>>() +
                         (0.5 * v.hbar * iunit) * metric(v.n).cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw numeric_error("is_physical: eigensolver failed");
    const double margin = es.eigenvalues().minCoeff();
    const double tol = 1e-10 * max_abs(v.v);
    return PhysicalityResult{margin >= -tol, margin};
}

}  // namespace sp2n
