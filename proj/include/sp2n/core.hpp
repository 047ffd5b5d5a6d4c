#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sp2n {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// Default membership tolerance, scaled by the matrix magnitude so that
// compositions of large-entry propagators still validate.
inline double default_symplectic_tol(const Matrix& m) {
    return 1e-10 * std::max(1.0, max_abs(m));
}

// Coordinate ordering for n canonical pairs. Odd positions (1-based) are
// position-like, even ones momentum-like.
struct ModeLayout {
    int n;
    std::vector<std::string> labels;

    ModeLayout(int n_, std::vector<std::string> labels_) : n(n_), labels(std::move(labels_)) {
        if (n < 1) throw std::invalid_argument("ModeLayout: n must be positive");
        if (labels.size() != static_cast<std::size_t>(2 * n))
            throw std::invalid_argument("ModeLayout: need exactly 2n labels");
    }

    // System pair (q, p) followed by two pointer pairs.
    static ModeLayout arthurs_kelly() {
        return ModeLayout(3, {"q", "p", "Q1", "P1", "Q2", "P2"});
    }
};

// Block-diagonal symplectic metric: n copies of [[0,1],[-1,0]].
inline Matrix metric(int n) {
    if (n < 1) throw std::invalid_argument("metric: n must be positive");
    Matrix beta = Matrix::Zero(2 * n, 2 * n);
    for (int j = 0; j < n; ++j) {
        beta(2 * j, 2 * j + 1) = 1.0;
        beta(2 * j + 1, 2 * j) = -1.0;
    }
    return beta;
}

inline void require_even_square(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) throw std::invalid_argument(std::string(who) + ": matrix must be square");
    if (m.rows() % 2 != 0 || m.rows() == 0)
        throw std::invalid_argument(std::string(who) + ": dimension must be a positive even number");
}

// Membership test: max-norm of M^T beta M - beta against tol.
inline bool is_symplectic(const Matrix& m, double tol) {
    require_even_square(m, "is_symplectic");
    if (!(tol > 0)) throw std::invalid_argument("is_symplectic: tol must be positive");
    const int n = static_cast<int>(m.rows()) / 2;
    const Matrix beta = metric(n);
    return max_abs(m.transpose() * beta * m - beta) <= tol;
}

// An element of Sp(2n,R), validated at construction.
struct SymplecticMatrix {
    int n;
    Matrix m;
    double tol;

    explicit SymplecticMatrix(Matrix entries, double tol_ = -1.0)
        : n(0), m(std::move(entries)), tol(tol_) {
        require_even_square(m, "SymplecticMatrix");
        n = static_cast<int>(m.rows()) / 2;
        if (tol < 0) tol = default_symplectic_tol(m);
        if (!is_symplectic(m, tol)) {
            const Matrix beta = metric(n);
            std::ostringstream msg;
            msg << "SymplecticMatrix: membership residual "
                << max_abs(m.transpose() * beta * m - beta) << " exceeds tol " << tol;
            throw numeric_error(msg.str());
        }
    }

    static SymplecticMatrix identity(int n) { return SymplecticMatrix(Matrix::Identity(2 * n, 2 * n)); }
};

// Coefficients of a quadratic Hamiltonian H = (1/2) h_ab xi_a xi_b.
// h is symmetrized at construction so h == h^T holds exactly.
struct QuadraticHamiltonian {
    int n;
    Matrix h;
    std::string unit_note;

    explicit QuadraticHamiltonian(Matrix coefficients, std::string note = "")
        : n(0), h(std::move(coefficients)), unit_note(std::move(note)) {
        require_even_square(h, "QuadraticHamiltonian");
        n = static_cast<int>(h.rows()) / 2;
        h = 0.5 * (h + h.transpose()).eval();
    }
};

// Evolution generator J = h beta; S(t) = exp(-tJ).
struct Generator {
    int n;
    Matrix j;
};

inline Generator generator(const QuadraticHamiltonian& ham) {
    Matrix j = ham.h * metric(ham.n);
    return Generator{ham.n, std::move(j)};
}

// Smallest k <= kmax with J^k = 0, if any. Powers whose entries fall below
// tol * |J|_max^k are treated as zero.
inline std::optional<int> nilpotency_index(const Generator& gen, int kmax, double tol = 1e-13) {
    if (kmax < 1) throw std::invalid_argument("nilpotency_index: kmax must be >= 1");
    const double scale = max_abs(gen.j);
    Matrix power = Matrix::Identity(gen.j.rows(), gen.j.cols());
    double scale_k = 1.0;
    for (int k = 1; k <= kmax; ++k) {
        power = (power * gen.j).eval();
        scale_k *= std::max(scale, 1.0);
        if (max_abs(power) <= tol * scale_k) return k;
    }
    return std::nullopt;
}

// General matrix exponential by scaling and squaring with a Taylor core.
// Terms are added until they fall below tol relative to the partial sum.
inline Matrix expm(const Matrix& a, double tol = 1e-13) {
    require_even_square(a, "expm");
    const double norm = max_abs(a);
    int squarings = 0;
    if (norm > 0.25) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
        squarings = std::min(squarings, 64);
    }
    const Matrix b = a / std::ldexp(1.0, squarings);
    Matrix sum = Matrix::Identity(a.rows(), a.cols());
    Matrix term = sum;
    for (int k = 1; k <= 60; ++k) {
        term = (term * b / static_cast<double>(k)).eval();
        sum += term;
        if (max_abs(term) <= tol * std::max(1.0, max_abs(sum)) * 1e-3) break;
        if (max_abs(term) == 0.0) break;
    }
    for (int i = 0; i < squarings; ++i) sum = (sum * sum).eval();
    if (!sum.allFinite()) throw numeric_error("expm: overflow, argument norm too large");
    return sum;
}

// S(t) = exp(-tJ). Nilpotent generators (kmax = 2n) get the exact polynomial;
// everything else goes through scaling and squaring.
inline SymplecticMatrix propagator(const Generator& gen, double t, double tol = 1e-13) {
    if (!std::isfinite(t)) throw std::invalid_argument("propagator: t must be finite");
    const Matrix tj = -t * gen.j;
    Matrix s;
    if (auto k = nilpotency_index(gen, 2 * gen.n)) {
        s = Matrix::Identity(tj.rows(), tj.cols());
        Matrix term = s;
        for (int m = 1; m < *k; ++m) {
            term = (term * tj / static_cast<double>(m)).eval();
            s += term;
        }
    } else {
        s = expm(tj, tol);
    }
    if (!s.allFinite()) throw numeric_error("propagator: overflow for extreme t*|J|");
    return SymplecticMatrix(std::move(s), 1e-10 * std::max(1.0, max_abs(s)));
}

inline SymplecticMatrix compose(const SymplecticMatrix& a, const SymplecticMatrix& b) {
    if (a.n != b.n) throw std::invalid_argument("compose: dimension mismatch");
    Matrix prod = a.m * b.m;
    const double tol = std::max(a.tol + b.tol, default_symplectic_tol(prod));
    return SymplecticMatrix(std::move(prod), tol);
}

// Group-relation inverse: S^{-1} = -beta S^T beta. No general inversion.
inline SymplecticMatrix symplectic_inverse(const SymplecticMatrix& s) {
    const Matrix beta = metric(s.n);
    Matrix inv = -beta * s.m.transpose() * beta;
    return SymplecticMatrix(std::move(inv), s.tol);
}

// Mean evolution xi_a(t) = S_ba xi_b(0), i.e. xi(t) = S^T xi(0). S is stored
// exactly as the displayed propagator matrix; the transpose lives here.
inline Vector evolve_mean(const SymplecticMatrix& s, const Vector& xi0) {
    if (xi0.size() != 2 * s.n) throw std::invalid_argument("evolve_mean: dimension mismatch");
    return s.m.transpose() * xi0;
}

// Symmetrized second moments of the 2n canonical operators.
struct VarianceMatrix {
    int n;
    Matrix v;
    double hbar;

    explicit VarianceMatrix(Matrix entries, double hbar_ = 1.0)
        : n(0), v(std::move(entries)), hbar(hbar_) {
        require_even_square(v, "VarianceMatrix");
        if (!(hbar > 0)) throw std::invalid_argument("VarianceMatrix: hbar must be positive");
        n = static_cast<int>(v.rows()) / 2;
        v = (0.5 * (v + v.transpose())).eval();
        if (!v.allFinite()) throw std::invalid_argument("VarianceMatrix: entries must be finite");
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(v, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    bool is_positive_definite() const { return min_eigenvalue() > 0.0; }

    void require_positive_definite() const {
        const double lo = min_eigenvalue();
        if (!(lo > 0.0)) {
            std::ostringstream msg;
            msg << "VarianceMatrix: not positive definite, smallest eigenvalue " << lo;
            throw numeric_error(msg.str());
        }
    }
};

// Congruence transform V(t) = S^T V(0) S, resymmetrized to keep downstream
// spectral routines on exactly symmetric input.
inline VarianceMatrix evolve_variance(const SymplecticMatrix& s, const VarianceMatrix& v0) {
    if (s.n != v0.n) throw std::invalid_argument("evolve_variance: dimension mismatch");
    Matrix vt = s.m.transpose() * v0.v * s.m;
    VarianceMatrix out(std::move(vt), v0.hbar);
#ifndef NDEBUG
    if (v0.is_positive_definite() && out.min_eigenvalue() <= -1e-10 * max_abs(out.v))
        throw numeric_error("evolve_variance: congruence lost positive definiteness");
#endif
    return out;
}

// The quadratic form (1/2) xi^T h xi as a coefficient per label pair, for
// checking a Hamiltonian against its intended operator expression.
inline std::map<std::pair<int, int>, double> hamiltonian_terms(const QuadraticHamiltonian& ham) {
    std::map<std::pair<int, int>, double> terms;
    for (int a = 0; a < 2 * ham.n; ++a) {
        for (int b = a; b < 2 * ham.n; ++b) {
            const double coeff = (a == b) ? 0.5 * ham.h(a, a) : ham.h(a, b);
            if (coeff != 0.0) terms[{a, b}] = coeff;
        }
    }
    return terms;
}

inline std::string hamiltonian_to_string(const QuadraticHamiltonian& ham, const ModeLayout& layout) {
    if (layout.n != ham.n) throw std::invalid_argument("hamiltonian_to_string: layout mismatch");
    std::ostringstream out;
    bool first = true;
    for (const auto& [ab, coeff] : hamiltonian_terms(ham)) {
        if (!first) out << " + ";
        first = false;
        out << coeff << "*" << layout.labels[ab.first];
        if (ab.first == ab.second)
            out << "^2";
        else
            out << "*" << layout.labels[ab.second];
    }
    if (first) out << "0";
    return out.str();
}

}  // namespace sp2n
