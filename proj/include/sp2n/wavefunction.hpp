#pragma once

#include <sp2n/arthurs_kelly.hpp>
#include <sp2n/core.hpp>
#include <sp2n/fft.hpp>

#include <complex>
#include <numbers>
#include <vector>

namespace sp2n {

using cdouble = std::complex<double>;

// Uniform grid axis. Nodes sit at min + j*spacing for j = 0..count-1 with
// spacing = (max - min)/count; max itself is excluded, and count is a power
// of two so the axis can be transformed.
struct Axis {
    double min;
    double max;
    int count;

    Axis(double min_, double max_, int count_) : min(min_), max(max_), count(count_) {
        if (!(max > min)) throw std::invalid_argument("Axis: max must exceed min");
        if (count < 8 || !is_power_of_two(static_cast<std::size_t>(count)))
            throw std::invalid_argument("Axis: count must be a power of two, at least 8");
    }

    double spacing() const { return (max - min) / count; }
    double node(int j) const { return min + j * spacing(); }
    double span() const { return max - min; }

    bool operator==(const Axis& o) const {
        return min == o.min && max == o.max && count == o.count;
    }
};

// One-dimensional system wave function on its own axis.
struct SystemWavefunction {
    Axis axis;
    std::vector<cdouble> values;
    double hbar;

    SystemWavefunction(Axis axis_, std::vector<cdouble> values_, double hbar_)
        : axis(axis_), values(std::move(values_)), hbar(hbar_) {
        if (values.size() != static_cast<std::size_t>(axis.count))
            throw std::invalid_argument("SystemWavefunction: value count must match the axis");
        if (!(hbar > 0)) throw std::invalid_argument("SystemWavefunction: hbar must be positive");
    }

    double squared_norm() const {
        double s = 0.0;
        for (const cdouble& v : values) s += std::norm(v);
        return s * axis.spacing();
    }

    void normalize() {
        const double n = std::sqrt(squared_norm());
        if (!(n > 0)) throw numeric_error("SystemWavefunction: cannot normalize the zero function");
        for (cdouble& v : values) v /= n;
    }

    void require_normalized(double tol = 1e-8) const {
        const double n = squared_norm();
        if (std::abs(n - 1.0) > tol) {
            std::ostringstream msg;
            msg << "SystemWavefunction: squared norm " << n << " is not 1 within " << tol;
            throw numeric_error(msg.str());
        }
    }

    // Minimum-uncertainty packet centered at (q0, p0) with position variance var_q.
    static SystemWavefunction gaussian(const Axis& axis, double q0, double p0, double var_q,
                                       double hbar = 1.0) {
        if (!(var_q > 0)) throw std::invalid_argument("gaussian: var_q must be positive");
        std::vector<cdouble> v(axis.count);
        for (int j = 0; j < axis.count; ++j) {
            const double q = axis.node(j);
            const double arg = -(q - q0) * (q - q0) / (4.0 * var_q);
            v[j] = std::exp(arg) * std::polar(1.0, p0 * (q - q0) / hbar);
        }
        SystemWavefunction psi(axis, std::move(v), hbar);
        psi.normalize();
        return psi;
    }

    // Symmetric superposition of two displaced packets, zero mean momentum.
    static SystemWavefunction two_hump(const Axis& axis, double center, double half_separation,
                                       double var_q, double hbar = 1.0) {
        if (!(var_q > 0)) throw std::invalid_argument("two_hump: var_q must be positive");
        std::vector<cdouble> v(axis.count);
        for (int j = 0; j < axis.count; ++j) {
            const double q = axis.node(j);
            const double l = q - (center - half_separation);
            const double r = q - (center + half_separation);
            v[j] = std::exp(-l * l / (4.0 * var_q)) + std::exp(-r * r / (4.0 * var_q));
        }
        SystemWavefunction psi(axis, std::move(v), hbar);
        psi.normalize();
        return psi;
    }

    // Quadrature moments; momentum content through the spectral derivative.
    SystemMoments moments() const {
        require_normalized(1e-6);
        const double dq = axis.spacing();

        double mq = 0.0, vq = 0.0;
        for (int j = 0; j < axis.count; ++j) mq += axis.node(j) * std::norm(values[j]) * dq;
        for (int j = 0; j < axis.count; ++j) {
            const double d = axis.node(j) - mq;
            vq += d * d * std::norm(values[j]) * dq;
        }

        Fft fft(axis.count);
        std::vector<cdouble> spec = values;
        fft.forward(spec.data());
        const double dp = 2.0 * std::numbers::pi * hbar / (axis.count * dq);
        double wsum = 0.0, mp = 0.0;
        for (int k = 0; k < axis.count; ++k) {
            const double p = dp * fft.signed_index(k);
            const double w = std::norm(spec[k]);
            wsum += w;
            mp += p * w;
        }
        mp /= wsum;
        double vp = 0.0;
        for (int k = 0; k < axis.count; ++k) {
            const double p = dp * fft.signed_index(k) - mp;
            vp += p * p * std::norm(spec[k]);
        }
        vp /= wsum;

        // phi = p-hat psi, then cov from Re <psi| (q - mq)(phi - mp psi)>.
        std::vector<cdouble> phi = spec;
        for (int k = 0; k < axis.count; ++k) phi[k] *= dp * fft.signed_index(k);
        fft.inverse(phi.data());
        double cov = 0.0;
        for (int j = 0; j < axis.count; ++j) {
            const double d = axis.node(j) - mq;
            cov += d * std::real(std::conj(values[j]) * (phi[j] - mp * values[j])) * dq;
        }
        return SystemMoments{mq, mp, vq, vp, cov};
    }
};

struct GridAxes {
    Axis q;
    Axis q1;
    Axis q2;
};

// Full three-coordinate wave function, values indexed [q][Q1][Q2] row-major.
struct GridWavefunction {
    GridAxes axes;
    std::vector<cdouble> values;
    double hbar;

    GridWavefunction(GridAxes axes_, double hbar_)
        : axes(axes_),
          values(static_cast<std::size_t>(axes_.q.count) * axes_.q1.count * axes_.q2.count),
          hbar(hbar_) {
        if (!(hbar > 0)) throw std::invalid_argument("GridWavefunction: hbar must be positive");
    }

    std::size_t index(int iq, int i1, int i2) const {
        return (static_cast<std::size_t>(iq) * axes.q1.count + i1) * axes.q2.count + i2;
    }

    double cell_volume() const {
        return axes.q.spacing() * axes.q1.spacing() * axes.q2.spacing();
    }

    double squared_norm() const {
        double s = 0.0;
        for (const cdouble& v : values) s += std::norm(v);
        return s * cell_volume();
    }

    void require_normalized(double tol = 1e-6) const {
        const double n = squared_norm();
        if (std::abs(n - 1.0) > tol) {
            std::ostringstream msg;
            msg << "GridWavefunction: squared norm " << n << " is not 1 within " << tol;
            throw numeric_error(msg.str());
        }
    }

    // Largest |value| on the outermost index shell relative to the global peak.
    double boundary_leak() const {
        const int nq = axes.q.count, n1 = axes.q1.count, n2 = axes.q2.count;
        double peak = 0.0;
        for (const cdouble& v : values) peak = std::max(peak, std::abs(v));
        if (peak == 0.0) return 0.0;
        double edge = 0.0;
        for (int iq = 0; iq < nq; ++iq)
            for (int i1 = 0; i1 < n1; ++i1)
                for (int i2 = 0; i2 < n2; ++i2) {
                    if (iq != 0 && iq != nq - 1 && i1 != 0 && i1 != n1 - 1 && i2 != 0 &&
                        i2 != n2 - 1)
                        continue;
                    edge = std::max(edge, std::abs(values[index(iq, i1, i2)]));
                }
        return edge / peak;
    }
};

// Product initial state: system packet times two centered pointer Gaussians
// of width parameters b1, b2, renormalized on the grid.
inline GridWavefunction product_initial(const SystemWavefunction& psi, const AKParams& p,
                                        const GridAxes& axes) {
    p.validate();
    psi.require_normalized();
    if (!(psi.axis == axes.q))
        throw std::invalid_argument("product_initial: psi must live on the grid's q axis");
    if (psi.hbar != p.hbar)
        throw std::invalid_argument("product_initial: hbar mismatch between psi and params");

    GridWavefunction out(axes, p.hbar);
    std::vector<double> g1(axes.q1.count), g2(axes.q2.count);
    for (int i = 0; i < axes.q1.count; ++i) {
        const double x = axes.q1.node(i);
        g1[i] = std::exp(-x * x / p.b1);
    }
    for (int i = 0; i < axes.q2.count; ++i) {
        const double x = axes.q2.node(i);
        g2[i] = std::exp(-x * x / p.b2);
    }
    for (int iq = 0; iq < axes.q.count; ++iq)
        for (int i1 = 0; i1 < axes.q1.count; ++i1)
            for (int i2 = 0; i2 < axes.q2.count; ++i2)
                out.values[out.index(iq, i1, i2)] = psi.values[iq] * g1[i1] * g2[i2];

    const double leak = out.boundary_leak();
    if (leak > 1e-6) {
        std::ostringstream msg;
        msg << "product_initial: boundary amplitude " << leak << " of peak, axes too narrow";
        throw numeric_error(msg.str());
    }
    const double n = std::sqrt(out.squared_norm());
    if (!(n > 0)) throw numeric_error("product_initial: zero norm");
    for (cdouble& v : out.values) v /= n;
    return out;
}

namespace detail {

// Fraction of spectral energy in the near-Nyquist band |s| >= 3N/8.
inline bool band_limited(const std::vector<double>& energy_by_bin, int n, double threshold) {
    double total = 0.0, high = 0.0;
    for (int k = 0; k < n; ++k) {
        total += energy_by_bin[k];
        const int s = (k < n / 2) ? k : k - n;
        if (std::abs(s) >= (3 * n) / 8) high += energy_by_bin[k];
    }
    return total == 0.0 || high <= threshold * total;
}

}  // namespace detail

// Exact propagation under the measurement Hamiltonian. In the mixed
// representation (q, Q1, P2) the kernel is a pure substitution
//   psi_t(q, Q1, P2) = psi_0(q - K2 t P2, Q1 - K1 t q + (K1 K2 t^2/2) P2, P2),
// realized as two Fourier shifts: first along q (uniform for fixed P2), then
// along Q1 (uniform for fixed q, P2, using the already-shifted q). Both
// shifts are exact for band-limited data; aliasing and boundary wrap are
// detected and reported rather than silently accepted.
inline GridWavefunction propagate(const GridWavefunction& psi0, const AKParams& p) {
    p.validate();
    psi0.require_normalized();
    const int nq = psi0.axes.q.count, n1 = psi0.axes.q1.count, n2 = psi0.axes.q2.count;
    const double hbar = psi0.hbar;

    GridWavefunction out = psi0;
    Fft fq(nq), f1(n1), f2(n2);
    const double two_pi = 2.0 * std::numbers::pi;
    const double aliasing_threshold = 1e-6;

    // Pass 1: to the P2 representation (contiguous fibers).
    for (std::size_t base = 0; base < out.values.size(); base += n2)
        f2.forward(out.values.data() + base);

    // Physical momentum per P2 bin.
    std::vector<double> p2(n2);
    for (int k2 = 0; k2 < n2; ++k2)
        p2[k2] = two_pi * hbar * f2.signed_index(k2) / (n2 * psi0.axes.q2.spacing());

    // Energy per P2 bin: aliasing check plus the occupied-band shift check.
    std::vector<double> e2(n2, 0.0);
    for (std::size_t base = 0; base < out.values.size(); base += n2)
        for (int k2 = 0; k2 < n2; ++k2) e2[k2] += std::norm(out.values[base + k2]);
    if (!detail::band_limited(e2, n2, aliasing_threshold))
        throw numeric_error("propagate: momentum content of the second pointer reaches the Nyquist band");

    // A fiber whose shift exceeds half the q span wraps around the periodic
    // box. Negligible far-tail bins may do so; appreciable mass may not.
    const double wrap_threshold = 1e-9;
    {
        const double half_q = 0.5 * psi0.axes.q.span();
        double total = 0.0, wrapping = 0.0, worst = 0.0;
        for (int k2 = 0; k2 < n2; ++k2) {
            total += e2[k2];
            const double shift = std::abs(p.k2 * p.t * p2[k2]);
            if (shift >= half_q) {
                wrapping += e2[k2];
                worst = std::max(worst, shift);
            }
        }
        if (total > 0.0 && wrapping > wrap_threshold * total) {
            std::ostringstream msg;
            msg << "propagate: q shift up to " << worst << " exceeds half the q span "
                << psi0.axes.q.span() << " for a mass fraction " << wrapping / total
                << ", the grid cannot hold the motion";
            throw numeric_error(msg.str());
        }
    }

    // Pass 2: shift along q by K2 t P2, fiber by fiber. Record spectral
    // energy and the occupied q range on the way.
    std::vector<cdouble> fiber(std::max({nq, n1, n2}));
    std::vector<double> eq(nq, 0.0);
    const double uq = two_pi / (nq * psi0.axes.q.spacing());
    for (int i1 = 0; i1 < n1; ++i1) {
        for (int k2 = 0; k2 < n2; ++k2) {
            const std::size_t stride = static_cast<std::size_t>(n1) * n2;
            const std::size_t base = static_cast<std::size_t>(i1) * n2 + k2;
            for (int iq = 0; iq < nq; ++iq) fiber[iq] = out.values[base + iq * stride];
            fq.forward(fiber.data());
            for (int kq = 0; kq < nq; ++kq) eq[kq] += std::norm(fiber[kq]);
            const double shift = p.k2 * p.t * p2[k2];
            for (int kq = 0; kq < nq; ++kq)
                fiber[kq] *= std::polar(1.0, -uq * fq.signed_index(kq) * shift);
            fq.inverse(fiber.data());
            for (int iq = 0; iq < nq; ++iq) out.values[base + iq * stride] = fiber[iq];
        }
    }
    if (!detail::band_limited(eq, nq, aliasing_threshold))
        throw numeric_error("propagate: momentum content of the system reaches the Nyquist band");

    // Same wrap accounting for the record shift, which varies over (q, P2).
    {
        std::vector<double> mq2(static_cast<std::size_t>(nq) * n2, 0.0);
        for (int iq = 0; iq < nq; ++iq)
            for (int i1 = 0; i1 < n1; ++i1) {
                const std::size_t base = (static_cast<std::size_t>(iq) * n1 + i1) * n2;
                for (int k2 = 0; k2 < n2; ++k2)
                    mq2[static_cast<std::size_t>(iq) * n2 + k2] += std::norm(out.values[base + k2]);
            }
        const double half_1 = 0.5 * psi0.axes.q1.span();
        double total = 0.0, wrapping = 0.0, worst = 0.0;
        for (int iq = 0; iq < nq; ++iq)
            for (int k2 = 0; k2 < n2; ++k2) {
                const double e = mq2[static_cast<std::size_t>(iq) * n2 + k2];
                total += e;
                const double shift = std::abs(p.k1 * p.t * psi0.axes.q.node(iq) -
                                              0.5 * p.k1 * p.k2 * p.t * p.t * p2[k2]);
                if (shift >= half_1) {
                    wrapping += e;
                    worst = std::max(worst, shift);
                }
            }
        if (total > 0.0 && wrapping > wrap_threshold * total) {
            std::ostringstream msg;
            msg << "propagate: record shift up to " << worst << " exceeds half the Q1 span "
                << psi0.axes.q1.span() << " for a mass fraction " << wrapping / total
                << ", the grid cannot hold the motion";
            throw numeric_error(msg.str());
        }
    }

    // Pass 3: shift along Q1 by K1 t q - (K1 K2 t^2/2) P2.
    std::vector<double> e1(n1, 0.0);
    const double u1 = two_pi / (n1 * psi0.axes.q1.spacing());
    for (int iq = 0; iq < nq; ++iq) {
        for (int k2 = 0; k2 < n2; ++k2) {
            const std::size_t base = (static_cast<std::size_t>(iq) * n1) * n2 + k2;
            for (int i1 = 0; i1 < n1; ++i1) fiber[i1] = out.values[base + static_cast<std::size_t>(i1) * n2];
            f1.forward(fiber.data());
            for (int k1 = 0; k1 < n1; ++k1) e1[k1] += std::norm(fiber[k1]);
            const double shift =
                p.k1 * p.t * psi0.axes.q.node(iq) - 0.5 * p.k1 * p.k2 * p.t * p.t * p2[k2];
            for (int k1 = 0; k1 < n1; ++k1)
                fiber[k1] *= std::polar(1.0, -u1 * f1.signed_index(k1) * shift);
            f1.inverse(fiber.data());
            for (int i1 = 0; i1 < n1; ++i1) out.values[base + static_cast<std::size_t>(i1) * n2] = fiber[i1];
        }
    }
    if (!detail::band_limited(e1, n1, aliasing_threshold))
        throw numeric_error("propagate: momentum content of the first pointer reaches the Nyquist band");

    // Pass 4: back from the P2 representation.
    for (std::size_t base = 0; base < out.values.size(); base += n2)
        f2.inverse(out.values.data() + base);

    const double leak = out.boundary_leak();
    if (leak > 1e-6) {
        std::ostringstream msg;
        msg << "propagate: amplitude " << leak << " of peak reached the grid boundary";
        throw numeric_error(msg.str());
    }
    return out;
}

struct DistributionMoments {
    double mean_q1 = 0.0;
    double mean_q2 = 0.0;
    double var_q1 = 0.0;
    double var_q2 = 0.0;
    double cov = 0.0;
};

// Born-rule pointer distribution on the (Q1, Q2) grid.
struct JointDistribution {
    Axis q1;
    Axis q2;
    std::vector<double> values;  // row-major [Q1][Q2]

    JointDistribution(Axis q1_, Axis q2_, std::vector<double> values_, bool validate = true)
        : q1(q1_), q2(q2_), values(std::move(values_)) {
        if (values.size() != static_cast<std::size_t>(q1.count) * q2.count)
            throw std::invalid_argument("JointDistribution: value count must match the axes");
        if (validate) {
            double vmax = 0.0;
            for (double v : values) vmax = std::max(vmax, std::abs(v));
            for (double v : values)
                if (v < -1e-12 * std::max(1.0, vmax))
                    throw numeric_error("JointDistribution: negative probability beyond the numerical floor");
            const double n = total();
            if (std::abs(n - 1.0) > 1e-5) {
                std::ostringstream msg;
                msg << "JointDistribution: total probability " << n << " is not 1 within 1e-5";
                throw numeric_error(msg.str());
            }
        }
    }

    double at(int i1, int i2) const { return values[static_cast<std::size_t>(i1) * q2.count + i2]; }

    double total() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * q1.spacing() * q2.spacing();
    }

    DistributionMoments moments() const {
        const double w = q1.spacing() * q2.spacing();
        DistributionMoments m;
        double mass = 0.0;
        for (int i = 0; i < q1.count; ++i)
            for (int j = 0; j < q2.count; ++j) {
                const double pv = at(i, j) * w;
                mass += pv;
                m.mean_q1 += q1.node(i) * pv;
                m.mean_q2 += q2.node(j) * pv;
            }
        m.mean_q1 /= mass;
        m.mean_q2 /= mass;
        for (int i = 0; i < q1.count; ++i)
            for (int j = 0; j < q2.count; ++j) {
                const double pv = at(i, j) * w;
                const double d1 = q1.node(i) - m.mean_q1;
                const double d2 = q2.node(j) - m.mean_q2;
                m.var_q1 += d1 * d1 * pv;
                m.var_q2 += d2 * d2 * pv;
                m.cov += d1 * d2 * pv;
            }
        m.var_q1 /= mass;
        m.var_q2 /= mass;
        m.cov /= mass;
        return m;
    }
};

// Integrate out the system coordinate.
inline JointDistribution joint_distribution(const GridWavefunction& psi) {
    psi.require_normalized();
    const int nq = psi.axes.q.count, n1 = psi.axes.q1.count, n2 = psi.axes.q2.count;
    std::vector<double> p(static_cast<std::size_t>(n1) * n2, 0.0);
    const double dq = psi.axes.q.spacing();
    for (int iq = 0; iq < nq; ++iq)
        for (int i1 = 0; i1 < n1; ++i1)
            for (int i2 = 0; i2 < n2; ++i2)
                p[static_cast<std::size_t>(i1) * n2 + i2] +=
                    std::norm(psi.values[psi.index(iq, i1, i2)]) * dq;
    return JointDistribution(psi.axes.q1, psi.axes.q2, std::move(p));
}

namespace detail {

// Trigonometric interpolation onto the doubled axis: exact for band-limited
// data, and the original samples are preserved.
inline SystemWavefunction upsample2(const SystemWavefunction& psi) {
    const int n = psi.axis.count;
    Fft fn(n), f2(2 * n);
    std::vector<cdouble> spec = psi.values;
    fn.forward(spec.data());

    std::vector<cdouble> wide(static_cast<std::size_t>(2) * n, cdouble(0.0, 0.0));
    for (int k = 0; k < n / 2; ++k) wide[k] = spec[k];
    for (int k = n / 2 + 1; k < n; ++k) wide[k + n] = spec[k];
    wide[n / 2] = wide[2 * n - n / 2] = 0.5 * spec[n / 2];
    f2.inverse(wide.data());
    for (cdouble& v : wide) v *= 2.0;

    return SystemWavefunction(Axis(psi.axis.min, psi.axis.max, 2 * n), std::move(wide), psi.hbar);
}

// Direct evaluation of the product-form double-integral distribution on the
// given output axes. The inner q' quadrature runs on psi's own axis, the
// outer on qaxis.
inline std::vector<double> product_form_values(const SystemWavefunction& psi, const AKParams& p,
                                               const Axis& out1, const Axis& out2,
                                               const Axis& qaxis) {
    const double hbar = p.hbar;
    const double kt1 = p.k1 * p.t, kt2 = p.k2 * p.t;
    const double x_t = p.b2 / (4.0 * hbar * hbar * kt2 * kt2) - kt1 * kt1 / (4.0 * p.b1);
    const double prefactor = 0.5 / (std::numbers::pi * hbar * kt2 * std::numbers::pi * hbar * kt2) *
                             std::sqrt(p.b2 / p.b1);

    const int nq = qaxis.count;
    const int nqp = psi.axis.count;
    const double dq = qaxis.spacing();
    const double dqp = psi.axis.spacing();

    // Gaussian coupling between outer q and inner q' nodes.
    std::vector<double> couple(static_cast<std::size_t>(nq) * nqp);
    for (int a = 0; a < nq; ++a)
        for (int b = 0; b < nqp; ++b) {
            const double d = qaxis.node(a) - psi.axis.node(b);
            couple[static_cast<std::size_t>(a) * nqp + b] = std::exp(-x_t * d * d);
        }

    std::vector<double> out(static_cast<std::size_t>(out1.count) * out2.count);
    std::vector<cdouble> weighted(nqp);
    std::vector<double> outer(nq);
    std::vector<cdouble> inner(nq);
    for (int i1 = 0; i1 < out1.count; ++i1) {
        const double z1 = out1.node(i1);
        for (int a = 0; a < nq; ++a) {
            const double d = z1 - kt1 * qaxis.node(a);
            outer[a] = std::exp(-d * d / p.b1);
        }
        std::vector<cdouble> base(nqp);
        for (int b = 0; b < nqp; ++b) {
            const double qp = psi.axis.node(b);
            const double d = z1 - kt1 * qp;
            base[b] = psi.values[b] * std::exp(-d * d / (2.0 * p.b1));
        }
        for (int i2 = 0; i2 < out2.count; ++i2) {
            const double z2 = out2.node(i2);
            for (int b = 0; b < nqp; ++b) {
                const double qp = psi.axis.node(b);
                weighted[b] = base[b] * std::polar(1.0, -z2 * qp / (hbar * kt2));
            }
            for (int a = 0; a < nq; ++a) {
                cdouble s(0.0, 0.0);
                const double* row = couple.data() + static_cast<std::size_t>(a) * nqp;
                for (int b = 0; b < nqp; ++b) s += row[b] * weighted[b];
                inner[a] = s * dqp;
            }
            double acc = 0.0;
            for (int a = 0; a < nq; ++a) acc += outer[a] * std::norm(inner[a]);
            out[static_cast<std::size_t>(i1) * out2.count + i2] = prefactor * acc * dq;
        }
    }
    return out;
}

}  // namespace detail

// The product-form double-integral distribution, evaluated by quadrature
// with a step-halving convergence estimate. The inner integral runs on the
// wave function's own axis; the outer q axis defaults to the hull of the
// packet support and the back-projected output range.
inline JointDistribution distribution_product_form(const SystemWavefunction& psi, const AKParams& p,
                                                   const Axis& out1, const Axis& out2,
                                                   std::optional<Axis> qaxis = std::nullopt) {
    p.validate();
    psi.require_normalized();
    if (p.k2 * p.t == 0.0)
        throw std::invalid_argument("distribution_product_form: needs K2 t != 0");

    Axis q = qaxis.value_or([&] {
        const double pad = 6.0 * std::sqrt(p.b1) / std::max(std::abs(p.k1 * p.t), 1e-12);
        double lo = psi.axis.min, hi = psi.axis.max;
        if (p.k1 * p.t != 0.0) {
            const double a = out1.min / (p.k1 * p.t), b = out1.max / (p.k1 * p.t);
            lo = std::min({lo, std::min(a, b) - pad});
            hi = std::max({hi, std::max(a, b) + pad});
        }
        int count = psi.axis.count;
        while ((hi - lo) / count > psi.axis.spacing()) count *= 2;
        return Axis(lo, hi, count);
    }());

    // Step halving of the inner rule, with the half-step samples supplied by
    // trigonometric interpolation; the remaining error of a second-order rule
    // is about a third of the observed change. The halved rule also doubles
    // the inner Nyquist rate, so aliasing of the Q2 oscillation shows up here.
    std::vector<double> base = detail::product_form_values(psi, p, out1, out2, q);
    std::vector<double> refined =
        detail::product_form_values(detail::upsample2(psi), p, out1, out2, q);
    double peak = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < refined.size(); ++i) {
        peak = std::max(peak, std::abs(refined[i]));
        diff = std::max(diff, std::abs(refined[i] - base[i]));
    }
    if (peak > 0.0 && diff / 3.0 > 1e-4 * peak) {
        std::ostringstream msg;
        msg << "distribution_product_form: quadrature not converged, step-halving estimate "
            << diff / (3.0 * peak) << " of peak";
        throw numeric_error(msg.str());
    }
    return JointDistribution(out1, out2, std::move(refined));
}

// The fully reduced special-case formula in its fixed unit convention
// (hbar = 1, K1 = K2 = K, b1 = 1/b2 = b, Kt = 1). The normalization constant
// is (4 pi^3 b)^{-1/2}: the printed source constant does not normalize and
// disagrees with the product-form route, so the value derived from carrying
// out the q integration is used.
inline JointDistribution distribution_special_case(const SystemWavefunction& psi, double b,
                                                   const Axis& out1, const Axis& out2) {
    if (!(b > 0)) throw std::invalid_argument("distribution_special_case: b must be positive");
    psi.require_normalized();

    const double prefactor = 1.0 / std::sqrt(4.0 * std::numbers::pi * std::numbers::pi *
                                             std::numbers::pi * b);
    const double dqp = psi.axis.spacing();
    std::vector<double> out(static_cast<std::size_t>(out1.count) * out2.count);
    std::vector<cdouble> base(psi.axis.count);
    for (int i1 = 0; i1 < out1.count; ++i1) {
        const double z1 = out1.node(i1);
        for (int bq = 0; bq < psi.axis.count; ++bq) {
            const double qp = psi.axis.node(bq);
            base[bq] = psi.values[bq] * std::exp(-(qp - z1) * (qp - z1) / (2.0 * b));
        }
        for (int i2 = 0; i2 < out2.count; ++i2) {
            const double z2 = out2.node(i2);
            cdouble s(0.0, 0.0);
            for (int bq = 0; bq < psi.axis.count; ++bq)
                s += base[bq] * std::polar(1.0, -psi.axis.node(bq) * z2);
            out[static_cast<std::size_t>(i1) * out2.count + i2] =
                prefactor * std::norm(s * dqp);
        }
    }
    return JointDistribution(out1, out2, std::move(out));
}

// Axes sized from the symplectic forward model: each marginal covered to
// mean +/- 8 sigma at both endpoints of the evolution.
inline GridAxes auto_axes(const SystemMoments& m, const AKParams& p, int nq, int n1, int n2) {
    p.validate();
    const VarianceMatrix v0 = product_variance(m, p);
    Vector xi0 = Vector::Zero(6);
    xi0(0) = m.q0;
    xi0(1) = m.p0;
    const SymplecticMatrix s = ak_propagator(p);
    const VarianceMatrix vt = evolve_variance(s, v0);
    const Vector xit = evolve_mean(s, xi0);

    auto cover = [](double mu0, double s0sq, double mut, double stsq, int count) {
        const double r = 8.0;
        const double lo = std::min(mu0 - r * std::sqrt(s0sq), mut - r * std::sqrt(stsq));
        const double hi = std::max(mu0 + r * std::sqrt(s0sq), mut + r * std::sqrt(stsq));
        return Axis(lo, hi, count);
    };
    return GridAxes{cover(m.q0, v0.v(0, 0), xit(0), vt.v(0, 0), nq),
                    cover(0.0, v0.v(2, 2), xit(2), vt.v(2, 2), n1),
                    cover(0.0, v0.v(4, 4), xit(4), vt.v(4, 4), n2)};
}

}  // namespace sp2n
