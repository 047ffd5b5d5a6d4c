#pragma once
// Monte Carlo estimation of system moments from simulated pointer readings:
// draw (Q1, Q2) pairs from a joint record distribution, then undo the known
// coupling gains and apparatus noise to recover the prepared moments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sp2n/arthurs_kelly.hpp"
#include "sp2n/core.hpp"
#include "sp2n/rng.hpp"
#include "sp2n/wavefunction.hpp"

namespace sp2n {

// A reproducible batch of simulated readings. The same seed and stream give
// the same pairs bit for bit; parallel batches should use distinct streams.
struct SampleBatch {
    std::vector<std::pair<double, double>> pairs;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::string source;
};

// Inverse-CDF sampling: marginal in Q1, then the conditional in Q2 given the
// chosen Q1 cell. Each node owns the cell [node - spacing/2, node + spacing/2)
// and the position within a cell is linear in the uniform draw. Two uniforms
// are consumed per pair, Q1 first.
inline SampleBatch sample(const JointDistribution& dist, std::size_t count, std::uint64_t seed,
                          std::uint64_t stream = 0, std::string source = {}) {
    const int n1 = dist.q1.count, n2 = dist.q2.count;

    std::vector<double> row_cum(static_cast<std::size_t>(n1) * n2);
    std::vector<double> marg_cum(n1);
    double total = 0.0;
    for (int r = 0; r < n1; ++r) {
        double running = 0.0;
        for (int c = 0; c < n2; ++c) {
            running += std::max(dist.values[static_cast<std::size_t>(r) * n2 + c], 0.0);
            row_cum[static_cast<std::size_t>(r) * n2 + c] = running;
        }
        total += running;
        marg_cum[r] = total;
    }
    if (!(total > 0.0)) throw numeric_error("sample: distribution carries no mass");

    Xoshiro256pp rng(seed, stream);
    SampleBatch batch;
    batch.seed = seed;
    batch.stream = stream;
    batch.source = std::move(source);
    batch.pairs.reserve(count);

    auto pick = [](const double* cum, int n, double u) {
        const int i = static_cast<int>(std::upper_bound(cum, cum + n, u) - cum);
        return std::min(i, n - 1);
    };
    for (std::size_t k = 0; k < count; ++k) {
        const double u1 = rng.next_double() * total;
        const int r = pick(marg_cum.data(), n1, u1);
        const double lo1 = r > 0 ? marg_cum[r - 1] : 0.0;
        const double m1 = marg_cum[r] - lo1;
        const double f1 = m1 > 0.0 ? (u1 - lo1) / m1 : 0.5;
        const double q1 = dist.q1.node(r) + (f1 - 0.5) * dist.q1.spacing();

        const double* row = row_cum.data() + static_cast<std::size_t>(r) * n2;
        const double u2 = rng.next_double() * row[n2 - 1];
        const int c = pick(row, n2, u2);
        const double lo2 = c > 0 ? row[c - 1] : 0.0;
        const double m2 = row[c] - lo2;
        const double f2 = m2 > 0.0 ? (u2 - lo2) / m2 : 0.5;
        const double q2 = dist.q2.node(c) + (f2 - 0.5) * dist.q2.spacing();

        batch.pairs.emplace_back(q1, q2);
    }
    return batch;
}

enum class Regime { joint, q_only, p_only, sequential };

inline std::string regime_name(Regime r) {
    switch (r) {
        case Regime::joint: return "joint";
        case Regime::q_only: return "q-only";
        case Regime::p_only: return "p-only";
        case Regime::sequential: return "sequential";
    }
    throw std::invalid_argument("regime_name: unknown regime");
}

// One recovered channel. `variance_ok` is false when the raw reading variance
// fell below the noise floor being subtracted; the raw difference is kept.
struct ChannelEstimateReport {
    double mean = 0.0;
    double mean_se = 0.0;
    double variance = 0.0;
    double variance_se = 0.0;
    double noise_subtracted = 0.0;
    bool variance_ok = true;
};

struct EstimateReport {
    Regime regime = Regime::joint;
    std::size_t count = 0;
    bool variance_defined = true;  // false for batches of fewer than two pairs
    std::optional<ChannelEstimateReport> q;
    std::optional<ChannelEstimateReport> p;
};

namespace detail {

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double se_mean = 0.0;
    double var = 0.0;  // unbiased
    double se_var = 0.0;
    bool var_defined = false;
};

inline SampleStats column_stats(const std::vector<std::pair<double, double>>& pairs, bool second) {
    SampleStats s;
    s.n = pairs.size();
    if (s.n == 0) throw std::invalid_argument("estimate: empty batch");
    double sum = 0.0;
    for (const auto& pr : pairs) sum += second ? pr.second : pr.first;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n < 2) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        s.se_mean = s.var = s.se_var = nan;
        return s;
    }
    double m2 = 0.0, m4 = 0.0;
    for (const auto& pr : pairs) {
        const double d = (second ? pr.second : pr.first) - s.mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    const double n = static_cast<double>(s.n);
    s.var = m2 / (n - 1.0);
    m4 /= n;
    // Delta-method variance of the unbiased sample variance.
    const double vv = (m4 - s.var * s.var * (n - 3.0) / (n - 1.0)) / n;
    s.se_var = std::sqrt(std::max(vv, 0.0));
    s.se_mean = std::sqrt(s.var / n);
    s.var_defined = true;
    return s;
}

// Readings follow R = g x + noise with gain g and independent apparatus noise
// of known variance; undo both.
inline ChannelEstimateReport invert_channel(const SampleStats& s, double gain, double noise_var) {
    ChannelEstimateReport r;
    r.mean = s.mean / gain;
    r.mean_se = s.se_mean / std::abs(gain);
    r.noise_subtracted = noise_var;
    const double centered = s.var - noise_var;
    r.variance = centered / (gain * gain);
    r.variance_se = s.se_var / (gain * gain);
    r.variance_ok = !(centered < 0.0);
    return r;
}

}  // namespace detail

// Recover prepared moments from a single-interaction batch. The regime must
// match the couplings: q-only requires K2 = 0, p-only requires K1 = 0, joint
// requires both records active.
inline EstimateReport estimate(const SampleBatch& batch, const AKParams& p, Regime regime) {
    p.validate();
    if (regime == Regime::sequential)
        throw std::invalid_argument("estimate: sequential data needs estimate_sequential with both stage parameter sets");
    const double gain_q = p.t * p.k1, gain_p = p.t * p.k2;
    if (regime == Regime::q_only && p.k2 != 0.0)
        throw std::invalid_argument("estimate: the q-only regime expects K2 = 0");
    if (regime == Regime::p_only && p.k1 != 0.0)
        throw std::invalid_argument("estimate: the p-only regime expects K1 = 0");
    const bool want_q = regime != Regime::p_only;
    const bool want_p = regime != Regime::q_only;
    if (want_q && gain_q == 0.0)
        throw std::invalid_argument("estimate: the first record carries no signal, t K1 = 0");
    if (want_p && gain_p == 0.0)
        throw std::invalid_argument("estimate: the second record carries no signal, t K2 = 0");

    const auto [noise_q, noise_p] = inversion_noise_terms(p);
    EstimateReport rep;
    rep.regime = regime;
    rep.count = batch.pairs.size();
    rep.variance_defined = batch.pairs.size() >= 2;
    if (want_q) rep.q = detail::invert_channel(detail::column_stats(batch.pairs, false), gain_q, noise_q);
    if (want_p) rep.p = detail::invert_channel(detail::column_stats(batch.pairs, true), gain_p, noise_p);
    return rep;
}

namespace detail {

inline void require_sequential_stages(const AKParams& stage1, const AKParams& stage2) {
    stage1.validate();
    stage2.validate();
    if (stage1.k2 != 0.0 || stage2.k1 != 0.0)
        throw std::invalid_argument("sequential stages must couple one record each: stage 1 K2 = 0, stage 2 K1 = 0");
    if (stage1.hbar != stage2.hbar || stage1.b1 != stage2.b1 || stage1.b2 != stage2.b2)
        throw std::invalid_argument("sequential stages must share the apparatus preparation (b1, b2, hbar)");
}

}  // namespace detail

// Recover prepared moments from a two-stage batch. Gains and noise floors
// come from the composite propagator applied to the apparatus-only variance,
// so the stage-1 disturbance of the stage-2 record is subtracted as noise.
inline EstimateReport estimate_sequential(const SampleBatch& batch, const AKParams& stage1,
                                          const AKParams& stage2) {
    detail::require_sequential_stages(stage1, stage2);
    const SymplecticMatrix s = sequential_propagator(stage1, stage2);
    const double gain_q = s.m(0, 2), gain_p = s.m(1, 4);
    if (gain_q == 0.0 && gain_p == 0.0)
        throw std::invalid_argument("estimate_sequential: neither record carries signal");

    Matrix v_app = Matrix::Zero(6, 6);
    v_app(2, 2) = stage1.b1 / 4.0;
    v_app(3, 3) = stage1.hbar * stage1.hbar / stage1.b1;
    v_app(4, 4) = stage1.b2 / 4.0;
    v_app(5, 5) = stage1.hbar * stage1.hbar / stage1.b2;
    const Matrix noise = s.m.transpose() * v_app * s.m;

    EstimateReport rep;
    rep.regime = Regime::sequential;
    rep.count = batch.pairs.size();
    rep.variance_defined = batch.pairs.size() >= 2;
    if (gain_q != 0.0)
        rep.q = detail::invert_channel(detail::column_stats(batch.pairs, false), gain_q, noise(2, 2));
    if (gain_p != 0.0)
        rep.p = detail::invert_channel(detail::column_stats(batch.pairs, true), gain_p, noise(4, 4));
    return rep;
}

namespace detail {

// Zero-pad a packet onto a wider axis with the same spacing and node offsets.
inline SystemWavefunction embed(const SystemWavefunction& psi, double lo, double hi) {
    const double d = psi.axis.spacing();
    int below = 0;
    if (lo < psi.axis.min) below = static_cast<int>(std::ceil((psi.axis.min - lo) / d));
    int count = psi.axis.count;
    const double new_min = psi.axis.min - below * d;
    while (count < psi.axis.count + below || new_min + count * d < hi) count *= 2;

    std::vector<cdouble> values(count, cdouble(0.0, 0.0));
    for (int j = 0; j < psi.axis.count; ++j) values[below + j] = psi.values[j];
    return SystemWavefunction(Axis(new_min, new_min + count * d, count), std::move(values),
                              psi.hbar);
}

// Axis covers from the symplectic forward model over a list of frames
// (mean +- 8 sigma per frame, unioned).
inline double frame_cover_lo(const std::vector<Matrix>& frames, const Vector& xi0, const Matrix& v0,
                             int idx) {
    double lo = std::numeric_limits<double>::infinity();
    for (const Matrix& s : frames) {
        const double mean = (s.transpose() * xi0)(idx);
        const double sd = std::sqrt((s.transpose() * v0 * s)(idx, idx));
        lo = std::min(lo, mean - 8.0 * sd);
    }
    return lo;
}

inline double frame_cover_hi(const std::vector<Matrix>& frames, const Vector& xi0, const Matrix& v0,
                             int idx) {
    double hi = -std::numeric_limits<double>::infinity();
    for (const Matrix& s : frames) {
        const double mean = (s.transpose() * xi0)(idx);
        const double sd = std::sqrt((s.transpose() * v0 * s)(idx, idx));
        hi = std::max(hi, mean + 8.0 * sd);
    }
    return hi;
}

struct GridPlan {
    SystemWavefunction psi;
    GridAxes axes;
};

inline GridPlan plan_grid(const SystemWavefunction& psi, const AKParams& widths,
                          const std::vector<Matrix>& frames, int n1, int n2) {
    const SystemMoments m = psi.moments();
    Vector xi0 = Vector::Zero(6);
    xi0(0) = m.q0;
    xi0(1) = m.p0;
    const Matrix v0 = product_variance(m, widths).v;

    SystemWavefunction wide =
        embed(psi, frame_cover_lo(frames, xi0, v0, 0), frame_cover_hi(frames, xi0, v0, 0));
    GridAxes axes{wide.axis,
                  Axis(frame_cover_lo(frames, xi0, v0, 2), frame_cover_hi(frames, xi0, v0, 2), n1),
                  Axis(frame_cover_lo(frames, xi0, v0, 4), frame_cover_hi(frames, xi0, v0, 4), n2)};
    return GridPlan{std::move(wide), axes};
}

}  // namespace detail

struct SimulationRun {
    SampleBatch batch;
    EstimateReport report;
    JointDistribution distribution;
};

// Full single-interaction pipeline: grid propagation of the product state,
// Born-rule record distribution, sampling, and moment recovery. The regime
// follows the couplings.
inline SimulationRun run_joint(const SystemWavefunction& psi, const AKParams& p, int n1, int n2,
                               std::size_t count, std::uint64_t seed, std::uint64_t stream = 0) {
    p.validate();
    const Regime regime = p.k2 == 0.0   ? Regime::q_only
                          : p.k1 == 0.0 ? Regime::p_only
                                        : Regime::joint;
    const std::vector<Matrix> frames = {Matrix::Identity(6, 6), ak_propagator(p).m};
    detail::GridPlan plan = detail::plan_grid(psi, p, frames, n1, n2);
    const GridWavefunction moved = propagate(product_initial(plan.psi, p, plan.axes), p);
    JointDistribution dist = joint_distribution(moved);
    SampleBatch batch = sample(dist, count, seed, stream, "single-stage grid run");
    EstimateReport rep = estimate(batch, p, regime);
    return SimulationRun{std::move(batch), std::move(rep), std::move(dist)};
}

// Two-stage pipeline: propagate through stage 1 then stage 2 on one grid
// sized to hold the initial, intermediate, and final marginals, then sample
// and recover moments with the composite-model noise accounting.
inline SimulationRun run_sequential(const SystemWavefunction& psi, const AKParams& stage1,
                                    const AKParams& stage2, int n1, int n2, std::size_t count,
                                    std::uint64_t seed, std::uint64_t stream = 0) {
    detail::require_sequential_stages(stage1, stage2);
    const Matrix s1 = ak_propagator(stage1).m;
    const std::vector<Matrix> frames = {Matrix::Identity(6, 6), s1,
                                        compose(ak_propagator(stage1), ak_propagator(stage2)).m};
    detail::GridPlan plan = detail::plan_grid(psi, stage1, frames, n1, n2);
    const GridWavefunction after1 = propagate(product_initial(plan.psi, stage1, plan.axes), stage1);
    const GridWavefunction after2 = propagate(after1, stage2);
    JointDistribution dist = joint_distribution(after2);
    SampleBatch batch = sample(dist, count, seed, stream, "sequential grid run");
    EstimateReport rep = estimate_sequential(batch, stage1, stage2);
    return SimulationRun{std::move(batch), std::move(rep), std::move(dist)};
}

}  // namespace sp2n
