// Command-line front end: drives the propagator, normal-form, distribution,
// and sampling layers from a JSON config file and writes machine-readable
// artifacts. Outputs are deterministic for a fixed config and seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <sp2n/serialize.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sp2n;

namespace {

// ---- config plumbing ----

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config \"" + path + "\"");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("config \"" + path + "\": " + e.what());
    }
}

// --set a.b.c=value; the value is parsed as JSON when possible, else kept
// as a string.
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw config_error("--set expects key=value, got \"" + kv + "\"");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);

    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (part.empty()) throw config_error("--set: empty key segment in \"" + path + "\"");
        if (dot == std::string::npos) {
            json value;
            try {
                value = json::parse(raw);
            } catch (const json::parse_error&) {
                value = raw;
            }
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null())
            throw config_error("--set: \"" + part + "\" is not an object");
        start = dot + 1;
    }
}

// Re-emit a parsed config with the standard float formatting so every
// artifact embeds the exact inputs it was produced from.
void write_json_value(JsonWriter& w, const json& j) {
    switch (j.type()) {
        case json::value_t::object:
            w.begin_object();
            for (const auto& [key, val] : j.items()) {
                w.key(key);
                write_json_value(w, val);
            }
            w.end_object();
            break;
        case json::value_t::array:
            w.begin_array();
            for (const auto& val : j) write_json_value(w, val);
            w.end_array();
            break;
        case json::value_t::string:
            w.value(j.get<std::string>());
            break;
        case json::value_t::boolean:
            w.value(j.get<bool>());
            break;
        case json::value_t::number_integer:
            w.value_integer(j.get<long long>());
            break;
        case json::value_t::number_unsigned:
            w.value_unsigned(j.get<unsigned long long>());
            break;
        case json::value_t::number_float:
            w.value(j.get<double>());
            break;
        default:
            w.null();
            break;
    }
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw config_error("cannot write \"" + path.string() + "\"");
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

long long integer_at(const json& j, const char* key, long long fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer())
        throw config_error(std::string("config: \"") + key + "\" must be an integer");
    return j.at(key).get<long long>();
}

Axis axis_from_json(const json& j, const char* where) {
    detail::expect_keys(j, {"min", "max", "count"}, where);
    const double lo = detail::number_at(j, "min", where);
    const double hi = detail::number_at(j, "max", where);
    const long long count = integer_at(j, "count", -1);
    if (count <= 0) throw config_error(std::string(where) + ": \"count\" must be a positive integer");
    try {
        return Axis(lo, hi, static_cast<int>(count));
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string(where) + ": " + e.what());
    }
}

// Initial state: explicit second moments, a Gaussian packet, or a stored
// wavefunction file. Moments alone serve the variance pipeline; the grid
// pipelines need an actual wavefunction.
struct StateSpec {
    SystemMoments moments;
    std::optional<SystemWavefunction> psi_file;
    bool gaussian = false;
    double hbar = 1.0;
};

StateSpec parse_state(const json& cfg, double hbar) {
    if (!cfg.contains("state")) throw config_error("config: missing \"state\"");
    const json& j = cfg.at("state");
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw config_error("state: needs a \"kind\" string");
    const std::string kind = j.at("kind").get<std::string>();

    StateSpec out;
    out.hbar = hbar;
    if (kind == "gaussian") {
        detail::expect_keys(j, {"kind", "q0", "p0", "var_q"}, "state");
        const double var_q = detail::number_or(j, "var_q", 0.5, "state");
        if (!(var_q > 0.0)) throw config_error("state: \"var_q\" must be positive");
        out.gaussian = true;
        out.moments = SystemMoments{detail::number_or(j, "q0", 0.0, "state"),
                                    detail::number_or(j, "p0", 0.0, "state"), var_q,
                                    hbar * hbar / (4.0 * var_q), 0.0};
    } else if (kind == "moments") {
        json body = j;
        body.erase("kind");
        out.moments = moments_from_json(body);
    } else if (kind == "file") {
        detail::expect_keys(j, {"kind", "path"}, "state");
        if (!j.contains("path") || !j.at("path").is_string())
            throw config_error("state: file kind needs a \"path\" string");
        out.psi_file = read_system_wavefunction(j.at("path").get<std::string>());
        if (out.psi_file->hbar != hbar)
            throw config_error("state: stored hbar disagrees with params.hbar");
        out.moments = out.psi_file->moments();
    } else {
        throw config_error("state: unknown kind \"" + kind + "\"");
    }
    return out;
}

struct GridSpec {
    bool automatic = true;
    std::optional<GridAxes> axes;
    int counts[3] = {128, 128, 128};
};

GridSpec parse_grid(const json& cfg) {
    GridSpec out;
    if (cfg.contains("counts")) {
        const json& c = cfg.at("counts");
        if (!c.is_array() || c.size() != 3)
            throw config_error("config: \"counts\" must be [nq, n1, n2]");
        for (int i = 0; i < 3; ++i) {
            if (!c.at(i).is_number_integer() || c.at(i).get<long long>() <= 0)
                throw config_error("config: \"counts\" entries must be positive integers");
            out.counts[i] = static_cast<int>(c.at(i).get<long long>());
        }
    }
    if (!cfg.contains("grid")) return out;
    const json& g = cfg.at("grid");
    if (g.is_string()) {
        if (g.get<std::string>() != "auto")
            throw config_error("config: \"grid\" must be \"auto\" or an axes object");
        return out;
    }
    detail::expect_keys(g, {"q", "q1", "q2"}, "grid");
    if (!g.contains("q") || !g.contains("q1") || !g.contains("q2"))
        throw config_error("grid: needs all of \"q\", \"q1\", \"q2\"");
    out.automatic = false;
    out.axes = GridAxes{axis_from_json(g.at("q"), "grid.q"), axis_from_json(g.at("q1"), "grid.q1"),
                        axis_from_json(g.at("q2"), "grid.q2")};
    out.counts[0] = out.axes->q.count;
    out.counts[1] = out.axes->q1.count;
    out.counts[2] = out.axes->q2.count;
    return out;
}

void require_top_level_keys(const json& cfg) {
    detail::expect_keys(cfg,
                        {"params", "stage2", "state", "grid", "counts", "seed", "stream", "count",
                         "regime", "tol"},
                        "config");
}

AKParams stage_params(const json& cfg, const char* key) {
    if (!cfg.contains(key)) throw config_error(std::string("config: missing \"") + key + "\"");
    return params_from_json(cfg.at(key));
}

// Wavefunction for the grid pipelines: stored file, or a Gaussian prepared
// on the configured (or auto-sized) system axis.
SystemWavefunction resolve_wavefunction(const StateSpec& state, const GridSpec& grid,
                                        const AKParams& p) {
    if (state.psi_file) {
        if (!grid.automatic && !(grid.axes->q == state.psi_file->axis))
            throw config_error("grid.q must match the axis of the stored state");
        return *state.psi_file;
    }
    if (!state.gaussian)
        throw config_error("state: this command needs a wavefunction, not bare moments");
    const Axis qax = grid.automatic
                         ? auto_axes(state.moments, p, grid.counts[0], grid.counts[1],
                                     grid.counts[2])
                               .q
                         : grid.axes->q;
    return SystemWavefunction::gaussian(qax, state.moments.q0, state.moments.p0,
                                        state.moments.var_q, state.hbar);
}

// ---- subcommands ----

int cmd_evolve(const json& cfg, const fs::path& out_dir) {
    require_top_level_keys(cfg);
    const AKParams p = stage_params(cfg, "params");
    const StateSpec state = parse_state(cfg, p.hbar);
    const SystemMoments m = state.moments;

    const SymplecticMatrix s = ak_propagator(p);
    Vector xi0 = Vector::Zero(6);
    xi0(0) = m.q0;
    xi0(1) = m.p0;
    const Vector xit = evolve_mean(s, xi0);
    const VarianceMatrix v0 = product_variance(m, p);
    const VarianceMatrix vt = evolve_variance(s, v0);
    const auto [var_q1, var_q2] = pointer_spreads(v0, p);
    const double bound = uncertainty_bound(p);
    const double product = std::sqrt(var_q1 * var_q2);
    const PhysicalityResult phys = is_physical(vt);
    const std::vector<double> kappas = symplectic_eigenvalues(vt);

    JsonWriter w;
    w.begin_object();
    w.key("config");
    write_json_value(w, cfg);
    w.key("S");
    write_json(w, s.m);
    w.key("xi0");
    write_json(w, xi0);
    w.key("xi_t");
    write_json(w, xit);
    w.key("V0");
    write_json(w, v0.v);
    w.key("V_t");
    write_json(w, vt.v);
    w.key("pointer_variances");
    w.begin_object();
    w.key("q1");
    w.value(var_q1);
    w.key("q2");
    w.value(var_q2);
    w.key("spread_product");
    w.value(product);
    w.end_object();
    w.key("bound");
    w.begin_object();
    w.key("value");
    w.value(bound);
    w.key("satisfied");
    w.value(product >= bound * (1.0 - 1e-12));
    w.end_object();
    w.key("physicality");
    w.begin_object();
    w.key("physical");
    w.value(phys.physical);
    w.key("margin");
    w.value(phys.margin);
    w.key("kappas");
    w.begin_array();
    for (double k : kappas) w.value(k);
    w.end_array();
    w.end_object();
    w.end_object();
    write_file(out_dir / "evolve.json", w.str());

    std::printf("pointer means      %.6g  %.6g\n", xit(2), xit(4));
    std::printf("pointer variances  %.6g  %.6g\n", var_q1, var_q2);
    std::printf("spread product     %.6g  (bound %.6g)\n", product, bound);
    std::printf("physical           %s  (margin %.6g)\n", phys.physical ? "yes" : "no",
                phys.margin);
    std::printf("wrote %s\n", (out_dir / "evolve.json").string().c_str());
    return 0;
}

int cmd_williamson(const json& cfg, const fs::path& out_dir, double tol) {
    detail::expect_keys(cfg, {"n", "rows", "hbar"}, "matrix");
    const double hbar = detail::number_or(cfg, "hbar", 1.0, "matrix");
    json bare = cfg;
    bare.erase("hbar");
    const Matrix v_in = matrix_from_json(bare);

    const VarianceMatrix v(v_in, hbar);
    const WilliamsonForm f = williamson_decompose(v);
    if (!(f.residual <= tol)) {
        std::ostringstream msg;
        msg << "williamson reconstruction residual " << f.residual << " exceeds " << tol;
        throw numeric_error(msg.str());
    }
    const PhysicalityResult phys = is_physical(v);

    JsonWriter w;
    w.begin_object();
    w.key("config");
    write_json_value(w, cfg);
    w.key("kappas");
    w.begin_array();
    for (double k : f.kappas) w.value(k);
    w.end_array();
    w.key("S0");
    write_json(w, f.s0.m);
    w.key("residual");
    w.value(f.residual);
    w.key("physical");
    w.value(phys.physical);
    w.key("margin");
    w.value(phys.margin);
    w.end_object();
    write_file(out_dir / "williamson.json", w.str());

    std::printf("kappas            ");
    for (double k : f.kappas) std::printf(" %.6g", k);
    std::printf("\nresidual           %.6g\n", f.residual);
    std::printf("physical           %s  (margin %.6g)\n", phys.physical ? "yes" : "no",
                phys.margin);
    std::printf("wrote %s\n", (out_dir / "williamson.json").string().c_str());
    return 0;
}

int cmd_pdist(const json& cfg, const fs::path& out_dir) {
    require_top_level_keys(cfg);
    const AKParams p = stage_params(cfg, "params");
    const StateSpec state = parse_state(cfg, p.hbar);
    const GridSpec grid = parse_grid(cfg);
    const SystemWavefunction psi = resolve_wavefunction(state, grid, p);

    Axis out1(-1.0, 1.0, 8), out2(-1.0, 1.0, 8);
    if (grid.automatic) {
        const GridAxes axes =
            auto_axes(psi.moments(), p, grid.counts[0], grid.counts[1], grid.counts[2]);
        out1 = axes.q1;
        out2 = axes.q2;
    } else {
        out1 = grid.axes->q1;
        out2 = grid.axes->q2;
    }

    const JointDistribution dist = distribution_product_form(psi, p, out1, out2);
    const DistributionMoments dm = dist.moments();

    const SystemMoments m = psi.moments();
    Vector xi0 = Vector::Zero(6);
    xi0(0) = m.q0;
    xi0(1) = m.p0;
    const auto [mean_q1, mean_q2] = pointer_means(xi0, p);
    const auto [var_q1, var_q2] = pointer_spreads(product_variance(m, p), p);

    std::ostringstream csv;
    write_joint_csv(csv, dist);
    write_file(out_dir / "pdist.csv", csv.str());

    JsonWriter w;
    w.begin_object();
    w.key("config");
    write_json_value(w, cfg);
    w.key("quadrature");
    w.begin_object();
    w.key("mean_q1");
    w.value(dm.mean_q1);
    w.key("mean_q2");
    w.value(dm.mean_q2);
    w.key("var_q1");
    w.value(dm.var_q1);
    w.key("var_q2");
    w.value(dm.var_q2);
    w.key("total");
    w.value(dist.total());
    w.end_object();
    w.key("closed_form");
    w.begin_object();
    w.key("mean_q1");
    w.value(mean_q1);
    w.key("mean_q2");
    w.value(mean_q2);
    w.key("var_q1");
    w.value(var_q1);
    w.key("var_q2");
    w.value(var_q2);
    w.end_object();
    w.end_object();
    write_file(out_dir / "pdist.json", w.str());

    std::printf("%-10s %14s %14s %14s\n", "moment", "closed form", "quadrature", "difference");
    const char* names[4] = {"mean_q1", "mean_q2", "var_q1", "var_q2"};
    const double closed[4] = {mean_q1, mean_q2, var_q1, var_q2};
    const double quad[4] = {dm.mean_q1, dm.mean_q2, dm.var_q1, dm.var_q2};
    for (int i = 0; i < 4; ++i)
        std::printf("%-10s %14.6g %14.6g %14.6g\n", names[i], closed[i], quad[i],
                    quad[i] - closed[i]);
    std::printf("wrote %s and pdist.json\n", (out_dir / "pdist.csv").string().c_str());
    return 0;
}

int cmd_sample(const json& cfg, const fs::path& out_dir) {
    require_top_level_keys(cfg);
    const AKParams p = stage_params(cfg, "params");
    const StateSpec state = parse_state(cfg, p.hbar);
    const GridSpec grid = parse_grid(cfg);
    const SystemWavefunction psi = resolve_wavefunction(state, grid, p);

    const auto seed = static_cast<std::uint64_t>(integer_at(cfg, "seed", 0));
    const auto stream = static_cast<std::uint64_t>(integer_at(cfg, "stream", 0));
    const long long count = integer_at(cfg, "count", 10000);
    if (count <= 0) throw config_error("config: \"count\" must be positive");
    std::string regime = "joint";
    if (cfg.contains("regime")) {
        if (!cfg.at("regime").is_string()) throw config_error("config: \"regime\" must be a string");
        regime = cfg.at("regime").get<std::string>();
    }

    SimulationRun run = [&] {
        if (regime == "sequential")
            return run_sequential(psi, p, stage_params(cfg, "stage2"), grid.counts[1],
                                  grid.counts[2], static_cast<std::size_t>(count), seed, stream);
        if (regime != "joint" && regime != "q-only" && regime != "p-only")
            throw config_error("config: unknown regime \"" + regime + "\"");
        return run_joint(psi, p, grid.counts[1], grid.counts[2], static_cast<std::size_t>(count),
                         seed, stream);
    }();
    if (regime_name(run.report.regime) != regime)
        throw config_error("config: regime \"" + regime + "\" does not match the couplings (got " +
                           regime_name(run.report.regime) + ")");

    std::ostringstream csv;
    write_batch_csv(csv, run.batch);
    write_file(out_dir / "batch.csv", csv.str());

    JsonWriter w;
    w.begin_object();
    w.key("config");
    write_json_value(w, cfg);
    w.key("report");
    write_json(w, run.report);
    w.end_object();
    write_file(out_dir / "estimate.json", w.str());

    std::printf("regime             %s\n", regime_name(run.report.regime).c_str());
    std::printf("readings           %lld\n", count);
    if (run.report.q)
        std::printf("q estimate         %.6g (se %.6g), variance %.6g%s\n", run.report.q->mean,
                    run.report.q->mean_se, run.report.q->variance,
                    run.report.q->variance_ok ? "" : " [below noise floor]");
    if (run.report.p)
        std::printf("p estimate         %.6g (se %.6g), variance %.6g%s\n", run.report.p->mean,
                    run.report.p->mean_se, run.report.p->variance,
                    run.report.p->variance_ok ? "" : " [below noise floor]");
    std::printf("wrote %s and batch.csv\n", (out_dir / "estimate.json").string().c_str());
    return 0;
}

// Built-in invariant suite: group axioms, congruence invariance of the
// normal-form spectrum, the distribution-formula smoke set, and sampler
// determinism. Prints one line per block with timing.
int cmd_check() {
    using clock = std::chrono::steady_clock;
    Xoshiro256pp rng(0x5eed);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_double(); };
    int failures = 0;

    auto block = [&](const char* name, auto&& body) {
        const auto start = clock::now();
        bool ok = false;
        std::string note;
        try {
            ok = body();
        } catch (const std::exception& e) {
            note = e.what();
        }
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start).count();
        std::printf("%-26s %s  (%lld ms)%s%s\n", name, ok ? "ok" : "FAIL",
                    static_cast<long long>(ms), note.empty() ? "" : "  ", note.c_str());
        if (!ok) ++failures;
    };

    block("group axioms", [&] {
        for (int i = 0; i < 200; ++i) {
            const AKParams p{uni(-2.0, 2.0), uni(-2.0, 2.0), uni(0.5, 2.0), uni(0.5, 2.0), 1.0,
                             uni(0.0, 2.0)};
            const SymplecticMatrix s = ak_propagator(p);
            const Matrix beta = metric(3);
            if (max_abs(s.m.transpose() * beta * s.m - beta) > 1e-12) return false;
            const SymplecticMatrix inv = symplectic_inverse(s);
            if (max_abs(compose(s, inv).m - Matrix::Identity(6, 6)) > 1e-12) return false;
            const Generator gen = generator(ak_hamiltonian(p.k1, p.k2));
            if (max_abs(gen.j * gen.j * gen.j) != 0.0) return false;
        }
        return true;
    });

    block("congruence invariance", [&] {
        for (int i = 0; i < 50; ++i) {
            Matrix a(6, 6);
            for (int r = 0; r < 6; ++r)
                for (int c = 0; c < 6; ++c) a(r, c) = uni(-0.6, 0.6);
            const SymplecticMatrix s =
                propagator(generator(QuadraticHamiltonian(a)), uni(0.2, 1.0));
            Matrix root(6, 6);
            for (int r = 0; r < 6; ++r)
                for (int c = 0; c < 6; ++c) root(r, c) = uni(-1.0, 1.0);
            const VarianceMatrix v(root * root.transpose() + 1.5 * Matrix::Identity(6, 6));
            const VarianceMatrix moved = evolve_variance(s, v);
            const auto before = symplectic_eigenvalues(v);
            const auto after = symplectic_eigenvalues(moved);
            for (int k = 0; k < 3; ++k)
                if (std::abs(before[k] - after[k]) > 1e-8 * before[k]) return false;
        }
        return true;
    });

    block("formula equivalence", [&] {
        const AKParams p{1.0, 0.8, 1.2, 0.9, 1.0, 1.0};
        const SystemMoments prep{0.3, 0.4, 0.5, 0.5, 0.0};
        const GridAxes axes = auto_axes(prep, p, 64, 64, 64);
        const auto psi = SystemWavefunction::gaussian(axes.q, prep.q0, prep.p0, prep.var_q);
        const JointDistribution grid =
            joint_distribution(propagate(product_initial(psi, p, axes), p));
        const JointDistribution formula = distribution_product_form(psi, p, axes.q1, axes.q2);
        double peak = 0.0, diff = 0.0;
        for (std::size_t i = 0; i < grid.values.size(); ++i) {
            peak = std::max(peak, grid.values[i]);
            diff = std::max(diff, std::abs(grid.values[i] - formula.values[i]));
        }
        if (diff > 1e-3 * peak) return false;

        const double b = 1.3;
        const AKParams ps{1.0, 1.0, b, 1.0 / b, 1.0, 1.0};
        const Axis qax(-9.0, 9.0, 128);
        const auto psis = SystemWavefunction::gaussian(qax, 0.0, 0.0, 0.5);
        const Axis o1(-7.0, 7.0, 64), o2(-6.0, 6.0, 64);
        const JointDistribution reduced = distribution_special_case(psis, b, o1, o2);
        const JointDistribution general = distribution_product_form(psis, ps, o1, o2);
        peak = 0.0;
        diff = 0.0;
        for (std::size_t i = 0; i < reduced.values.size(); ++i) {
            peak = std::max(peak, reduced.values[i]);
            diff = std::max(diff, std::abs(reduced.values[i] - general.values[i]));
        }
        return diff <= 1e-6 * peak;
    });

    block("sampler determinism", [&] {
        const AKParams p{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
        const SystemMoments prep{0.4, -0.2, 0.5, 0.5, 0.0};
        const GridAxes axes = auto_axes(prep, p, 64, 64, 64);
        const auto psi = SystemWavefunction::gaussian(axes.q, prep.q0, prep.p0, prep.var_q);
        const JointDistribution dist =
            joint_distribution(propagate(product_initial(psi, p, axes), p));
        const SampleBatch a = sample(dist, 2000, 42);
        const SampleBatch b = sample(dist, 2000, 42);
        const SampleBatch c = sample(dist, 2000, 42, 1);
        return a.pairs == b.pairs && a.pairs != c.pairs;
    });

    if (failures > 0) {
        std::printf("%d block(s) failed\n", failures);
        return 3;
    }
    std::printf("all checks passed\n");
    return 0;
}

int fail_with(const char* type, const std::string& message, int code) {
    JsonWriter w;
    w.begin_object();
    w.key("error");
    w.begin_object();
    w.key("type");
    w.value(type);
    w.key("message");
    w.value(message);
    w.end_object();
    w.end_object();
    std::cerr << w.str() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Symplectic toolkit for the joint position-momentum measurement model"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::vector<std::string> overrides;
    std::optional<long long> seed_flag;
    std::optional<double> tol_flag;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_flag, "override the config seed");
    app.add_option("--set", overrides, "override a config key, key=value")->expected(1);
    app.add_option("--tol", tol_flag, "tolerance override");

    auto* evolve = app.add_subcommand("evolve", "propagator, moments, spreads, physicality");
    auto* williamson = app.add_subcommand("williamson", "normal form of a variance matrix");
    auto* pdist = app.add_subcommand("pdist", "joint pointer distribution and its moments");
    auto* sample = app.add_subcommand("sample", "simulated readings and moment estimates");
    auto* check = app.add_subcommand("check", "built-in invariant suite");
    for (auto* sub : {evolve, williamson, pdist, sample, check}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail_with("config", e.what(), 2);
    }

    try {
        if (check->parsed()) return cmd_check();

        if (config_path.empty()) throw config_error("--config is required for this command");
        json cfg = load_config(config_path);
        for (const std::string& kv : overrides) apply_override(cfg, kv);
        if (seed_flag) cfg["seed"] = *seed_flag;
        if (tol_flag) cfg["tol"] = *tol_flag;
        double tol = 1e-9;
        if (cfg.is_object() && cfg.contains("tol")) tol = detail::number_at(cfg, "tol", "config");

        const fs::path out(out_dir);
        if (evolve->parsed()) return cmd_evolve(cfg, out);
        if (williamson->parsed()) return cmd_williamson(cfg, out, tol);
        if (pdist->parsed()) return cmd_pdist(cfg, out);
        return cmd_sample(cfg, out);
    } catch (const config_error& e) {
        return fail_with("config", e.what(), 2);
    } catch (const std::invalid_argument& e) {
        return fail_with("config", e.what(), 2);
    } catch (const numeric_error& e) {
        return fail_with("numeric", e.what(), 3);
    } catch (const std::exception& e) {
        return fail_with("numeric", e.what(), 3);
    }
}
