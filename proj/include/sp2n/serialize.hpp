#pragma once

// File formats shared by the library consumers and the command-line tool:
// JSON for matrices, parameters, and reports; CSV for distributions and
// sample batches; a small binary container for wavefunctions. Machine
// output prints floats with 17 significant digits so values round-trip.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <sp2n/arthurs_kelly.hpp>
#include <sp2n/core.hpp>
#include <sp2n/estimation.hpp>
#include <sp2n/wavefunction.hpp>
#include <sp2n/williamson.hpp>

namespace sp2n {

// Bad input shape, unmet schema, missing file: the caller's problem,
// distinct from numeric failures inside an otherwise valid run.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string fmt17(double x) {
    if (!std::isfinite(x)) return "null";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Streaming JSON emitter with a fixed layout so identical data gives
// identical bytes. Keys go out in call order.
class JsonWriter {
public:
    void begin_object() { open('{'); }
    void end_object() { close('}'); }
    void begin_array() { open('['); }
    void end_array() { close(']'); }

    void key(const std::string& k) {
        separate();
        out_ << '"' << k << "\": ";
        pending_key_ = true;
    }

    void value(double x) {
        separate();
        out_ << fmt17(x);
    }
    void value(const std::string& s) {
        separate();
        out_ << '"';
        for (char c : s) {
            if (c == '"' || c == '\\') out_ << '\\';
            out_ << c;
        }
        out_ << '"';
    }
    void value(const char* s) { value(std::string(s)); }
    void value(bool b) {
        separate();
        out_ << (b ? "true" : "false");
    }
    void value_integer(long long n) {
        separate();
        out_ << n;
    }
    void value_unsigned(unsigned long long n) {
        separate();
        out_ << n;
    }
    void null() {
        separate();
        out_ << "null";
    }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
    std::vector<int> items_;
    int depth_ = 0;
    bool pending_key_ = false;

    void separate() {
        if (pending_key_) {
            pending_key_ = false;
            return;
        }
        if (depth_ == 0) return;
        if (items_.back()++ > 0) out_ << ',';
        out_ << '\n' << std::string(static_cast<std::size_t>(2) * depth_, ' ');
    }

    void open(char c) {
        separate();
        out_ << c;
        items_.push_back(0);
        ++depth_;
    }
    void close(char c) {
        const bool had = items_.back() > 0;
        items_.pop_back();
        --depth_;
        if (had) out_ << '\n' << std::string(static_cast<std::size_t>(2) * depth_, ' ');
        out_ << c;
    }
};

inline void write_json(JsonWriter& w, const Matrix& m) {
    w.begin_object();
    w.key("n");
    w.value_integer(m.rows());
    w.key("rows");
    w.begin_array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        w.begin_array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.value(m(i, j));
        w.end_array();
    }
    w.end_array();
    w.end_object();
}

inline void write_json(JsonWriter& w, const Vector& v) {
    w.begin_array();
    for (Eigen::Index i = 0; i < v.size(); ++i) w.value(v(i));
    w.end_array();
}

inline void write_json(JsonWriter& w, const AKParams& p) {
    w.begin_object();
    w.key("K1");
    w.value(p.k1);
    w.key("K2");
    w.value(p.k2);
    w.key("b1");
    w.value(p.b1);
    w.key("b2");
    w.value(p.b2);
    w.key("hbar");
    w.value(p.hbar);
    w.key("t");
    w.value(p.t);
    w.end_object();
}

inline void write_json(JsonWriter& w, const SystemMoments& m) {
    w.begin_object();
    w.key("q0");
    w.value(m.q0);
    w.key("p0");
    w.value(m.p0);
    w.key("var_q");
    w.value(m.var_q);
    w.key("var_p");
    w.value(m.var_p);
    w.key("cov_qp");
    w.value(m.cov_qp);
    w.end_object();
}

inline void write_json(JsonWriter& w, const WilliamsonForm& f) {
    w.begin_object();
    w.key("kappas");
    w.begin_array();
    for (double k : f.kappas) w.value(k);
    w.end_array();
    w.key("S0");
    write_json(w, f.s0.m);
    w.key("residual");
    w.value(f.residual);
    w.end_object();
}

inline void write_json(JsonWriter& w, const ChannelEstimateReport& c) {
    w.begin_object();
    w.key("mean");
    w.value(c.mean);
    w.key("mean_se");
    w.value(c.mean_se);
    w.key("variance");
    w.value(c.variance);
    w.key("variance_se");
    w.value(c.variance_se);
    w.key("noise_subtracted");
    w.value(c.noise_subtracted);
    w.key("variance_ok");
    w.value(c.variance_ok);
    w.end_object();
}

inline void write_json(JsonWriter& w, const EstimateReport& r) {
    w.begin_object();
    w.key("regime");
    w.value(regime_name(r.regime));
    w.key("count");
    w.value_unsigned(r.count);
    w.key("variance_defined");
    w.value(r.variance_defined);
    w.key("q");
    if (r.q)
        write_json(w, *r.q);
    else
        w.null();
    w.key("p");
    if (r.p)
        write_json(w, *r.p);
    else
        w.null();
    w.end_object();
}

// ---- strict JSON readers ----

namespace detail {

inline void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const char* where) {
    if (!j.is_object()) throw config_error(std::string(where) + ": expected a JSON object");
    for (const auto& [key, unused] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw config_error(std::string(where) + ": unknown key \"" + key + "\"");
    }
}

inline double number_at(const nlohmann::json& j, const char* key, const char* where) {
    if (!j.contains(key))
        throw config_error(std::string(where) + ": missing key \"" + key + "\"");
    const auto& v = j.at(key);
    if (!v.is_number()) throw config_error(std::string(where) + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

inline double number_or(const nlohmann::json& j, const char* key, double fallback,
                        const char* where) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number()) throw config_error(std::string(where) + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

}  // namespace detail

inline Matrix matrix_from_json(const nlohmann::json& j) {
    detail::expect_keys(j, {"n", "rows"}, "matrix");
    if (!j.contains("n") || !j.at("n").is_number_integer())
        throw config_error("matrix: \"n\" must be an integer");
    const int n = j.at("n").get<int>();
    if (n <= 0 || n > 4096) throw config_error("matrix: size out of range");
    if (!j.contains("rows") || !j.at("rows").is_array() ||
        j.at("rows").size() != static_cast<std::size_t>(n))
        throw config_error("matrix: \"rows\" must hold n rows");
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& row = j.at("rows").at(i);
        if (!row.is_array() || row.size() != static_cast<std::size_t>(n))
            throw config_error("matrix: each row must hold n numbers");
        for (int k = 0; k < n; ++k) {
            if (!row.at(k).is_number()) throw config_error("matrix: entries must be numbers");
            m(i, k) = row.at(k).get<double>();
        }
    }
    return m;
}

inline AKParams params_from_json(const nlohmann::json& j) {
    detail::expect_keys(j, {"K1", "K2", "b1", "b2", "hbar", "t"}, "params");
    AKParams p{detail::number_at(j, "K1", "params"), detail::number_at(j, "K2", "params"),
               detail::number_or(j, "b1", 1.0, "params"), detail::number_or(j, "b2", 1.0, "params"),
               detail::number_or(j, "hbar", 1.0, "params"), detail::number_at(j, "t", "params")};
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    return p;
}

inline SystemMoments moments_from_json(const nlohmann::json& j) {
    detail::expect_keys(j, {"q0", "p0", "var_q", "var_p", "cov_qp"}, "moments");
    return SystemMoments{detail::number_or(j, "q0", 0.0, "moments"),
                         detail::number_or(j, "p0", 0.0, "moments"),
                         detail::number_at(j, "var_q", "moments"),
                         detail::number_at(j, "var_p", "moments"),
                         detail::number_or(j, "cov_qp", 0.0, "moments")};
}

// ---- CSV ----

inline void write_joint_csv(std::ostream& out, const JointDistribution& d) {
    out << "Q1,Q2,P\n";
    for (int i = 0; i < d.q1.count; ++i)
        for (int k = 0; k < d.q2.count; ++k)
            out << fmt17(d.q1.node(i)) << ',' << fmt17(d.q2.node(k)) << ','
                << fmt17(d.values[static_cast<std::size_t>(i) * d.q2.count + k]) << '\n';
}

inline void write_batch_csv(std::ostream& out, const SampleBatch& b) {
    out << "index,Q1,Q2\n";
    for (std::size_t i = 0; i < b.pairs.size(); ++i)
        out << i << ',' << fmt17(b.pairs[i].first) << ',' << fmt17(b.pairs[i].second) << '\n';
}

// ---- binary wavefunction container ----
//
// Layout: magic "GWF1", u32 byte-order tag 0x01020304, u32 axis count,
// then per axis (min f64, max f64, count u32), then hbar f64, then the
// values as (re, im) f64 pairs in row-major axis order. A JSON sidecar
// with the same metadata goes next to the payload for humans.

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw config_error("wavefunction file: truncated");
}

inline void put_f64(std::ostream& out, double x) { put_bytes(out, &x, 8); }
inline void put_u32(std::ostream& out, std::uint32_t x) { put_bytes(out, &x, 4); }

inline double get_f64(std::istream& in) {
    double x;
    get_bytes(in, &x, 8);
    return x;
}
inline std::uint32_t get_u32(std::istream& in) {
    std::uint32_t x;
    get_bytes(in, &x, 4);
    return x;
}

inline void write_container(const std::string& path, const std::vector<Axis>& axes, double hbar,
                            const std::vector<cdouble>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open \"" + path + "\" for writing");
    put_bytes(out, "GWF1", 4);
    put_u32(out, 0x01020304u);
    put_u32(out, static_cast<std::uint32_t>(axes.size()));
    for (const Axis& a : axes) {
        put_f64(out, a.min);
        put_f64(out, a.max);
        put_u32(out, static_cast<std::uint32_t>(a.count));
    }
    put_f64(out, hbar);
    for (const cdouble& v : values) {
        put_f64(out, v.real());
        put_f64(out, v.imag());
    }
    if (!out) throw config_error("write to \"" + path + "\" failed");

    JsonWriter w;
    w.begin_object();
    w.key("format");
    w.value("GWF1");
    w.key("axes");
    w.begin_array();
    for (const Axis& a : axes) {
        w.begin_object();
        w.key("min");
        w.value(a.min);
        w.key("max");
        w.value(a.max);
        w.key("count");
        w.value_integer(a.count);
        w.end_object();
    }
    w.end_array();
    w.key("hbar");
    w.value(hbar);
    w.key("values");
    w.value_unsigned(values.size());
    w.end_object();
    std::ofstream side(path + ".json");
    side << w.str() << '\n';
}

inline std::pair<std::vector<Axis>, double> read_container(std::istream& in,
                                                           std::vector<cdouble>& values) {
    char magic[4];
    get_bytes(in, magic, 4);
    if (std::memcmp(magic, "GWF1", 4) != 0)
        throw config_error("wavefunction file: bad magic, not a GWF1 container");
    if (get_u32(in) != 0x01020304u)
        throw config_error("wavefunction file: byte order does not match this machine");
    const std::uint32_t naxes = get_u32(in);
    if (naxes != 1 && naxes != 3)
        throw config_error("wavefunction file: unsupported axis count");
    std::vector<Axis> axes;
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < naxes; ++i) {
        const double lo = get_f64(in), hi = get_f64(in);
        const std::uint32_t count = get_u32(in);
        if (count == 0 || count > (1u << 24)) throw config_error("wavefunction file: bad axis count");
        axes.emplace_back(lo, hi, static_cast<int>(count));
        total *= count;
    }
    const double hbar = get_f64(in);
    values.resize(total);
    for (cdouble& v : values) {
        const double re = get_f64(in), im = get_f64(in);
        v = cdouble(re, im);
    }
    return {std::move(axes), hbar};
}

}  // namespace detail

inline void write_wavefunction(const std::string& path, const SystemWavefunction& psi) {
    detail::write_container(path, {psi.axis}, psi.hbar, psi.values);
}

inline void write_wavefunction(const std::string& path, const GridWavefunction& g) {
    detail::write_container(path, {g.axes.q, g.axes.q1, g.axes.q2}, g.hbar, g.values);
}

inline SystemWavefunction read_system_wavefunction(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open \"" + path + "\"");
    std::vector<cdouble> values;
    auto [axes, hbar] = detail::read_container(in, values);
    if (axes.size() != 1)
        throw config_error("wavefunction file: expected a one-axis system state");
    return SystemWavefunction(axes[0], std::move(values), hbar);
}

inline GridWavefunction read_grid_wavefunction(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open \"" + path + "\"");
    std::vector<cdouble> values;
    auto [axes, hbar] = detail::read_container(in, values);
    if (axes.size() != 3) throw config_error("wavefunction file: expected a three-axis field");
    GridWavefunction g(GridAxes{axes[0], axes[1], axes[2]}, hbar);
    g.values = std::move(values);
    return g;
}

}  // namespace sp2n
