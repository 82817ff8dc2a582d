#pragma once

// Sweep configuration, deterministic parallel evaluation, table I/O and the
// built-in figure tables.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "calibration.hpp"
#include "core_model.hpp"
#include "grid.hpp"
#include "homodyne.hpp"
#include "limits.hpp"
#include "synodyne.hpp"

namespace qnoise {

inline constexpr const char* artifact_version = "0.1.0";

inline constexpr const char* normalization_statement =
    "Displacement PSDs are dimensionless, in units of the on-resonance SQL displacement PSD 2 x_zp^2 / Gamma, "
    "so zero-point motion contributes 1 at rho = 0; rho = 2 (omega - omega_m) / Gamma; "
    "p is the probe power in units of the on-resonance SQL power; total_over_sql = total / (1 + rho^2)^(-1/2).";

// ---------------------------------------------------------------------------
// Configuration

enum class Readout
{
    homodyne,
    synodyne,
    variational,
    synodyne_variational,
    stitched,
};

inline const char* to_string(Readout r)
{
    switch (r) {
    case Readout::homodyne: return "homodyne";
    case Readout::synodyne: return "synodyne";
    case Readout::variational: return "variational";
    case Readout::synodyne_variational: return "synodyne-variational";
    case Readout::stitched: return "stitched";
    }
    return "?";
}

struct GridSpec
{
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    Spacing spacing = Spacing::linear;

    bool operator==(const GridSpec&) const = default;
};

struct ClassicalNoiseSpec
{
    double c_aa = 0.0;
    double c_pp = 0.0;

    bool operator==(const ClassicalNoiseSpec&) const = default;
};

struct SweepSpec
{
    GridSpec rho;
    std::vector<double> powers;
    std::vector<double> angles_deg;
    double epsilon = 1.0;
    double n_th = 0.0;
    bool include_thermal = true;
    bool include_zpm = true;
    std::optional<ClassicalNoiseSpec> classical;
    Readout readout = Readout::homodyne;
    double synodyne_beta = 1.0;
    double synodyne_phi_deg = 0.0;
    // Physical scales, used only for cavity filtering and classical noise.
    double omega_m_hz = 1.596e6;
    double gamma_hz = 340.0;
    double kappa_hz = 2.5e6;
    bool cavity_filtering = false;

    bool operator==(const SweepSpec&) const = default;

    MechanicalMode mode() const
    {
        return MechanicalMode(angular_from_hz(omega_m_hz), angular_from_hz(gamma_hz), n_th);
    }
    OpticalCavity cavity() const { return OpticalCavity(angular_from_hz(kappa_hz)); }
    Detection detection() const { return Detection(epsilon); }
};

struct ParseOptions
{
    bool strict = false;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

struct ConfigEntry
{
    std::string value;
    int line = 0;
};

class ConfigReader
{
public:
    explicit ConfigReader(std::map<std::string, ConfigEntry> entries) : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        const auto it = entries_.find(key);
        const std::string where =
            it == entries_.end() ? "key '" + key + "'" : "line " + std::to_string(it->second.line) + ", key '" + key + "'";
        throw ValidationError("config " + where + ": " + what);
    }

    const std::string& raw(const std::string& key) const
    {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            throw ValidationError("config: missing required key '" + key + "'");
        used_.push_back(key);
        return it->second.value;
    }

    double number(const std::string& key) const
    {
        const std::string& v = raw(key);
        double out = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
            fail(key, "'" + v + "' is not a finite number");
        return out;
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::size_t count(const std::string& key) const
    {
        const std::string& v = raw(key);
        unsigned long long out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc() || res.ptr != v.data() + v.size())
            fail(key, "'" + v + "' is not a non-negative integer");
        return static_cast<std::size_t>(out);
    }

    bool boolean_or(const std::string& key, bool fallback) const
    {
        if (!has(key))
            return fallback;
        const std::string& v = raw(key);
        if (v == "true")
            return true;
        if (v == "false")
            return false;
        fail(key, "'" + v + "' is not true or false");
    }

    std::vector<double> list(const std::string& key) const
    {
        std::vector<double> out;
        const std::string& v = raw(key);
        if (trim(v).empty())
            return out;
        std::size_t start = 0;
        while (start <= v.size()) {
            const std::size_t comma = std::min(v.find(',', start), v.size());
            const std::string item = trim(std::string_view(v).substr(start, comma - start));
            double x = 0.0;
            const auto res = std::from_chars(item.data(), item.data() + item.size(), x);
            if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || !std::isfinite(x))
                fail(key, "list item '" + item + "' is not a finite number");
            out.push_back(x);
            start = comma + 1;
        }
        return out;
    }

    std::vector<std::string> unused() const
    {
        std::vector<std::string> out;
        for (const auto& [key, entry] : entries_)
            if (std::find(used_.begin(), used_.end(), key) == used_.end())
                out.push_back(key);
        return out;
    }

    int line_of(const std::string& key) const { return entries_.at(key).line; }

private:
    std::map<std::string, ConfigEntry> entries_;
    mutable std::vector<std::string> used_;
};

inline std::string join_numbers(const std::vector<double>& xs)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i)
            out += ", ";
        out += format_double(xs[i]);
    }
    return out;
}

} // namespace detail

inline void validate(const SweepSpec& s)
{
    const auto bad = [](const std::string& key, const std::string& what) {
        throw ValidationError("config key '" + key + "': " + what);
    };
    if (s.rho.count < 2)
        bad("rho.count", "grid count must be >= 2");
    if (!(std::isfinite(s.rho.min) && std::isfinite(s.rho.max) && s.rho.min < s.rho.max))
        bad("rho.min", "rho.min must be below rho.max");
    if (s.powers.empty())
        bad("powers", "at least one power is required");
    for (double p : s.powers)
        if (!(std::isfinite(p) && p > 0.0))
            bad("powers", "every power must be > 0");
    for (double a : s.angles_deg)
        if (!(std::isfinite(a) && a > 0.0 && a < 180.0))
            bad("angles_deg", "angles must lie strictly between 0 and 180 deg");
    if (s.readout == Readout::homodyne && s.angles_deg.empty())
        bad("angles_deg", "homodyne readout needs at least one angle");
    if (s.readout == Readout::stitched && s.angles_deg.size() < 2)
        bad("angles_deg", "stitched readout needs at least two angles");
    if (!(std::isfinite(s.epsilon) && s.epsilon > 0.0 && s.epsilon <= 1.0))
        bad("epsilon", "must lie in (0, 1]");
    if (!(std::isfinite(s.n_th) && s.n_th >= 0.0))
        bad("n_th", "must be >= 0");
    if (!(s.synodyne_beta > 0.0))
        bad("synodyne.beta", "must be > 0");
    if (!(s.omega_m_hz > 0.0))
        bad("mode.omega_m_hz", "must be > 0");
    if (!(s.gamma_hz > 0.0))
        bad("mode.gamma_hz", "must be > 0");
    if (!(s.kappa_hz > 0.0))
        bad("cavity.kappa_hz", "must be > 0");
    const bool synodyne = s.readout == Readout::synodyne || s.readout == Readout::synodyne_variational;
    if (s.classical) {
        if (!(s.classical->c_aa >= 0.0 && s.classical->c_pp >= 0.0))
            bad("classical.c_aa", "classical noise levels must be >= 0");
        if (synodyne)
            bad("classical.c_aa", "classical noise is modelled for homodyne readouts only");
    }
    if (s.cavity_filtering && synodyne)
        bad("cavity_filtering", "cavity filtering is modelled for homodyne readouts only");
}

inline Readout parse_readout(const std::string& v)
{
    for (Readout r : {Readout::homodyne, Readout::synodyne, Readout::variational, Readout::synodyne_variational,
                      Readout::stitched})
        if (v == to_string(r))
            return r;
    throw ValidationError("unknown readout '" + v +
                          "' (expected homodyne, synodyne, variational, synodyne-variational or stitched)");
}

// Flat "key = value" document; '#' starts a comment. See README for the schema.
inline SweepSpec parse_config(std::string_view text, ParseOptions opts = {}, std::vector<std::string>* warnings = nullptr)
{
    std::map<std::string, detail::ConfigEntry> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        const std::string body = detail::trim(std::string_view(line).substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(number) + ": expected 'key = value'");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty())
            throw ValidationError("config line " + std::to_string(number) + ": empty key");
        if (entries.count(key))
            throw ValidationError("config line " + std::to_string(number) + ": duplicate key '" + key +
                                  "' (first set on line " + std::to_string(entries[key].line) + ")");
        entries[key] = {value, number};
    }

    const detail::ConfigReader r(std::move(entries));
    SweepSpec s;
    s.rho.min = r.number("rho.min");
    s.rho.max = r.number("rho.max");
    s.rho.count = r.count("rho.count");
    if (r.has("rho.spacing")) {
        const std::string& v = r.raw("rho.spacing");
        if (v == "linear")
            s.rho.spacing = Spacing::linear;
        else if (v == "log-symmetric")
            s.rho.spacing = Spacing::log_symmetric;
        else
            r.fail("rho.spacing", "expected linear or log-symmetric, got '" + v + "'");
    }
    s.powers = r.list("powers");
    if (r.has("angles_deg"))
        s.angles_deg = r.list("angles_deg");
    s.epsilon = r.number_or("epsilon", s.epsilon);
    s.n_th = r.number_or("n_th", s.n_th);
    s.include_thermal = r.boolean_or("include_thermal", s.include_thermal);
    s.include_zpm = r.boolean_or("include_zpm", s.include_zpm);
    if (r.has("classical.c_aa") || r.has("classical.c_pp"))
        s.classical = ClassicalNoiseSpec{r.number_or("classical.c_aa", 0.0), r.number_or("classical.c_pp", 0.0)};
    if (r.has("readout")) {
        try {
            s.readout = parse_readout(r.raw("readout"));
        } catch (const ValidationError& e) {
            r.fail("readout", e.what());
        }
    }
    s.synodyne_beta = r.number_or("synodyne.beta", s.synodyne_beta);
    s.synodyne_phi_deg = r.number_or("synodyne.phi_deg", s.synodyne_phi_deg);
    s.omega_m_hz = r.number_or("mode.omega_m_hz", s.omega_m_hz);
    s.gamma_hz = r.number_or("mode.gamma_hz", s.gamma_hz);
    s.kappa_hz = r.number_or("cavity.kappa_hz", s.kappa_hz);
    s.cavity_filtering = r.boolean_or("cavity_filtering", s.cavity_filtering);

    for (const auto& key : r.unused()) {
        const std::string msg = "config line " + std::to_string(r.line_of(key)) + ": unknown key '" + key + "'";
        if (opts.strict)
            throw ValidationError(msg);
        if (warnings)
            warnings->push_back(msg);
    }

    try {
        validate(s);
    } catch (const ValidationError& e) {
        // Re-attach a line number when the offending key came from the document.
        const std::string what = e.what();
        const auto open = what.find('\'');
        const auto close = open == std::string::npos ? open : what.find('\'', open + 1);
        if (close != std::string::npos) {
            const std::string key = what.substr(open + 1, close - open - 1);
            if (r.has(key))
                r.fail(key, what.substr(what.find(": ") + 2));
        }
        throw;
    }
    return s;
}

inline std::string serialize_config(const SweepSpec& s)
{
    std::ostringstream o;
    o << "rho.min = " << format_double(s.rho.min) << '\n';
    o << "rho.max = " << format_double(s.rho.max) << '\n';
    o << "rho.count = " << s.rho.count << '\n';
    o << "rho.spacing = " << to_string(s.rho.spacing) << '\n';
    o << "powers = " << detail::join_numbers(s.powers) << '\n';
    o << "angles_deg = " << detail::join_numbers(s.angles_deg) << '\n';
    o << "epsilon = " << format_double(s.epsilon) << '\n';
    o << "n_th = " << format_double(s.n_th) << '\n';
    o << "include_thermal = " << (s.include_thermal ? "true" : "false") << '\n';
    o << "include_zpm = " << (s.include_zpm ? "true" : "false") << '\n';
    if (s.classical) {
        o << "classical.c_aa = " << format_double(s.classical->c_aa) << '\n';
        o << "classical.c_pp = " << format_double(s.classical->c_pp) << '\n';
    }
    o << "readout = " << to_string(s.readout) << '\n';
    o << "synodyne.beta = " << format_double(s.synodyne_beta) << '\n';
    o << "synodyne.phi_deg = " << format_double(s.synodyne_phi_deg) << '\n';
    o << "mode.omega_m_hz = " << format_double(s.omega_m_hz) << '\n';
    o << "mode.gamma_hz = " << format_double(s.gamma_hz) << '\n';
    o << "cavity.kappa_hz = " << format_double(s.kappa_hz) << '\n';
    o << "cavity_filtering = " << (s.cavity_filtering ? "true" : "false") << '\n';
    return o.str();
}

inline SweepSpec load_config(const std::string& path, ParseOptions opts = {},
                             std::vector<std::string>* warnings = nullptr)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path, "cannot open config for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), opts, warnings);
}

// ---------------------------------------------------------------------------
// Tables

struct TableRow
{
    std::string series;
    double rho = 0.0;
    double phi_used_deg = 0.0;
    double p = 0.0;
    double s_m = 0.0;
    double s_ii = 0.0;
    double s_ff = 0.0;
    double s_corr = 0.0;
    double s_ln = 0.0;
    double total = 0.0;
    double total_over_sql = 0.0;

    bool operator==(const TableRow&) const = default;
};

inline constexpr std::array<const char*, 11> table_columns = {
    "series", "rho", "phi_used_deg", "p", "s_m", "s_ii", "s_ff", "s_corr", "s_ln", "total", "total_over_sql"};

struct TableMetadata
{
    std::string source;           // "sweep" or "figure <id>"
    std::string description;
    nlohmann::json parameters;    // spec echo or figure parameters
    std::string config;           // serialized SweepSpec, empty for figures
};

struct SpectrumTable
{
    TableMetadata metadata;
    std::vector<TableRow> rows;
};

inline TableRow make_row(std::string series, Detuning rho, double phi_deg, double p, const SpectrumComponents& c)
{
    return {std::move(series), rho.value, phi_deg, p,       c.s_m,  c.s_ii,
            c.s_ff,            c.s_corr,  c.s_ln,  c.total, c.total / sql_psd(rho)};
}

// Absolute tolerance for total = sum of components, scaled by the component magnitudes.
inline bool row_is_consistent(const TableRow& r, double rel = 1e-12)
{
    const double sum = r.s_m + r.s_ii + r.s_ff + r.s_corr + r.s_ln;
    const double scale = std::abs(r.s_m) + std::abs(r.s_ii) + std::abs(r.s_ff) + std::abs(r.s_corr) + std::abs(r.s_ln);
    const double expect_ratio = r.total / sql_psd(Detuning{r.rho});
    return std::abs(r.total - sum) <= rel * std::max(scale, std::abs(r.total)) &&
           std::abs(r.total_over_sql - expect_ratio) <= rel * std::abs(expect_ratio);
}

inline nlohmann::json spec_to_json(const SweepSpec& s)
{
    nlohmann::json j;
    j["rho"] = {{"min", s.rho.min}, {"max", s.rho.max}, {"count", s.rho.count}, {"spacing", to_string(s.rho.spacing)}};
    j["powers"] = s.powers;
    j["angles_deg"] = s.angles_deg;
    j["epsilon"] = s.epsilon;
    j["n_th"] = s.n_th;
    j["include_thermal"] = s.include_thermal;
    j["include_zpm"] = s.include_zpm;
    if (s.classical)
        j["classical"] = {{"c_aa", s.classical->c_aa}, {"c_pp", s.classical->c_pp}};
    else
        j["classical"] = nullptr;
    j["readout"] = to_string(s.readout);
    j["synodyne"] = {{"beta", s.synodyne_beta}, {"phi_deg", s.synodyne_phi_deg}};
    j["mode"] = {{"omega_m_hz", s.omega_m_hz}, {"gamma_hz", s.gamma_hz}};
    j["cavity"] = {{"kappa_hz", s.kappa_hz}};
    j["cavity_filtering"] = s.cavity_filtering;
    return j;
}

inline nlohmann::json metadata_json(const TableMetadata& m)
{
    nlohmann::json j;
    j["type"] = "metadata";
    j["artifact_version"] = artifact_version;
    j["normalization"] = normalization_statement;
    j["source"] = m.source;
    j["description"] = m.description;
    j["parameters"] = m.parameters;
    if (!m.config.empty())
        j["config"] = m.config;
    j["columns"] = table_columns;
    return j;
}

// ---------------------------------------------------------------------------
// Sweep evaluation

namespace detail {

inline std::string coordinates(Detuning rho, double p, std::optional<double> phi_deg)
{
    std::string s = "row (rho=" + format_double(rho.value) + ", p=" + format_double(p);
    if (phi_deg)
        s += ", phi=" + format_double(*phi_deg) + " deg";
    return s + ")";
}

// Runs fn(i) for i in [0, n) across `workers` threads. Results must be written
// by index; the first failure in index order is rethrown.
template <class Fn> void parallel_for(std::size_t n, unsigned workers, Fn fn)
{
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    std::vector<std::exception_ptr> errors(n);
    const auto run = [&](unsigned w) {
        for (std::size_t i = w; i < n; i += workers) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(run, w);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

template <class Fn> auto annotate(const std::string& where, Fn fn) -> decltype(fn())
{
    try {
        return fn();
    } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(e.fault(), where + ": " + e.detail());
    }
}

inline double motion_weight(const SweepSpec& s)
{
    return (s.include_thermal ? 2.0 * s.n_th : 0.0) + (s.include_zpm ? 1.0 : 0.0);
}

inline SpectrumComponents homodyne_row(const SweepSpec& s, Detuning rho, NormalizedPower p, Angle phi)
{
    const auto mode = s.mode();
    const auto det = s.detection();
    SpectrumComponents c;
    if (s.cavity_filtering)
        c = displacement_psd_cavity(frequency_of(rho, mode), p, phi, det, mode, s.cavity());
    else
        c = displacement_psd(rho, p, phi, det, mode);
    c.s_m = motion_weight(s) * chi_m_dimensionless_sq(rho);
    if (s.classical) {
        const ClassicalNoise noise(s.classical->c_aa, s.classical->c_pp);
        const auto extra =
            classical_noise_displacement(frequency_of(rho, mode), p, phi, det, mode, s.cavity(), noise);
        c.s_ln = extra.imprecision + extra.driven;
        c.s_corr += extra.squashing;
    }
    return c.finalize();
}

inline SpectrumComponents synodyne_row(const SweepSpec& s, Detuning rho, NormalizedPower p, const SynodyneLO& lo)
{
    SpectrumComponents c = synodyne_psd(rho, p, lo, s.detection(), s.mode());
    c.s_m = motion_weight(s) * chi_m_dimensionless_sq(rho);
    return c.finalize();
}

} // namespace detail

struct RunOptions
{
    unsigned workers = 0; // 0: one per hardware thread
};

inline SpectrumTable run_sweep(const SweepSpec& spec, RunOptions opts = {})
{
    validate(spec);
    const auto grid = make_grid(spec.rho.min, spec.rho.max, spec.rho.count, spec.rho.spacing);
    const std::size_t np = spec.powers.size();
    const bool per_angle = spec.readout == Readout::homodyne || spec.readout == Readout::stitched;
    const std::size_t na = per_angle ? spec.angles_deg.size() : 1;

    SpectrumTable table;
    table.metadata = {"sweep", std::string(to_string(spec.readout)) + " sweep", spec_to_json(spec),
                      serialize_config(spec)};

    std::vector<TableRow> rows(grid.size() * np * na);
    const std::string series = to_string(spec.readout);
    detail::parallel_for(rows.size(), opts.workers, [&](std::size_t idx) {
        const Detuning rho{grid[idx / (np * na)]};
        const NormalizedPower p{spec.powers[(idx / na) % np]};
        const std::size_t ia = idx % na;
        switch (spec.readout) {
        case Readout::homodyne:
        case Readout::stitched: {
            const double deg = spec.angles_deg[ia];
            rows[idx] = detail::annotate(detail::coordinates(rho, p.value, deg), [&] {
                return make_row(series, rho, deg, p.value,
                                detail::homodyne_row(spec, rho, p, Angle::degrees(deg)));
            });
            break;
        }
        case Readout::variational:
            rows[idx] = detail::annotate(detail::coordinates(rho, p.value, std::nullopt), [&] {
                const Angle phi = phi_opt(rho, p, spec.detection());
                auto c = detail::homodyne_row(spec, rho, p, phi);
                return make_row(series, rho, phi.degrees(), p.value, c);
            });
            break;
        case Readout::synodyne: {
            const SynodyneLO lo(spec.synodyne_beta, Angle::degrees(spec.synodyne_phi_deg));
            rows[idx] = detail::annotate(detail::coordinates(rho, p.value, spec.synodyne_phi_deg), [&] {
                return make_row(series, rho, spec.synodyne_phi_deg, p.value, detail::synodyne_row(spec, rho, p, lo));
            });
            break;
        }
        case Readout::synodyne_variational:
            rows[idx] = detail::annotate(detail::coordinates(rho, p.value, std::nullopt), [&] {
                const auto best = beta_opt(rho, p, spec.detection());
                return make_row(series, rho, best.phi().degrees(), p.value,
                                detail::synodyne_row(spec, rho, p, best.lo()));
            });
            break;
        }
    });

    if (spec.readout != Readout::stitched) {
        table.rows = std::move(rows);
        return table;
    }

    // Reduce the per-angle rows to the pointwise-lowest quadrature.
    std::vector<FixedAngleSpectrum> spectra;
    for (std::size_t ip = 0; ip < np; ++ip) {
        spectra.clear();
        for (std::size_t ia = 0; ia < na; ++ia) {
            FixedAngleSpectrum f{Angle::degrees(spec.angles_deg[ia]), spec.powers[ip], spec.epsilon, spec.n_th, grid, {}};
            for (std::size_t ir = 0; ir < grid.size(); ++ir)
                f.totals.push_back(rows[(ir * np + ip) * na + ia].total);
            spectra.push_back(std::move(f));
        }
        const auto stitched = stitch_quadratures(spectra);
        for (std::size_t ir = 0; ir < grid.size(); ++ir) {
            for (std::size_t ia = 0; ia < na; ++ia) {
                const TableRow& r = rows[(ir * np + ip) * na + ia];
                if (spectra[ia].phi.radians() == stitched.chosen_phi[ir].radians()) {
                    table.rows.push_back(r);
                    break;
                }
            }
        }
    }
    // Restore rho-major order.
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const TableRow& a, const TableRow& b) { return a.rho < b.rho; });
    return table;
}

// ---------------------------------------------------------------------------
// Output

enum class TableFormat
{
    csv,
    jsonl,
};

inline TableFormat parse_format(const std::string& v)
{
    if (v == "csv")
        return TableFormat::csv;
    if (v == "jsonl" || v == "json-lines")
        return TableFormat::jsonl;
    throw ValidationError("unknown output format '" + v + "' (expected csv or jsonl)");
}

inline void write_csv(std::ostream& os, const SpectrumTable& t)
{
    for (std::size_t i = 0; i < table_columns.size(); ++i)
        os << (i ? "," : "") << table_columns[i];
    os << '\n';
    for (const auto& r : t.rows) {
        os << r.series;
        for (double v : {r.rho, r.phi_used_deg, r.p, r.s_m, r.s_ii, r.s_ff, r.s_corr, r.s_ln, r.total, r.total_over_sql})
            os << ',' << format_double(v);
        os << '\n';
    }
}

inline void write_jsonl(std::ostream& os, const SpectrumTable& t)
{
    os << metadata_json(t.metadata).dump() << '\n';
    for (const auto& r : t.rows) {
        // Numbers are written by hand so that every value keeps 17 significant digits.
        os << "{\"type\":\"row\",\"series\":" << nlohmann::json(r.series).dump();
        const std::array<double, 10> values{r.rho,  r.phi_used_deg, r.p,    r.s_m,   r.s_ii,
                                            r.s_ff, r.s_corr,       r.s_ln, r.total, r.total_over_sql};
        for (std::size_t i = 0; i < values.size(); ++i)
            os << ",\"" << table_columns[i + 1] << "\":" << format_double(values[i]);
        os << "}\n";
    }
}

inline void emit_table(const SpectrumTable& t, TableFormat format, std::ostream& os)
{
    if (format == TableFormat::csv)
        write_csv(os, t);
    else
        write_jsonl(os, t);
}

inline std::string metadata_sidecar_path(const std::string& path) { return path + ".meta.json"; }

// Writes the table to `path`. CSV output gets its metadata in a sidecar file.
inline void emit_table(const SpectrumTable& t, TableFormat format, const std::string& path)
{
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError(path, "cannot open for writing");
        emit_table(t, format, out);
        out.flush();
        if (!out)
            throw IoError(path, "write failed");
    }
    if (format == TableFormat::csv) {
        const std::string meta = metadata_sidecar_path(path);
        std::ofstream out(meta, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError(meta, "cannot open for writing");
        out << metadata_json(t.metadata).dump(2) << '\n';
        out.flush();
        if (!out)
            throw IoError(meta, "write failed");
    }
}

inline std::vector<TableRow> read_table_csv(std::istream& is, const std::string& source = "<stream>")
{
    std::string line;
    if (!std::getline(is, line))
        throw IoError(source, "empty table file");
    std::string expected;
    for (std::size_t i = 0; i < table_columns.size(); ++i)
        expected += std::string(i ? "," : "") + table_columns[i];
    if (detail::trim(line) != expected)
        throw IoError(source, "unexpected table header '" + line + "'");

    std::vector<TableRow> rows;
    int number = 1;
    while (std::getline(is, line)) {
        ++number;
        if (detail::trim(line).empty())
            continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(detail::trim(std::string_view(line).substr(start, comma - start)));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (cells.size() != table_columns.size())
            throw IoError(source, "line " + std::to_string(number) + ": expected " +
                                      std::to_string(table_columns.size()) + " cells");
        std::array<double, 10> v{};
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string& c = cells[i + 1];
            const auto res = std::from_chars(c.data(), c.data() + c.size(), v[i]);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw IoError(source, "line " + std::to_string(number) + ": bad number '" + c + "'");
        }
        rows.push_back({cells[0], v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]});
    }
    return rows;
}

inline std::vector<TableRow> read_table_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path, "cannot open table for reading");
    return read_table_csv(in, path);
}

// ---------------------------------------------------------------------------
// Limit rows. Each carries the decomposition of its optimum; total is the
// closed-form limit value.

// SQL: phi = 90 deg, p = sqrt(1 + rho^2), eps = 1; s_m holds the zero-point
// motion when requested.
inline TableRow sql_row(std::string series, Detuning rho, bool include_zero_point)
{
    const auto mode = MechanicalMode(1.0, 1.0, 0.0);
    const NormalizedPower p = sql_power(rho);
    SpectrumComponents c = displacement_psd(rho, p, Angle::degrees(90.0), Detection(1.0), mode);
    c.s_m = include_zero_point ? chi_m_dimensionless_sq(rho) : 0.0;
    c.s_corr = 0.0;
    c.total = sql_psd(rho) + c.s_m;
    return make_row(std::move(series), rho, 90.0, p.value, c);
}

// QL: phi_opt at p_opt, thermal and zero-point motion included.
inline TableRow ql_row(std::string series, Detuning rho, const Detection& det, const MechanicalMode& mode)
{
    const auto best = p_opt(rho, det);
    const Angle phi = phi_opt(rho, best.p, det);
    SpectrumComponents c = displacement_psd(rho, best.p, phi, det, mode);
    c.total = ql_psd(rho, det, mode);
    return make_row(std::move(series), rho, phi.degrees(), best.p.value, c);
}

inline TableRow variational_row(std::string series, Detuning rho, NormalizedPower p, const Detection& det,
                                const MechanicalMode& mode)
{
    const Angle phi = phi_opt(rho, p, det);
    SpectrumComponents c = displacement_psd(rho, p, phi, det, mode);
    c.total = psd_at_phi_opt(rho, p, det, mode);
    return make_row(std::move(series), rho, phi.degrees(), p.value, c);
}

inline TableRow synodyne_variational_row(std::string series, Detuning rho, NormalizedPower p, const Detection& det,
                                         const MechanicalMode& mode)
{
    const auto best = beta_opt(rho, p, det);
    SpectrumComponents c = synodyne_psd(rho, p, best.lo(), det, mode);
    c.total = synodyne_variational(rho, p, det, mode);
    return make_row(std::move(series), rho, best.phi().degrees(), p.value, c);
}

// ---------------------------------------------------------------------------
// Figures. The *-model ids contain theory curves only; measured points are not
// reproducible and are not emitted.

inline const std::vector<std::string>& figure_ids()
{
    static const std::vector<std::string> ids{"1a", "1b", "1d", "2a-model", "2b-model", "3a-model", "3b-model", "S2a", "S2b"};
    return ids;
}

namespace detail {

inline std::string angle_label(double deg)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", deg);
    return std::string("phi") + buf;
}

inline std::string rho_label(double rho)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", rho);
    return std::string("rho") + buf;
}

inline TableRow homodyne_figure_row(std::string series, Detuning rho, double p, double deg, const Detection& det,
                                    const MechanicalMode& mode)
{
    return make_row(std::move(series), rho, deg, p,
                    displacement_psd(rho, NormalizedPower{p}, Angle::degrees(deg), det, mode));
}

// Shot-noise imprecision at phi = 90 deg.
inline TableRow shot_noise_row(std::string series, Detuning rho, double p, const Detection& det)
{
    SpectrumComponents c;
    c.s_ii = 1.0 / (2.0 * det.epsilon() * p);
    return make_row(std::move(series), rho, 90.0, p, c.finalize());
}

// Every component of `r` divided by `reference`; total becomes the ratio.
inline TableRow ratio_row(std::string series, const TableRow& r, double reference)
{
    SpectrumComponents c{r.s_m / reference, r.s_ii / reference, r.s_ff / reference, r.s_corr / reference,
                         r.s_ln / reference, r.total / reference};
    return make_row(std::move(series), Detuning{r.rho}, r.phi_used_deg, r.p, c);
}

inline MechanicalMode dimensionless_mode(double n_th) { return MechanicalMode(1.0, 1.0, n_th); }

inline SpectrumTable figure_1a()
{
    const Detection det(1.0);
    const auto mode = dimensionless_mode(0.0);
    const double p = 50.0;
    SpectrumTable t;
    t.metadata.parameters = {{"p", p},           {"epsilon", 1.0},       {"n_th", 0.0},
                             {"angles_deg", {90.0, 25.0}}, {"rho", {{"min", -20.0}, {"max", 20.0}, {"count", 401}}}};
    t.metadata.description = "Displacement PSD versus rho at p = 50: fixed quadratures, variational readout, "
                             "SQL (with zero-point motion) and QL";
    for (double r : make_grid(-20.0, 20.0, 401)) {
        const Detuning rho{r};
        t.rows.push_back(homodyne_figure_row("phi90", rho, p, 90.0, det, mode));
        t.rows.push_back(homodyne_figure_row("phi25", rho, p, 25.0, det, mode));
        t.rows.push_back(variational_row("variational", rho, NormalizedPower{p}, det, mode));
        t.rows.push_back(sql_row("sql", rho, true));
        t.rows.push_back(ql_row("ql", rho, det, mode));
    }
    return t;
}

inline SpectrumTable figure_1b()
{
    const Detection det(1.0);
    const auto mode = dimensionless_mode(0.0);
    const Detuning rho{5.0};
    const auto powers = make_log_grid(0.1, 1e4, 101);
    SpectrumTable t;
    t.metadata.parameters = {{"rho", 5.0},
                             {"epsilon", 1.0},
                             {"n_th", 0.0},
                             {"angles_deg", {90.0, 25.0}},
                             {"p", {{"min", 0.1}, {"max", 1e4}, {"count", 101}, {"spacing", "log10"}}}};
    t.metadata.description = "Displacement PSD versus p at rho = 5. The sql and ql series are single rows at "
                             "their optimal power (horizontal limit lines)";
    for (double p : powers) {
        t.rows.push_back(homodyne_figure_row("phi90", rho, p, 90.0, det, mode));
        t.rows.push_back(homodyne_figure_row("phi25", rho, p, 25.0, det, mode));
        t.rows.push_back(variational_row("variational", rho, NormalizedPower{p}, det, mode));
    }
    t.rows.push_back(sql_row("sql", rho, true));
    t.rows.push_back(ql_row("ql", rho, det, mode));
    return t;
}

inline SpectrumTable figure_1d()
{
    const Detection det(1.0);
    const auto mode = dimensionless_mode(0.0);
    const Detuning rho{5.0};
    const NormalizedPower p{6.0};
    const double chi_sq = chi_m_dimensionless_sq(rho);
    SpectrumTable t;
    t.metadata.parameters = {{"rho", 5.0}, {"p", 6.0}, {"epsilon", 1.0}, {"n_th", 0.0},
                             {"phi_deg", {{"min", 0.0}, {"max", 180.0}, {"count", 181}}}};
    t.metadata.description =
        "Light PSD in shot-noise units versus quadrature at rho = 5, p = 6 (series light; components are the "
        "shot noise and the motion, backaction and correlation terms scaled by 2 eps p sin^2 phi). Series "
        "squeezing_opt and phi_opt mark the strongest-squeezing and best-displacement quadratures";
    for (double deg : make_grid(0.0, 180.0, 181)) {
        const Angle phi = Angle::degrees(deg);
        const double s = std::sin(phi.radians());
        const double scale = 2.0 * det.epsilon() * p.value;
        SpectrumComponents c;
        c.s_ii = 1.0;
        c.s_m = scale * s * s * 2.0 * (mode.n_th() + 0.5) * chi_sq;
        c.s_ff = scale * s * s * 0.5 * p.value * chi_sq;
        c.s_corr = -scale * s * std::cos(phi.radians()) * rho.value * chi_sq;
        c.total = light_psd(rho, phi, p, det, mode);
        t.rows.push_back(make_row("light", rho, deg, p.value, c));
    }
    const auto sq = squeezing_optimum(rho, p, det, mode);
    SpectrumComponents c;
    c.s_ii = sq.light_psd;
    t.rows.push_back(make_row("squeezing_opt", rho, sq.phi.degrees(), p.value, c.finalize()));
    const Angle best = phi_opt(rho, p, det);
    t.rows.push_back(make_row("phi_opt", rho, best.degrees(), p.value, displacement_psd(rho, p, best, det, mode)));
    return t;
}

inline constexpr double experiment_epsilon = 0.35;
inline constexpr double experiment_n_th = 1.29;

inline SpectrumTable figure_2a()
{
    const Detection det(experiment_epsilon);
    const auto mode = dimensionless_mode(experiment_n_th);
    const auto powers = make_log_grid(0.5, 500.0, 61);
    SpectrumTable t;
    t.metadata.parameters = {{"epsilon", experiment_epsilon},
                             {"n_th", experiment_n_th},
                             {"phi_deg", 90.0},
                             {"rho", {0.0, 2.5, 5.0, 10.0}},
                             {"p", {{"min", 0.5}, {"max", 500.0}, {"count", 61}, {"spacing", "log10"}}}};
    t.metadata.description = "Model displacement PSD versus p at phi = 90 deg for rho = 0, 2.5, 5, 10, with the "
                             "shot-noise level at eps = 0.35 and eps = 1. Model curves only; no measured points";
    for (double r : {0.0, 2.5, 5.0, 10.0})
        for (double p : powers)
            t.rows.push_back(homodyne_figure_row(rho_label(r) + "_phi90", Detuning{r}, p, 90.0, det, mode));
    for (double p : powers) {
        t.rows.push_back(shot_noise_row("sn_eps0.35", Detuning{0.0}, p, det));
        t.rows.push_back(shot_noise_row("sn_eps1", Detuning{0.0}, p, Detection(1.0)));
    }
    return t;
}

inline SpectrumTable figure_2b()
{
    const Detection det(experiment_epsilon);
    const auto mode = dimensionless_mode(experiment_n_th);
    const auto powers = make_log_grid(0.5, 500.0, 61);
    SpectrumTable t;
    t.metadata.parameters = {{"epsilon", experiment_epsilon},
                             {"n_th", experiment_n_th},
                             {"angles_deg", {90.0, 45.0}},
                             {"rho", {5.0, -5.0}},
                             {"p", {{"min", 0.5}, {"max", 500.0}, {"count", 61}, {"spacing", "log10"}}},
                             {"inset", {{"p", 14.0}, {"rho", {{"min", -10.0}, {"max", 10.0}, {"count", 201}}}}}};
    t.metadata.description = "Model displacement PSD versus p at rho = +-5 for phi = 90 and 45 deg, the QL at "
                             "rho = 5 (single row), shot noise at 90 deg, and the rho inset at p = 14. Model "
                             "curves only; no measured points";
    for (double r : {5.0, -5.0})
        for (double deg : {90.0, 45.0})
            for (double p : powers)
                t.rows.push_back(homodyne_figure_row(rho_label(r) + "_" + angle_label(deg), Detuning{r}, p, deg, det, mode));
    for (double p : powers) {
        t.rows.push_back(shot_noise_row("sn_eps0.35", Detuning{5.0}, p, det));
        t.rows.push_back(shot_noise_row("sn_eps1", Detuning{5.0}, p, Detection(1.0)));
    }
    t.rows.push_back(ql_row("ql_rho5", Detuning{5.0}, det, mode));
    for (double r : make_grid(-10.0, 10.0, 201))
        for (double deg : {90.0, 45.0})
            t.rows.push_back(homodyne_figure_row("inset_" + angle_label(deg), Detuning{r}, 14.0, deg, det, mode));
    return t;
}

inline SpectrumTable figure_3a()
{
    const Detection det(experiment_epsilon);
    const auto mode = dimensionless_mode(experiment_n_th);
    const auto powers = make_log_grid(0.5, 500.0, 61);
    SpectrumTable t;
    t.metadata.parameters = {{"epsilon", experiment_epsilon},
                             {"n_th", experiment_n_th},
                             {"angles_deg", {45.0, 60.0, 75.0}},
                             {"reference_deg", 90.0},
                             {"rho", {5.0, -5.0}},
                             {"p", {{"min", 0.5}, {"max", 500.0}, {"count", 61}, {"spacing", "log10"}}}};
    t.metadata.description = "Ratio of the PSD at phi = 45, 60, 75 deg to the PSD at 90 deg versus p, at rho = "
                             "+-5. Series ratio_*: every component divided by the 90 deg total, so total is the "
                             "ratio. The underlying fixed-angle rows are included. Model curves only";
    for (double r : {5.0, -5.0}) {
        const Detuning rho{r};
        for (double p : powers) {
            const TableRow ref = homodyne_figure_row(rho_label(r) + "_phi90", rho, p, 90.0, det, mode);
            t.rows.push_back(ref);
            for (double deg : {45.0, 60.0, 75.0}) {
                const TableRow row = homodyne_figure_row(rho_label(r) + "_" + angle_label(deg), rho, p, deg, det, mode);
                t.rows.push_back(row);
                t.rows.push_back(ratio_row("ratio_" + rho_label(r) + "_" + angle_label(deg), row, ref.total));
            }
        }
    }
    return t;
}

inline SpectrumTable figure_3b()
{
    const Detection det(experiment_epsilon);
    const auto mode = dimensionless_mode(experiment_n_th);
    const std::vector<double> angles{45.0, 60.0, 75.0, 90.0};
    const auto grid = make_grid(-15.0, 15.0, 301);
    SpectrumTable t;
    t.metadata.parameters = {{"epsilon", experiment_epsilon},
                             {"n_th", experiment_n_th},
                             {"angles_deg", angles},
                             {"p", 14.0},
                             {"inset_p", 28.0},
                             {"rho", {{"min", -15.0}, {"max", 15.0}, {"count", 301}}}};
    t.metadata.description = "Stitched quadrature envelope at p = 14 (series stitched, with the fixed-angle "
                             "curves), and the inset at p = 28 where total_over_sql gives the SQL-normalized "
                             "value. Model curves only; no measured points";

    std::vector<FixedAngleSpectrum> spectra;
    for (double deg : angles)
        spectra.push_back(measure_fixed_angle(grid, NormalizedPower{14.0}, Angle::degrees(deg), det, mode));
    const auto stitched = stitch_quadratures(spectra);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Detuning rho{grid[i]};
        for (double deg : angles)
            t.rows.push_back(homodyne_figure_row(angle_label(deg), rho, 14.0, deg, det, mode));
        const double chosen = stitched.chosen_phi[i].degrees();
        t.rows.push_back(make_row("stitched", rho, chosen, 14.0,
                                  displacement_psd(rho, NormalizedPower{14.0}, stitched.chosen_phi[i], det, mode)));
    }
    for (double r : grid)
        for (double deg : angles)
            t.rows.push_back(homodyne_figure_row("inset_" + angle_label(deg), Detuning{r}, 28.0, deg, det, mode));
    return t;
}

inline SpectrumTable figure_s2(bool variational)
{
    const Detection det(1.0);
    const auto mode = dimensionless_mode(0.0);
    const NormalizedPower p{100.0};
    const double beta = 1.02;
    SpectrumTable t;
    t.metadata.parameters = {{"p", 100.0}, {"epsilon", 1.0}, {"n_th", 0.0},
                             {"rho", {{"min", -20.0}, {"max", 20.0}, {"count", 401}}}};
    if (variational) {
        t.metadata.description = "Homodyne and synodyne variational readout at p = 100 with SQL and QL. For "
                                 "synodyne rows rho is the demodulated detuning 2 omega_bb / Gamma";
    } else {
        t.metadata.parameters["angles_deg"] = {90.0, 5.8};
        t.metadata.parameters["synodyne"] = {{"beta", beta}, {"phi_deg", 0.0}};
        t.metadata.description = "Homodyne at phi = 90 and 5.8 deg and synodyne at beta = 1.02 (phi = 0) at "
                                 "p = 100, with SQL and QL. For synodyne rows rho is the demodulated detuning";
    }
    const SynodyneLO lo(beta, Angle::degrees(0.0));
    for (double r : make_grid(-20.0, 20.0, 401)) {
        const Detuning rho{r};
        if (variational) {
            t.rows.push_back(variational_row("homodyne_variational", rho, p, det, mode));
            t.rows.push_back(synodyne_variational_row("synodyne_variational", rho, p, det, mode));
        } else {
            t.rows.push_back(homodyne_figure_row("phi90", rho, p.value, 90.0, det, mode));
            t.rows.push_back(homodyne_figure_row("phi5.8", rho, p.value, 5.8, det, mode));
            t.rows.push_back(make_row("synodyne_beta1.02", rho, 0.0, p.value, synodyne_psd(rho, p, lo, det, mode)));
        }
        t.rows.push_back(sql_row("sql", rho, true));
        t.rows.push_back(ql_row("ql", rho, det, mode));
    }
    return t;
}

} // namespace detail

inline SpectrumTable reproduce_figure(const std::string& id)
{
    SpectrumTable t;
    if (id == "1a")
        t = detail::figure_1a();
    else if (id == "1b")
        t = detail::figure_1b();
    else if (id == "1d")
        t = detail::figure_1d();
    else if (id == "2a-model")
        t = detail::figure_2a();
    else if (id == "2b-model")
        t = detail::figure_2b();
    else if (id == "3a-model")
        t = detail::figure_3a();
    else if (id == "3b-model")
        t = detail::figure_3b();
    else if (id == "S2a")
        t = detail::figure_s2(false);
    else if (id == "S2b")
        t = detail::figure_s2(true);
    else {
        std::string known;
        for (const auto& k : figure_ids())
            known += (known.empty() ? "" : ", ") + k;
        throw ValidationError("unknown figure id '" + id + "' (supported: " + known + ")");
    }
    t.metadata.source = "figure " + id;
    return t;
}

// SQL and QL curves over the spec's grid (series sql, sql_with_zpm, ql).
inline SpectrumTable limit_table(const SweepSpec& spec)
{
    validate(spec);
    const auto grid = make_grid(spec.rho.min, spec.rho.max, spec.rho.count, spec.rho.spacing);
    const auto mode = MechanicalMode(1.0, 1.0, spec.include_thermal ? spec.n_th : 0.0);
    const auto det = spec.detection();
    SpectrumTable t;
    t.metadata = {"limits", "SQL added noise, SQL with zero-point motion, and the efficiency-limited QL",
                  spec_to_json(spec), serialize_config(spec)};
    for (double r : grid) {
        const Detuning rho{r};
        t.rows.push_back(sql_row("sql", rho, false));
        t.rows.push_back(sql_row("sql_with_zpm", rho, true));
        t.rows.push_back(ql_row("ql", rho, det, mode));
    }
    return t;
}

} // namespace qnoise
