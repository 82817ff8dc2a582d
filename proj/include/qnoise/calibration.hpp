#pragma once

// Parameter extraction: sideband-asymmetry thermometry, coupling calibration,
// occupation rescaling, efficiency composition and Lorentzian sideband fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core_model.hpp"

namespace qnoise {

// n_th = (A_r / A_b - 1)^-1 from the red and blue sideband amplitudes.
inline double n_th_from_sidebands(double a_red, double a_blue)
{
    detail::require(std::isfinite(a_red) && std::isfinite(a_blue), "sideband amplitudes must be finite");
    if (!(a_blue > 0.0) || !(a_red > a_blue))
        throw DomainError(DomainFault::unsupported_configuration,
                          "sideband asymmetry requires A_red > A_blue > 0 (thermal state)");
    return 1.0 / (a_red / a_blue - 1.0);
}

namespace detail {

inline void require_positive(double v, const char* name)
{
    require(std::isfinite(v) && v > 0.0, std::string(name) + " must be positive");
}

} // namespace detail

// Blue sideband amplitude produced by coupling g with N_damp intracavity damping
// photons: A_b = g^2 N_damp eps kappa |chi_c(omega_m)| 4 n_th / Gamma.
inline double blue_sideband_amplitude(double g, double gamma, double n_th, const Detection& det,
                                      const OpticalCavity& cav, double omega_m, double n_damp)
{
    detail::require_positive(g, "g");
    detail::require_positive(gamma, "gamma");
    detail::require_positive(n_th, "n_th");
    detail::require_positive(omega_m, "omega_m");
    detail::require_positive(n_damp, "N_damp");
    return g * g * n_damp * det.epsilon() * cav.kappa() * std::abs(chi_c(omega_m, cav)) * 4.0 * n_th / gamma;
}

// Inverse of blue_sideband_amplitude: g in rad/s.
inline double g_from_blue_sideband(double a_blue, double gamma, double n_th, const Detection& det,
                                   const OpticalCavity& cav, double omega_m, double n_damp)
{
    detail::require_positive(a_blue, "A_b");
    detail::require_positive(gamma, "gamma");
    detail::require_positive(n_th, "n_th");
    detail::require_positive(omega_m, "omega_m");
    detail::require_positive(n_damp, "N_damp");
    return std::sqrt(a_blue * gamma /
                     (det.epsilon() * cav.kappa() * std::abs(chi_c(omega_m, cav)) * 4.0 * n_th * n_damp));
}

struct CouplingFit
{
    double g = 0.0;       // sqrt(slope), rad/s
    double g_sigma = 0.0; // propagated from the slope standard error
    double slope = 0.0;
    double intercept = 0.0;
};

// Straight-line fit of g^2 N_damp against N_damp; the slope is g^2.
inline CouplingFit fit_coupling_slope(std::span<const double> n_damp, std::span<const double> g2_n_damp)
{
    detail::require(n_damp.size() == g2_n_damp.size(), "series lengths differ");
    detail::require(n_damp.size() >= 3, "slope fit needs at least three points");
    const double n = static_cast<double>(n_damp.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n_damp.size(); ++i) {
        mx += n_damp[i];
        my += g2_n_damp[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n_damp.size(); ++i) {
        sxx += (n_damp[i] - mx) * (n_damp[i] - mx);
        sxy += (n_damp[i] - mx) * (g2_n_damp[i] - my);
    }
    detail::require(sxx > 0.0, "slope fit needs distinct N_damp values");
    CouplingFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (!(fit.slope > 0.0))
        throw DomainError(DomainFault::unsupported_configuration, "fitted g^2 is not positive");
    double ss = 0.0;
    for (std::size_t i = 0; i < n_damp.size(); ++i) {
        const double r = g2_n_damp[i] - fit.intercept - fit.slope * n_damp[i];
        ss += r * r;
    }
    const double slope_sigma = std::sqrt(ss / (n - 2.0) / sxx);
    fit.g = std::sqrt(fit.slope);
    fit.g_sigma = slope_sigma / (2.0 * fit.g);
    return fit;
}

// n_th = n0 Gamma0 / Gamma + n_ba
inline double rescale_occupation(double n0_gamma0, double gamma, double n_ba)
{
    detail::require_positive(gamma, "gamma");
    detail::require(std::isfinite(n_ba) && n_ba >= 0.0, "n_ba must be >= 0");
    detail::require(std::isfinite(n0_gamma0) && n0_gamma0 >= 0.0, "n0 Gamma0 must be >= 0");
    return n0_gamma0 / gamma + n_ba;
}

// The bath constant n0 Gamma0 implied by an occupation measured at linewidth gamma.
inline double occupation_constant(double n_th, double gamma, double n_ba)
{
    detail::require_positive(gamma, "gamma");
    detail::require(n_th >= n_ba, "n_th must not be below the backaction floor");
    return (n_th - n_ba) * gamma;
}

// ---------------------------------------------------------------------------
// Quantum efficiency

class EfficiencyBudget
{
public:
    // eps_sq = eps_en * eps_meas, measured via ponderomotive squeezing.
    static EfficiencyBudget from_squeezing(double eps_sq, double eps_en, double eps_opt, double eps_vis)
    {
        check(eps_sq, "eps_sq");
        check(eps_en, "eps_en");
        return EfficiencyBudget(eps_sq, eps_en, eps_sq / eps_en, eps_opt, eps_vis);
    }

    static EfficiencyBudget from_measured(double eps_meas, double eps_opt, double eps_vis)
    {
        return EfficiencyBudget(eps_meas, 1.0, eps_meas, eps_opt, eps_vis);
    }

    double eps_sq() const { return eps_sq_; }
    double eps_en() const { return eps_en_; }
    double eps_meas() const { return eps_meas_; }
    double eps_opt() const { return eps_opt_; }
    double eps_vis() const { return eps_vis_; }

private:
    EfficiencyBudget(double sq, double en, double meas, double opt, double vis)
        : eps_sq_(sq), eps_en_(en), eps_meas_(meas), eps_opt_(opt), eps_vis_(vis)
    {
        check(meas, "eps_meas");
        check(opt, "eps_opt");
        check(vis, "eps_vis");
    }

    static void check(double v, const char* name)
    {
        detail::require(std::isfinite(v) && v > 0.0 && v <= 1.0, std::string(name) + " must lie in (0, 1]");
    }

    double eps_sq_, eps_en_, eps_meas_, eps_opt_, eps_vis_;
};

// eps = eps_meas eps_opt eps_vis^2
inline double compose_efficiency(const EfficiencyBudget& b)
{
    return b.eps_meas() * b.eps_opt() * b.eps_vis() * b.eps_vis();
}

// ---------------------------------------------------------------------------
// Lorentzian sideband fits

struct Sample
{
    double omega = 0.0; // rad/s
    double psd = 0.0;   // shot-noise units
};

// offset + amplitude (gamma/2)^2 / ((gamma/2)^2 + (omega - center)^2); gamma is the FWHM.
struct LorentzianParams
{
    double offset = 0.0;
    double amplitude = 0.0;
    double center = 0.0; // rad/s
    double gamma = 0.0;  // rad/s
};

inline double lorentzian(const LorentzianParams& p, double omega)
{
    const double h = 0.25 * p.gamma * p.gamma;
    const double d = omega - p.center;
    return p.offset + p.amplitude * h / (h + d * d);
}

struct LorentzianFit
{
    LorentzianParams params;
    double residual_rms = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
};

// Thrown when refinement stops without meeting its criterion; carries the best
// parameters seen.
class FitError : public DomainError
{
public:
    FitError(const std::string& what, LorentzianFit best)
        : DomainError(DomainFault::non_convergence, what), best_(best)
    {
    }

    const LorentzianFit& best() const { return best_; }

private:
    LorentzianFit best_;
};

struct FitOptions
{
    double gradient_tolerance = 1e-10;
    int max_iterations = 200;
};

namespace detail {

inline double median(std::vector<double> v)
{
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
    const double hi = v[n / 2];
    if (n % 2 == 1)
        return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2));
    return 0.5 * (lo + hi);
}

inline std::vector<Sample> sorted_samples(std::span<const Sample> samples)
{
    std::vector<Sample> s(samples.begin(), samples.end());
    for (const auto& x : s)
        require(std::isfinite(x.omega) && std::isfinite(x.psd), "samples must be finite");
    std::stable_sort(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.omega < b.omega; });
    return s;
}

// Linear interpolation of the frequency where the samples cross `level`
// walking outward from `peak` in direction `step`.
inline std::optional<double> half_level_crossing(const std::vector<Sample>& s, std::size_t peak, int step,
                                                 double level)
{
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(peak);
    const auto n = static_cast<std::ptrdiff_t>(s.size());
    while (true) {
        const std::ptrdiff_t j = i + step;
        if (j < 0 || j >= n)
            return std::nullopt;
        if (s[static_cast<std::size_t>(j)].psd < level) {
            const Sample& a = s[static_cast<std::size_t>(i)];
            const Sample& b = s[static_cast<std::size_t>(j)];
            const double t = (a.psd - level) / (a.psd - b.psd);
            return a.omega + t * (b.omega - a.omega);
        }
        i = j;
    }
}

} // namespace detail

// Deterministic starting point: offset from the median of the outer quartiles,
// center at the largest sample, amplitude max - offset, width from the full
// width at half of (max - offset).
inline LorentzianParams lorentzian_initial_guess(std::span<const Sample> samples)
{
    detail::require(samples.size() >= 8, "Lorentzian fit needs at least 8 samples");
    const auto s = detail::sorted_samples(samples);
    const std::size_t n = s.size();
    const std::size_t quarter = std::max<std::size_t>(1, n / 4);

    std::vector<double> outer;
    for (std::size_t i = 0; i < quarter; ++i) {
        outer.push_back(s[i].psd);
        outer.push_back(s[n - 1 - i].psd);
    }
    const double offset = detail::median(outer);
    std::vector<double> deviations;
    for (double v : outer)
        deviations.push_back(std::abs(v - offset));
    const double noise = 1.4826 * detail::median(deviations);

    const auto peak_it = std::max_element(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.psd < b.psd; });
    const auto peak = static_cast<std::size_t>(peak_it - s.begin());
    const double amplitude = peak_it->psd - offset;
    if (!(amplitude > 0.0) || amplitude <= 5.0 * noise)
        throw DomainError(DomainFault::no_peak, "samples show no peak above the baseline");

    const double level = offset + 0.5 * amplitude;
    const auto left = detail::half_level_crossing(s, peak, -1, level);
    const auto right = detail::half_level_crossing(s, peak, +1, level);
    double width = 0.0;
    if (left && right)
        width = *right - *left;
    else if (left)
        width = 2.0 * (peak_it->omega - *left);
    else if (right)
        width = 2.0 * (*right - peak_it->omega);
    if (!(width > 0.0))
        throw DomainError(DomainFault::no_peak, "peak width could not be resolved");
    return {offset, amplitude, peak_it->omega, width};
}

// Least-squares fit of an offset Lorentzian by damped Gauss-Newton
// (Levenberg-Marquardt) refinement, in coordinates scaled by the initial
// width and amplitude. Stops when the gradient of the mean squared residual
// falls below opts.gradient_tolerance, or fails after opts.max_iterations.
inline LorentzianFit fit_lorentzian(std::span<const Sample> samples, std::optional<LorentzianParams> init = std::nullopt,
                                    const FitOptions& opts = {})
{
    const LorentzianParams guess = lorentzian_initial_guess(samples);
    const LorentzianParams start = init.value_or(guess);
    detail::require(start.gamma > 0.0 && start.amplitude != 0.0, "initial parameters must have gamma > 0, A != 0");
    const auto s = detail::sorted_samples(samples);
    if (s.back().omega - s.front().omega < 3.0 * guess.gamma)
        throw ValidationError("samples must span at least three linewidths");

    // Scaled problem: x = (omega - w0) / g0, y = psd / a0.
    const double w0 = start.center;
    const double g0 = start.gamma;
    const double a0 = std::abs(start.amplitude);
    const std::size_t n = s.size();
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = (s[i].omega - w0) / g0;
        ys[i] = s[i].psd / a0;
    }

    using Vec = std::array<double, 4>; // offset, amplitude, center, width
    using Mat = std::array<std::array<double, 4>, 4>;

    const auto cost = [&](const Vec& q) {
        double c = 0.0;
        const double h = 0.25 * q[3] * q[3];
        for (std::size_t i = 0; i < n; ++i) {
            const double d = xs[i] - q[2];
            const double r = q[0] + q[1] * h / (h + d * d) - ys[i];
            c += r * r;
        }
        return 0.5 * c / static_cast<double>(n);
    };

    const auto normal_equations = [&](const Vec& q, Mat& jtj, Vec& grad) {
        jtj = {};
        grad = {};
        const double h = 0.25 * q[3] * q[3];
        for (std::size_t i = 0; i < n; ++i) {
            const double d = xs[i] - q[2];
            const double den = h + d * d;
            const double shape = h / den;
            const double r = q[0] + q[1] * shape - ys[i];
            const Vec jac{1.0, shape, q[1] * h * 2.0 * d / (den * den), q[1] * d * d * 0.5 * q[3] / (den * den)};
            for (int a = 0; a < 4; ++a) {
                grad[a] += jac[a] * r;
                for (int b = 0; b < 4; ++b)
                    jtj[a][b] += jac[a] * jac[b];
            }
        }
        for (int a = 0; a < 4; ++a) {
            grad[a] /= static_cast<double>(n);
            for (int b = 0; b < 4; ++b)
                jtj[a][b] /= static_cast<double>(n);
        }
    };

    // Gaussian elimination with partial pivoting on a 4x4 system.
    const auto solve = [](Mat m, Vec rhs) -> std::optional<Vec> {
        for (int c = 0; c < 4; ++c) {
            int piv = c;
            for (int r = c + 1; r < 4; ++r)
                if (std::abs(m[r][c]) > std::abs(m[piv][c]))
                    piv = r;
            if (m[piv][c] == 0.0)
                return std::nullopt;
            std::swap(m[c], m[piv]);
            std::swap(rhs[c], rhs[piv]);
            for (int r = c + 1; r < 4; ++r) {
                const double f = m[r][c] / m[c][c];
                for (int k = c; k < 4; ++k)
                    m[r][k] -= f * m[c][k];
                rhs[r] -= f * rhs[c];
            }
        }
        Vec x{};
        for (int r = 3; r >= 0; --r) {
            double acc = rhs[r];
            for (int k = r + 1; k < 4; ++k)
                acc -= m[r][k] * x[k];
            x[r] = acc / m[r][r];
        }
        return x;
    };

    const auto norm = [](const Vec& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]); };

    const auto unscale = [&](const Vec& q, double grad_norm, int iterations) {
        LorentzianFit fit;
        fit.params = {q[0] * a0, q[1] * a0, w0 + q[2] * g0, q[3] * g0};
        fit.residual_rms = std::sqrt(2.0 * cost(q)) * a0;
        fit.gradient_norm = grad_norm;
        fit.iterations = iterations;
        return fit;
    };

    Vec q{start.offset / a0, start.amplitude / a0, 0.0, 1.0};
    double current = cost(q);
    double lambda = 1e-3;
    Mat jtj;
    Vec grad;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        normal_equations(q, jtj, grad);
        const double g = norm(grad);
        if (g < opts.gradient_tolerance)
            return unscale(q, g, iter);

        bool stepped = false;
        while (!stepped && lambda < 1e30) {
            Mat damped = jtj;
            for (int a = 0; a < 4; ++a)
                damped[a][a] += lambda * (jtj[a][a] > 0.0 ? jtj[a][a] : 1.0);
            Vec rhs{-grad[0], -grad[1], -grad[2], -grad[3]};
            const auto step = solve(damped, rhs);
            if (step) {
                Vec trial{q[0] + (*step)[0], q[1] + (*step)[1], q[2] + (*step)[2], q[3] + (*step)[3]};
                const double c = trial[3] > 0.0 ? cost(trial) : INFINITY;
                if (c <= current) {
                    q = trial;
                    current = c;
                    lambda = std::max(lambda * 0.1, 1e-12);
                    stepped = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!stepped) {
            normal_equations(q, jtj, grad);
            throw FitError("Lorentzian refinement stalled with gradient norm " + std::to_string(norm(grad)),
                           unscale(q, norm(grad), iter + 1));
        }
    }
    normal_equations(q, jtj, grad);
    const double g = norm(grad);
    if (g < opts.gradient_tolerance)
        return unscale(q, g, opts.max_iterations);
    throw FitError("Lorentzian refinement did not converge in " + std::to_string(opts.max_iterations) +
                       " iterations (gradient norm " + std::to_string(g) + ")",
                   unscale(q, g, opts.max_iterations));
}

// Red and blue sideband fits combined for thermometry.
struct SidebandFit
{
    double gamma_fit = 0.0; // mean of the two fitted linewidths, rad/s
    double a_red = 0.0;
    double a_blue = 0.0;
    double offset = 0.0; // mean baseline
    double residual_rms = 0.0;

    double n_th() const { return n_th_from_sidebands(a_red, a_blue); }
};

inline SidebandFit fit_sidebands(std::span<const Sample> red, std::span<const Sample> blue)
{
    const auto r = fit_lorentzian(red);
    const auto b = fit_lorentzian(blue);
    SidebandFit out;
    out.gamma_fit = 0.5 * (r.params.gamma + b.params.gamma);
    out.a_red = r.params.amplitude;
    out.a_blue = b.params.amplitude;
    out.offset = 0.5 * (r.params.offset + b.params.offset);
    out.residual_rms = std::sqrt(0.5 * (r.residual_rms * r.residual_rms + b.residual_rms * b.residual_rms));
    return out;
}

// Offset Lorentzian sampled on `omega_grid` plus seeded white Gaussian noise.
inline std::vector<Sample> synth_sideband_spectrum(const LorentzianParams& truth, std::span<const double> omega_grid,
                                                   double noise_sigma, std::uint64_t seed)
{
    detail::require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise_sigma must be >= 0");
    detail::require(std::is_sorted(omega_grid.begin(), omega_grid.end()), "grid must be sorted");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Sample> out;
    out.reserve(omega_grid.size());
    for (double w : omega_grid) {
        double v = lorentzian(truth, w);
        if (noise_sigma > 0.0)
            v += noise_sigma * gauss(rng);
        out.push_back({w, v});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-column sideband CSV: frequency_hz,psd_shotnoise_units

inline constexpr const char* spectrum_csv_header = "frequency_hz,psd_shotnoise_units";

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_spectrum_csv(std::ostream& os, std::span<const Sample> samples)
{
    os << spectrum_csv_header << '\n';
    for (const auto& s : samples)
        os << format_double(hz_from_angular(s.omega)) << ',' << format_double(s.psd) << '\n';
}

inline void write_spectrum_csv(const std::string& path, std::span<const Sample> samples)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError(path, "cannot open for writing");
    write_spectrum_csv(os, samples);
    if (!os)
        throw IoError(path, "write failed");
}

inline std::vector<Sample> read_spectrum_csv(std::istream& is, const std::string& source = "<stream>")
{
    std::string line;
    if (!std::getline(is, line))
        throw ValidationError(source + ": empty spectrum file");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != spectrum_csv_header)
        throw ValidationError(source + ":1: expected header '" + std::string(spectrum_csv_header) + "'");
    std::vector<Sample> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ValidationError(source + ":" + std::to_string(lineno) + ": expected two columns");
        try {
            std::size_t used_f = 0, used_p = 0;
            const std::string f = line.substr(0, comma);
            const std::string p = line.substr(comma + 1);
            const double hz = std::stod(f, &used_f);
            const double psd = std::stod(p, &used_p);
            if (used_f != f.size() || used_p != p.size())
                throw std::invalid_argument("trailing characters");
            out.push_back({angular_from_hz(hz), psd});
        } catch (const std::logic_error&) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return out;
}

inline std::vector<Sample> read_spectrum_csv(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError(path, "cannot open for reading");
    return read_spectrum_csv(is, path);
}

} // namespace qnoise
