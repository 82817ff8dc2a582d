#pragma once

// SQL and QL reference curves, optimal quadrature and power, variational
// readout and quadrature stitching, and the force-PSD view of the same noise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "core_model.hpp"
#include "homodyne.hpp"

namespace qnoise {

// Probe powers above this are reported as saturated.
inline constexpr double power_cap = 1e9;

// SQL added noise at rho in units of S_sql(omega_m): |chi_m~(rho)|.
inline double sql_psd(Detuning rho) { return 1.0 / std::sqrt(1.0 + rho.value * rho.value); }

// cot(phi_opt) = eps p rho |chi_m~|^2.
inline double cot_phi_opt(Detuning rho, NormalizedPower p, const Detection& det)
{
    return det.epsilon() * p.value * rho.value * chi_m_dimensionless_sq(rho);
}

// Quadrature minimizing the displacement PSD at (rho, p); in (0, pi), above
// 90 deg for rho < 0.
inline Angle phi_opt(Detuning rho, NormalizedPower p, const Detection& det)
{
    detail::require_power(p);
    return Angle::radians(std::atan2(1.0, cot_phi_opt(rho, p, det)));
}

// Displacement PSD at phi_opt:
// 2(n_th + 1/2)|chi|^2 + 1/(2 eps p) + (p/2)(1 + (1 - eps) rho^2)|chi|^4.
inline double psd_at_phi_opt(Detuning rho, NormalizedPower p, const Detection& det, const MechanicalMode& mode)
{
    detail::require_power(p);
    const double chi_sq = chi_m_dimensionless_sq(rho);
    const double eps = det.epsilon();
    const double r2 = rho.value * rho.value;
    return 2.0 * (mode.n_th() + 0.5) * chi_sq + 1.0 / (2.0 * eps * p.value) +
           0.5 * p.value * (1.0 + (1.0 - eps) * r2) * chi_sq * chi_sq;
}

struct PowerOptimum
{
    NormalizedPower p;
    bool saturated = false; // true when the optimum exceeded power_cap and was clamped
};

// Power that, together with phi_opt, minimizes the displacement PSD.
inline PowerOptimum p_opt(Detuning rho, const Detection& det)
{
    const double eps = det.epsilon();
    const double r2 = rho.value * rho.value;
    const double p = 1.0 / (std::sqrt(eps * (1.0 + (1.0 - eps) * r2)) * chi_m_dimensionless_sq(rho));
    if (!(p <= power_cap))
        return {NormalizedPower{power_cap}, true};
    return {NormalizedPower{p}, false};
}

// Added noise at (phi_opt, p_opt): sqrt(1/eps + (1 - eps) rho^2 / eps) |chi|^2.
inline double ql_added(Detuning rho, const Detection& det)
{
    const double eps = det.epsilon();
    const double r2 = rho.value * rho.value;
    return std::sqrt(1.0 / eps + (1.0 - eps) / eps * r2) * chi_m_dimensionless_sq(rho);
}

// Total PSD at the efficiency-limited quantum limit, mechanical noise included.
inline double ql_psd(Detuning rho, const Detection& det, const MechanicalMode& mode)
{
    return 2.0 * (mode.n_th() + 0.5) * chi_m_dimensionless_sq(rho) + ql_added(rho, det);
}

struct UncertaintyProduct
{
    double lhs = 0.0; // S_II S_FF
    double rhs = 0.0; // 1/4 + S_IF^2
};

// Both sides of S_II S_FF >= 1/4 + S_IF^2 for the homodyne probe.
inline UncertaintyProduct uncertainty_product(Angle phi, NormalizedPower p, const Detection& det)
{
    detail::require_power(p);
    const double cot = detail::displacement_cot(phi);
    const double s_ii = (1.0 + cot * cot) / (2.0 * det.epsilon() * p.value);
    const double s_ff = 0.5 * p.value;
    const double s_if = -0.5 * cot;
    return {s_ii * s_ff, 0.25 + s_if * s_if};
}

// ---------------------------------------------------------------------------
// Curves

enum class CurveKind
{
    sql,
    ql,
    variational_fixed_p,
    fixed_angle,
};

struct CurveContext
{
    std::optional<double> p;
    double epsilon = 1.0;
    double n_th = 0.0;
    std::optional<double> phi; // radians, fixed-angle curves only
    bool mechanical_included = false;
};

struct LimitCurve
{
    std::vector<double> grid;
    std::vector<double> values;
    CurveKind kind = CurveKind::sql;
    CurveContext params;
};

struct SqlCurveOptions
{
    bool include_zero_point = false;
    double n_th = 0.0; // thermal motion is added only when n_th > 0
};

// S_sql(rho) ignores the mechanical state unless asked otherwise.
inline LimitCurve sql_curve(std::span<const double> grid, const SqlCurveOptions& opts = {})
{
    detail::require(opts.n_th >= 0.0, "n_th must be >= 0");
    LimitCurve curve{{grid.begin(), grid.end()}, {}, CurveKind::sql, {}};
    const double motion = 2.0 * opts.n_th + (opts.include_zero_point ? 1.0 : 0.0);
    curve.params.n_th = opts.n_th;
    curve.params.mechanical_included = motion > 0.0;
    curve.values.reserve(grid.size());
    for (double r : grid) {
        const Detuning rho{r};
        curve.values.push_back(sql_psd(rho) + motion * chi_m_dimensionless_sq(rho));
    }
    return curve;
}

inline LimitCurve ql_curve(std::span<const double> grid, const Detection& det, const MechanicalMode& mode)
{
    LimitCurve curve{{grid.begin(), grid.end()}, {}, CurveKind::ql, {}};
    curve.params.epsilon = det.epsilon();
    curve.params.n_th = mode.n_th();
    curve.params.mechanical_included = true;
    curve.values.reserve(grid.size());
    for (double r : grid)
        curve.values.push_back(ql_psd(Detuning{r}, det, mode));
    return curve;
}

// phi chosen per frequency at a fixed power.
inline LimitCurve variational_spectrum(std::span<const double> grid, NormalizedPower p, const Detection& det,
                                       const MechanicalMode& mode)
{
    detail::require_power(p);
    LimitCurve curve{{grid.begin(), grid.end()}, {}, CurveKind::variational_fixed_p, {}};
    curve.params = {p.value, det.epsilon(), mode.n_th(), std::nullopt, true};
    curve.values.reserve(grid.size());
    for (double r : grid)
        curve.values.push_back(psd_at_phi_opt(Detuning{r}, p, det, mode));
    return curve;
}

inline LimitCurve fixed_angle_curve(std::span<const double> grid, NormalizedPower p, Angle phi, const Detection& det,
                                    const MechanicalMode& mode)
{
    LimitCurve curve{{grid.begin(), grid.end()}, {}, CurveKind::fixed_angle, {}};
    curve.params = {p.value, det.epsilon(), mode.n_th(), phi.radians(), true};
    curve.values.reserve(grid.size());
    for (double r : grid)
        curve.values.push_back(displacement_psd(Detuning{r}, p, phi, det, mode).total);
    return curve;
}

// ---------------------------------------------------------------------------
// Quadrature stitching

// Total PSD over a rho grid measured at one fixed quadrature.
struct FixedAngleSpectrum
{
    Angle phi;
    double p = 0.0;
    double epsilon = 1.0;
    double n_th = 0.0;
    std::vector<double> grid;
    std::vector<double> totals;
};

inline FixedAngleSpectrum measure_fixed_angle(std::span<const double> grid, NormalizedPower p, Angle phi,
                                              const Detection& det, const MechanicalMode& mode)
{
    auto curve = fixed_angle_curve(grid, p, phi, det, mode);
    return {phi, p.value, det.epsilon(), mode.n_th(), std::move(curve.grid), std::move(curve.values)};
}

struct StitchedSpectrum
{
    std::vector<double> grid;
    std::vector<Angle> chosen_phi;
    std::vector<double> values;
};

// Pointwise minimum over fixed-angle spectra. Ties go to the angle closest to
// 90 deg, then to the smaller angle.
inline StitchedSpectrum stitch_quadratures(std::span<const FixedAngleSpectrum> tables)
{
    if (tables.size() < 2)
        throw ValidationError("stitching requires at least two fixed-angle spectra");
    const auto& ref = tables.front();
    for (const auto& t : tables) {
        if (t.grid != ref.grid || t.totals.size() != ref.grid.size())
            throw ValidationError("stitching requires identical grids");
        if (t.p != ref.p || t.epsilon != ref.epsilon || t.n_th != ref.n_th)
            throw ValidationError("stitching requires identical (p, epsilon, n_th)");
    }

    const auto preferred = [](Angle a, Angle b) {
        const double da = std::abs(a.radians() - std::numbers::pi / 2);
        const double db = std::abs(b.radians() - std::numbers::pi / 2);
        return da != db ? da < db : a.radians() < b.radians();
    };

    StitchedSpectrum out;
    out.grid = ref.grid;
    out.chosen_phi.reserve(ref.grid.size());
    out.values.reserve(ref.grid.size());
    for (std::size_t i = 0; i < ref.grid.size(); ++i) {
        const FixedAngleSpectrum* best = &tables.front();
        for (const auto& t : tables.subspan(1)) {
            const double v = t.totals[i];
            if (v < best->totals[i] || (v == best->totals[i] && preferred(t.phi, best->phi)))
                best = &t;
        }
        out.chosen_phi.push_back(best->phi);
        out.values.push_back(best->totals[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Force spectra

// Dimensionless force PSD: |chi_m~|^-2 S_xx.
inline double force_psd(Detuning rho, NormalizedPower p, Angle phi, const Detection& det, const MechanicalMode& mode)
{
    return displacement_psd(rho, p, phi, det, mode).total / chi_m_dimensionless_sq(rho);
}

// Force SQL relative to its on-resonance value: sqrt(1 + rho^2).
inline double force_sql(Detuning rho) { return std::sqrt(1.0 + rho.value * rho.value); }

// Force SQL in N^2/Hz: p_zp^2 (Gamma/2) sqrt(1 + rho^2).
inline double force_sql_absolute(Detuning rho, double gamma, double p_zp)
{
    return p_zp * p_zp * 0.5 * gamma * force_sql(rho);
}

// Force PSD at phi_opt for the given power, or at the QL when no power is given.
inline double force_psd_opt(Detuning rho, const Detection& det, const MechanicalMode& mode,
                            std::optional<NormalizedPower> p = std::nullopt)
{
    const double mech = 2.0 * (mode.n_th() + 0.5);
    const double eps = det.epsilon();
    const double r2 = rho.value * rho.value;
    if (!p)
        return mech + std::sqrt(1.0 / eps + (1.0 - eps) / eps * r2);
    detail::require_power(*p);
    const double chi_sq = chi_m_dimensionless_sq(rho);
    return mech + 1.0 / (2.0 * eps * p->value * chi_sq) + 0.5 * p->value * (1.0 + (1.0 - eps) * r2) * chi_sq;
}

} // namespace qnoise
