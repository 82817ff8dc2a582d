#pragma once

// Synodyne readout: a two-tone local oscillator split by 2 omega_m that
// demodulates the mechanical resonance to DC.
//
// Detunings here are measured from the demodulated resonance, i.e. rho is
// 2 omega_bb / Gamma for baseband frequency omega_bb = omega_lab - omega_m.
// Use synodyne_detuning() to build them rather than detuning_of().

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "core_model.hpp"
#include "grid.hpp"
#include "homodyne.hpp"
#include "limits.hpp"

namespace qnoise {

class SynodyneLO
{
public:
    // beta = alpha_+ / alpha_-, the sideband amplitude ratio; phi the global LO phase.
    SynodyneLO(double beta, Angle phi) : beta_(beta), phi_(phi)
    {
        detail::require(std::isfinite(beta) && beta > 0.0, "synodyne sideband ratio beta must be > 0");
        detail::require(std::isfinite(phi.radians()), "synodyne LO phase must be finite");
    }

    double beta() const { return beta_; }
    Angle phi() const { return phi_; }

private:
    double beta_;
    Angle phi_;
};

struct LoCoefficients
{
    complex alpha_a; // amplitude-quadrature weight
    complex alpha_p; // phase-quadrature weight
};

// alpha_a = (e^{-i phi} + beta e^{i phi}) / 2, alpha_p = -i (e^{-i phi} - beta e^{i phi}) / 2,
// both normalized by alpha_-.
inline LoCoefficients lo_coefficients(const SynodyneLO& lo)
{
    const complex lower = std::polar(1.0, -lo.phi().radians());
    const complex upper = lo.beta() * std::polar(1.0, lo.phi().radians());
    return {0.5 * (lower + upper), complex(0.0, -0.5) * (lower - upper)};
}

namespace detail {

inline double require_phase_weight(const LoCoefficients& c, double beta)
{
    const double p2 = std::norm(c.alpha_p);
    if (!(p2 > 1e-24 * (1.0 + beta * beta)))
        throw DomainError(DomainFault::divergence,
                          "synodyne LO has no phase-quadrature weight (alpha_p = 0): no mechanical information");
    return p2;
}

} // namespace detail

// (|alpha_a|^2 + |alpha_p|^2) / |alpha_p|^2
inline double synodyne_shot_noise_factor(const SynodyneLO& lo)
{
    const auto c = lo_coefficients(lo);
    const double p2 = detail::require_phase_weight(c, lo.beta());
    return (std::norm(c.alpha_a) + p2) / p2;
}

// Im[alpha_a* alpha_p] / |alpha_p|^2
inline double synodyne_correlation_factor(const SynodyneLO& lo)
{
    const auto c = lo_coefficients(lo);
    const double p2 = detail::require_phase_weight(c, lo.beta());
    return (std::conj(c.alpha_a) * c.alpha_p).imag() / p2;
}

inline Detuning synodyne_detuning(double omega_baseband, const MechanicalMode& mode)
{
    return Detuning{2.0 * omega_baseband / mode.gamma()};
}

inline double baseband_frequency(double omega_lab, const MechanicalMode& mode) { return omega_lab - mode.omega_m(); }

// Synodyne displacement PSD. s_corr carries -|chi_m~|^2 Im[alpha_a* alpha_p]/|alpha_p|^2.
inline SpectrumComponents synodyne_psd(Detuning rho, NormalizedPower p, const SynodyneLO& lo, const Detection& det,
                                       const MechanicalMode& mode)
{
    detail::require_power(p);
    const auto c = lo_coefficients(lo);
    const double p2 = detail::require_phase_weight(c, lo.beta());
    const double chi_sq = chi_m_dimensionless_sq(rho);

    SpectrumComponents out;
    out.s_m = 2.0 * (mode.n_th() + 0.5) * chi_sq;
    out.s_ii = (std::norm(c.alpha_a) + p2) / p2 / (2.0 * det.epsilon() * p.value);
    out.s_ff = 0.5 * p.value * chi_sq;
    out.s_corr = -chi_sq * (std::conj(c.alpha_a) * c.alpha_p).imag() / p2;
    return out.finalize();
}

enum class SynodyneBranch
{
    automatic,
    phase,     // phi = 90 deg, valid for eps p |chi|^2 < 1
    amplitude, // phi = 0 deg, valid for eps p |chi|^2 > 1
};

struct BetaOptimum
{
    double beta = 1.0;
    SynodyneBranch branch = SynodyneBranch::phase;

    Angle phi() const { return branch == SynodyneBranch::amplitude ? Angle::degrees(0.0) : Angle::degrees(90.0); }
    SynodyneLO lo() const { return {beta, phi()}; }
};

// Sideband ratio minimizing the synodyne PSD at (rho, p).
inline BetaOptimum beta_opt(Detuning rho, NormalizedPower p, const Detection& det,
                            SynodyneBranch branch = SynodyneBranch::automatic)
{
    detail::require_power(p);
    const double x = det.epsilon() * p.value * chi_m_dimensionless_sq(rho);
    if (x == 1.0)
        throw DomainError(DomainFault::pole, "eps p |chi_m~|^2 = 1 is the crossover between the phase and "
                                             "amplitude branches; beta_opt is unbounded there");
    const SynodyneBranch valid = x < 1.0 ? SynodyneBranch::phase : SynodyneBranch::amplitude;
    if (branch != SynodyneBranch::automatic && branch != valid)
        throw DomainError(DomainFault::unsupported_configuration,
                          std::string("requested synodyne branch gives a negative ratio here; use the ") +
                              (valid == SynodyneBranch::phase ? "phase (90 deg)" : "amplitude (0 deg)") + " branch");
    const double beta = valid == SynodyneBranch::phase ? (1.0 + x) / (1.0 - x) : (x + 1.0) / (x - 1.0);
    return {beta, valid};
}

// Synodyne PSD with beta_opt chosen at every frequency:
// 2(n_th + 1/2)|chi|^2 + 1/(2 eps p) + (p/2)((1 - eps) + rho^2)|chi|^4.
inline double synodyne_variational(Detuning rho, NormalizedPower p, const Detection& det, const MechanicalMode& mode)
{
    detail::require_power(p);
    const double chi_sq = chi_m_dimensionless_sq(rho);
    const double eps = det.epsilon();
    return 2.0 * (mode.n_th() + 0.5) * chi_sq + 1.0 / (2.0 * eps * p.value) +
           0.5 * p.value * ((1.0 - eps) + rho.value * rho.value) * chi_sq * chi_sq;
}

// Optimal synodyne power. At eps = 1, rho = 0 the optimum is at infinite power
// and the result is clamped to power_cap with the saturation flag set.
inline PowerOptimum synodyne_p_opt(Detuning rho, const Detection& det)
{
    const double eps = det.epsilon();
    const double radicand = eps * ((1.0 - eps) + rho.value * rho.value);
    if (radicand == 0.0)
        return {NormalizedPower{power_cap}, true};
    const double p = 1.0 / (std::sqrt(radicand) * chi_m_dimensionless_sq(rho));
    if (!(p <= power_cap))
        return {NormalizedPower{power_cap}, true};
    return {NormalizedPower{p}, false};
}

struct SynodyneLimit
{
    double value = 0.0;
    bool saturated = false; // optimum reached only in the infinite-power limit
};

// Synodyne PSD at (beta_opt, p_opt):
// 2(n_th + 1/2)|chi|^2 + sqrt((1 - eps)/eps + rho^2/eps)|chi|^2.
inline SynodyneLimit synodyne_ql(Detuning rho, const Detection& det, const MechanicalMode& mode)
{
    const double eps = det.epsilon();
    const double chi_sq = chi_m_dimensionless_sq(rho);
    const double added = std::sqrt((1.0 - eps) / eps + rho.value * rho.value / eps) * chi_sq;
    return {2.0 * (mode.n_th() + 0.5) * chi_sq + added, synodyne_p_opt(rho, det).saturated};
}

// Displacement PSD from an external force seen through the synodyne LO, on a
// baseband grid (rad/s). The force appears as two delta functions at
// +-(omega_f - omega_m); in the same bin they interfere and the response
// depends on phi_f, otherwise each adds |alpha_p|^2 / (2 |alpha_p|^2).
inline std::vector<double> synodyne_force_response(std::span<const double> baseband_grid, const ExternalForce& force,
                                                   const SynodyneLO& lo, const MechanicalMode& mode,
                                                   double p_zp = 1.0)
{
    detail::require(force.amplitude >= 0.0, "force amplitude must be >= 0");
    detail::require(p_zp > 0.0, "p_zp must be positive");
    const auto c = lo_coefficients(lo);
    const double p2 = detail::require_phase_weight(c, lo.beta());
    const FrequencyBins bins(baseband_grid);

    const double offset = force.omega_f - mode.omega_m();
    const std::size_t k_up = bins.locate(offset);
    const std::size_t k_down = bins.locate(-offset);
    const complex a_up = c.alpha_p * std::polar(1.0, -force.phi_f);
    const complex a_down = std::conj(c.alpha_p) * std::polar(1.0, force.phi_f);

    const double scaled = force.amplitude / (4.0 * p_zp);
    const double weight = scaled * scaled * chi_m_dimensionless_sq(synodyne_detuning(offset, mode)) / (2.0 * p2);

    std::vector<double> out(bins.size(), 0.0);
    if (k_up == k_down) {
        out[k_up] = weight * std::norm(a_up + a_down) / bins.width(k_up);
    } else {
        out[k_up] = weight * std::norm(a_up) / bins.width(k_up);
        out[k_down] = weight * std::norm(a_down) / bins.width(k_down);
    }
    return out;
}

// Synodyne readout bound to a physical cavity. Construction checks that the
// cavity filtering is symmetric about omega_m over the analysis span, which the
// dimensionless synodyne model assumes.
class SynodyneReadout
{
public:
    static constexpr double max_asymmetry = 1e-3;

    SynodyneReadout(MechanicalMode mode, OpticalCavity cavity, Detection det, double max_abs_rho)
        : mode_(mode), cavity_(cavity), det_(det), span_(max_abs_rho)
    {
        detail::require(max_abs_rho > 0.0, "synodyne analysis span must be positive");
        const double a = cavity_asymmetry(mode_, cavity_, max_abs_rho);
        if (!(a < max_asymmetry))
            throw DomainError(DomainFault::unsupported_configuration,
                              "cavity response is asymmetric about omega_m by " + std::to_string(a) +
                                  " over |rho| <= " + std::to_string(max_abs_rho) + " (limit 1e-3)");
    }

    // | |chi_c(omega_m + d)|^2 - |chi_c(omega_m - d)|^2 | / |chi_c(omega_m)|^2, maximized over |rho| <= span.
    static double cavity_asymmetry(const MechanicalMode& mode, const OpticalCavity& cav, double max_abs_rho)
    {
        double worst = 0.0;
        constexpr int steps = 64;
        for (int i = 1; i <= steps; ++i) {
            const double d = 0.5 * mode.gamma() * max_abs_rho * i / steps;
            const double up = chi_c_dimensionless_sq(mode.omega_m() + d, cav, mode);
            const double down = chi_c_dimensionless_sq(mode.omega_m() - d, cav, mode);
            worst = std::max(worst, std::abs(up - down));
        }
        return worst;
    }

    SpectrumComponents psd(Detuning rho, NormalizedPower p, const SynodyneLO& lo) const
    {
        require_in_span(rho);
        return synodyne_psd(rho, p, lo, det_, mode_);
    }

    double variational(Detuning rho, NormalizedPower p) const
    {
        require_in_span(rho);
        return synodyne_variational(rho, p, det_, mode_);
    }

    const MechanicalMode& mode() const { return mode_; }
    const Detection& detection() const { return det_; }

private:
    void require_in_span(Detuning rho) const
    {
        if (std::abs(rho.value) > span_)
            throw DomainError(DomainFault::out_of_range, "rho outside the validated synodyne span");
    }

    MechanicalMode mode_;
    OpticalCavity cavity_;
    Detection det_;
    double span_;
};

} // namespace qnoise
