#pragma once

// Homodyne noise spectra.
//
// Two routes to the same physics live here:
//   * the dimensionless displacement PSD, split into its mechanical,
//     imprecision, backaction and cross-correlation parts, in units of the
//     on-resonance SQL added noise (zero-point motion contributes 1 on
//     resonance);
//   * the full cavity-filtered light PSD in shot-noise units, including
//     classical laser noise, from which the displacement picture follows by
//     dividing by the displacement-to-light transfer function.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "core_model.hpp"
#include "grid.hpp"

namespace qnoise {

struct SpectrumComponents
{
    double s_m = 0.0;    // thermal + zero-point motion
    double s_ii = 0.0;   // shot-noise imprecision
    double s_ff = 0.0;   // backaction, already filtered by |chi_m~|^2
    double s_corr = 0.0; // imprecision-backaction cross-correlation, signed
    double s_ln = 0.0;   // classical laser noise
    double total = 0.0;

    double sum() const { return s_m + s_ii + s_ff + s_corr + s_ln; }
    SpectrumComponents& finalize()
    {
        total = sum();
        return *this;
    }
};

// Classical laser noise as a fraction of the intracavity shot noise.
// The amplitude-phase cross term is always fully correlated.
class ClassicalNoise
{
public:
    ClassicalNoise() = default;
    ClassicalNoise(double c_aa, double c_pp) : c_aa_(c_aa), c_pp_(c_pp)
    {
        detail::require(std::isfinite(c_aa) && c_aa >= 0.0, "C_AA must be >= 0");
        detail::require(std::isfinite(c_pp) && c_pp >= 0.0, "C_PP must be >= 0");
    }

    double c_aa() const { return c_aa_; }
    double c_pp() const { return c_pp_; }
    double c_ap() const { return std::sqrt(c_aa_ * c_pp_); }
    bool zero() const { return c_aa_ == 0.0 && c_pp_ == 0.0; }

private:
    double c_aa_ = 0.0;
    double c_pp_ = 0.0;
};

struct ExternalForce
{
    double amplitude = 0.0; // N, or units of p_zp when p_zp = 1
    double omega_f = 0.0;   // rad/s
    double phi_f = 0.0;     // rad, only meaningful for synodyne readout
};

namespace detail {

inline void require_power(NormalizedPower p)
{
    require(std::isfinite(p.value) && p.value >= 0.0, "normalized power must be >= 0");
    if (p.value == 0.0)
        throw DomainError(DomainFault::divergence, "p = 0 gives infinite imprecision");
}

// cot(phi) for a displacement-picture quadrature; phi must lie strictly in (0, pi).
inline double displacement_cot(Angle phi)
{
    const double r = phi.radians();
    require(std::isfinite(r) && r >= 0.0 && r <= std::numbers::pi, "quadrature angle must lie in [0, 180] deg");
    const double s = std::sin(r);
    if (r == 0.0 || r == std::numbers::pi || s == 0.0)
        throw DomainError(DomainFault::divergence,
                          "the amplitude quadrature carries no displacement information (phi = 0 or 180 deg)");
    // cos(pi/2) rounds to 6e-17; report the phase quadrature as exactly uncorrelated.
    if (r == std::numbers::pi / 2 || r == Angle::degrees(90.0).radians())
        return 0.0;
    return std::cos(r) / s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dimensionless displacement PSD with |chi_c~|^2 = 1.

inline SpectrumComponents displacement_psd(Detuning rho, NormalizedPower p, Angle phi, const Detection& det,
                                           const MechanicalMode& mode)
{
    detail::require_power(p);
    const double cot = detail::displacement_cot(phi);
    const double chi_sq = chi_m_dimensionless_sq(rho);

    SpectrumComponents c;
    c.s_m = 2.0 * (mode.n_th() + 0.5) * chi_sq;
    c.s_ii = (1.0 + cot * cot) / (2.0 * det.epsilon() * p.value);
    c.s_ff = 0.5 * p.value * chi_sq;
    // 2 Im[chi_m~ S_IF] with S_IF = -cot/2 and Im chi_m~ = rho |chi_m~|^2
    c.s_corr = -cot * rho.value * chi_sq;
    return c.finalize();
}

// Same, keeping the weak cavity filtering |chi_c~(omega)|^2 on imprecision and
// backaction. Resonant probe only.
inline SpectrumComponents displacement_psd_cavity(double omega, NormalizedPower p, Angle phi, const Detection& det,
                                                  const MechanicalMode& mode, const OpticalCavity& cav)
{
    detail::require_resonant_probe(cav, "displacement_psd_cavity");
    SpectrumComponents c = displacement_psd(detuning_of(omega, mode), p, phi, det, mode);
    const double filter = chi_c_dimensionless_sq(omega, cav, mode);
    c.s_ii /= filter;
    c.s_ff *= filter;
    return c.finalize();
}

// Light PSD of the homodyne output in shot-noise units:
// S_phi = 2 eps p sin^2(phi) S_xx, evaluated in the form where the imprecision
// term is exactly 1 so that phi = 0 and p = 0 are allowed.
inline double light_psd(Detuning rho, Angle phi, NormalizedPower p, const Detection& det, const MechanicalMode& mode)
{
    detail::require(std::isfinite(p.value) && p.value >= 0.0, "normalized power must be >= 0");
    const double r = phi.radians();
    detail::require(std::isfinite(r), "quadrature angle must be finite");
    const double chi_sq = chi_m_dimensionless_sq(rho);
    const double s = std::sin(r);
    const double motion = 2.0 * (mode.n_th() + 0.5) * chi_sq + 0.5 * p.value * chi_sq;
    const double scale = 2.0 * det.epsilon() * p.value;
    return 1.0 + scale * s * s * motion - scale * s * std::cos(r) * rho.value * chi_sq;
}

struct SqueezingOptimum
{
    Angle phi;
    double light_psd = 1.0; // shot-noise units
};

// Quadrature of strongest ponderomotive squeezing. Writing the light PSD as
// 1 + A sin^2 phi - B sin phi cos phi, the minimum sits at tan 2 phi = B / A.
inline SqueezingOptimum squeezing_optimum(Detuning rho, NormalizedPower p, const Detection& det,
                                          const MechanicalMode& mode)
{
    detail::require(std::isfinite(p.value) && p.value >= 0.0, "normalized power must be >= 0");
    const double chi_sq = chi_m_dimensionless_sq(rho);
    const double scale = 2.0 * det.epsilon() * p.value;
    const double a = scale * (2.0 * (mode.n_th() + 0.5) + 0.5 * p.value) * chi_sq;
    const double b = scale * rho.value * chi_sq;
    double two_phi = std::atan2(b, a);
    if (two_phi < 0.0)
        two_phi += 2.0 * std::numbers::pi;
    return {Angle::radians(0.5 * two_phi), 1.0 + 0.5 * a - 0.5 * std::hypot(a, b)};
}

// ---------------------------------------------------------------------------
// Full cavity-filtered light PSD with classical noise.

struct LightPsdBreakdown
{
    double shot = 1.0;
    double classical = 0.0;        // S_LN
    double transfer = 0.0;         // f_xx, displacement (x_zp units) to light
    double motion = 0.0;           // <xx>: thermal + backaction + classical-driven motion
    double shot_motion = 0.0;      // S_mu x: shot-noise / motion correlation
    double classical_motion = 0.0; // S_dy x: classical-noise / motion correlation

    double total() const { return shot + classical + transfer * motion + shot_motion + classical_motion; }
};

namespace detail {

struct CavityTerms
{
    double sum_sq;   // |chi_c(-w)|^2 + |chi_c(w)|^2
    double diff_sq;  // |chi_c(-w)|^2 - |chi_c(w)|^2
    complex product; // chi_c(-w) chi_c(w) e^{-2 i phi}
    complex product_plain; // chi_c(-w) chi_c(w)
    complex pi_p;
    complex pi_m;
};

inline CavityTerms cavity_terms(double omega, double phi, const OpticalCavity& cav)
{
    const complex cm = chi_c(-omega, cav);
    const complex cp = chi_c(omega, cav);
    return CavityTerms{std::norm(cm) + std::norm(cp), std::norm(cm) - std::norm(cp),
                       cm * cp * std::polar(1.0, -2.0 * phi), cm * cp, pi_plus(omega, cav), pi_minus(omega, cav)};
}

inline double classical_light(const CavityTerms& t, double eps, double half_kappa_sq, const ClassicalNoise& noise)
{
    return 2.0 * eps * (noise.c_aa() + noise.c_pp()) * half_kappa_sq * t.sum_sq +
           4.0 * eps * (noise.c_aa() - noise.c_pp()) * half_kappa_sq * t.product.real() -
           8.0 * eps * noise.c_ap() * half_kappa_sq * t.product.imag();
}

// (g a)^2 |chi_m|^2 kappa/2 (|pi+|^2 C_AA + |pi-|^2 C_PP - 4 Im[chi_c(-w) chi_c(w)] C_AP), without (g a)^2 |chi_m|^2.
inline double classical_drive(const CavityTerms& t, double kappa, const ClassicalNoise& noise)
{
    return 0.5 * kappa *
           (std::norm(t.pi_p) * noise.c_aa() + std::norm(t.pi_m) * noise.c_pp() -
            4.0 * t.product_plain.imag() * noise.c_ap());
}

// S_dy x without the leading eps (g a)^2 (kappa/2)^2.
inline double classical_motion(const CavityTerms& t, complex chi, const ClassicalNoise& noise)
{
    const complex i_chi = complex(0.0, 1.0) * chi;
    const complex a = i_chi * t.pi_p;
    const complex b = i_chi * t.pi_m;
    return 4.0 * t.diff_sq * (noise.c_aa() * a.imag() - noise.c_ap() * b.imag()) +
           4.0 * t.sum_sq * (noise.c_ap() * a.real() - noise.c_pp() * b.real()) -
           8.0 * t.product.imag() * (noise.c_aa() * a.real() - noise.c_ap() * b.real()) -
           8.0 * t.product.real() * (noise.c_ap() * a.real() - noise.c_pp() * b.real());
}

} // namespace detail

// Shot-noise-normalized light PSD at angular sideband frequency omega for an
// intracavity photon number `photons`. Any detuning is accepted.
inline LightPsdBreakdown light_psd_full(double omega, double photons, Angle phi, const SystemParams& sys,
                                        const ClassicalNoise& noise = {})
{
    detail::require(std::isfinite(photons) && photons >= 0.0, "photon number must be >= 0");
    detail::require(std::isfinite(sys.g) && sys.g > 0.0, "coupling g must be positive");
    const double eps = sys.detection.epsilon();
    const double kappa = sys.cavity.kappa();
    const double half_kappa_sq = 0.25 * kappa * kappa;
    const double drive = sys.g * sys.g * photons; // (g a)^2
    const auto t = detail::cavity_terms(omega, phi.radians(), sys.cavity);
    const complex chi = chi_m(omega, sys.mode);
    const complex i_chi = complex(0.0, 1.0) * chi;

    LightPsdBreakdown out;
    out.classical = detail::classical_light(t, eps, half_kappa_sq, noise);
    out.transfer = eps * kappa * drive * (t.sum_sq - 2.0 * t.product.real());
    out.motion = sys.mode.gamma() * (sys.mode.n_th() + 0.5) * std::norm(chi) +
                 drive * std::norm(chi) * 0.5 * kappa * t.sum_sq +
                 drive * std::norm(chi) * detail::classical_drive(t, kappa, noise);
    out.shot_motion = eps * kappa * drive * t.diff_sq * i_chi.imag() -
                      2.0 * eps * kappa * drive * t.product.imag() * i_chi.real();
    out.classical_motion = eps * drive * half_kappa_sq * detail::classical_motion(t, chi, noise);
    return out;
}

// Dimensionless displacement inferred from the full light PSD:
// (Gamma/2) S_phi / f_xx, in units of S_sql(omega_m).
inline double displacement_from_light(const LightPsdBreakdown& light, const MechanicalMode& mode)
{
    if (light.transfer <= 0.0)
        throw DomainError(DomainFault::divergence, "displacement transfer function vanishes at this quadrature");
    return 0.5 * mode.gamma() * light.total() / light.transfer;
}

// Classical noise contribution S_LN(omega, phi) to the light PSD.
inline double classical_noise_psd(double omega, Angle phi, const Detection& det, const OpticalCavity& cav,
                                  const ClassicalNoise& noise)
{
    const auto t = detail::cavity_terms(omega, phi.radians(), cav);
    return detail::classical_light(t, det.epsilon(), 0.25 * cav.kappa() * cav.kappa(), noise);
}

// Apparent displacement from the classical-noise / mechanics cross-correlation,
// in units of S_sql(omega_m): -(cot phi C_AA + C_AP) Im[kappa chi_c(omega) chi_m~].
// Signed; negative values squash the measured PSD.
inline double squashing_ratio(double omega, Angle phi, const OpticalCavity& cav, const MechanicalMode& mode,
                              const ClassicalNoise& noise)
{
    detail::require_resonant_probe(cav, "squashing_ratio");
    if (noise.zero())
        return 0.0;
    const double cot = detail::displacement_cot(phi);
    const complex response = cav.kappa() * chi_c(omega, cav) * chi_m_dimensionless(detuning_of(omega, mode));
    return -(cot * noise.c_aa() + noise.c_ap()) * response.imag();
}

// Classical-noise terms expressed as dimensionless displacement at normalized
// power p, via the full expressions. Resonant probe only.
struct ClassicalDisplacement
{
    double imprecision = 0.0; // S_LN / f_xx
    double driven = 0.0;      // motion driven by classical amplitude noise
    double squashing = 0.0;   // S_dy x / f_xx, signed
};

inline ClassicalDisplacement classical_noise_displacement(double omega, NormalizedPower p, Angle phi,
                                                          const Detection& det, const MechanicalMode& mode,
                                                          const OpticalCavity& cav, const ClassicalNoise& noise)
{
    detail::require_resonant_probe(cav, "classical_noise_displacement");
    detail::require_power(p);
    detail::displacement_cot(phi);
    if (noise.zero())
        return {};
    const double eps = det.epsilon();
    const double kappa = cav.kappa();
    const double half_kappa_sq = 0.25 * kappa * kappa;
    // (g a)^2 at power p, from the on-resonance SQL photon number.
    const double drive = p.value * mode.gamma() / (4.0 * kappa * std::norm(chi_c(mode.omega_m(), cav)));
    const auto t = detail::cavity_terms(omega, phi.radians(), cav);
    const complex chi = chi_m(omega, mode);
    const double transfer = eps * kappa * drive * (t.sum_sq - 2.0 * t.product.real());
    const double to_displacement = 0.5 * mode.gamma() / transfer;

    ClassicalDisplacement out;
    out.imprecision = to_displacement * detail::classical_light(t, eps, half_kappa_sq, noise);
    out.driven = 0.5 * mode.gamma() * drive * std::norm(chi) * detail::classical_drive(t, kappa, noise);
    out.squashing = to_displacement * eps * drive * half_kappa_sq * detail::classical_motion(t, chi, noise);
    return out;
}

// ---------------------------------------------------------------------------
// Mechanical displacement spectrum <xx>(omega), in x_zp^2 per rad/s.

inline double mechanical_psd(double omega, double photons, double g, const MechanicalMode& mode,
                             const OpticalCavity& cav, const ClassicalNoise& noise = {})
{
    detail::require(std::isfinite(photons) && photons >= 0.0, "photon number must be >= 0");
    detail::require(std::isfinite(g) && g >= 0.0, "coupling g must be >= 0");
    const double drive = g * g * photons;
    const auto t = detail::cavity_terms(omega, 0.0, cav);
    const double chi_sq = std::norm(chi_m(omega, mode));
    return mode.gamma() * (mode.n_th() + 0.5) * chi_sq + drive * chi_sq * 0.5 * cav.kappa() * t.sum_sq +
           drive * chi_sq * detail::classical_drive(t, cav.kappa(), noise);
}

// <xx> over a grid of angular frequencies. An external force contributes the
// mass (F / 4 p_zp)^2 |chi_m(omega_f)|^2 of its delta function to the bin
// containing omega_f, spread over that bin's width.
inline std::vector<double> mechanical_psd_full(std::span<const double> omega_grid, double photons, double g,
                                               const MechanicalMode& mode, const OpticalCavity& cav,
                                               const ClassicalNoise& noise = {},
                                               const std::optional<ExternalForce>& force = std::nullopt,
                                               double p_zp = 1.0)
{
    std::vector<double> out;
    out.reserve(omega_grid.size());
    for (double w : omega_grid)
        out.push_back(mechanical_psd(w, photons, g, mode, cav, noise));
    if (force) {
        detail::require(force->amplitude >= 0.0, "force amplitude must be >= 0");
        detail::require(p_zp > 0.0, "p_zp must be positive");
        const FrequencyBins bins(omega_grid);
        const std::size_t k = bins.locate(force->omega_f);
        const double scaled = force->amplitude / (4.0 * p_zp);
        out[k] += scaled * scaled * std::norm(chi_m(force->omega_f, mode)) / bins.width(k);
    }
    return out;
}

} // namespace qnoise
