#pragma once

// Units, susceptibilities and normalizations shared by every other module.
//
// Frequencies are angular (rad/s) and angles are radians throughout the
// library; conversion from Hz and degrees happens only at the I/O boundary.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace qnoise {

using complex = std::complex<double>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double hbar = 1.054571817e-34; // J s

inline constexpr double angular_from_hz(double hz) { return two_pi * hz; }
inline constexpr double hz_from_angular(double omega) { return omega / two_pi; }

// Homodyne quadrature angle: 0 is amplitude (AM), pi/2 is phase (PM).
class Angle
{
public:
    constexpr Angle() = default;

    static constexpr Angle radians(double value) { return Angle(value); }
    static constexpr Angle degrees(double value) { return Angle(value * std::numbers::pi / 180.0); }

    constexpr double radians() const { return value_; }
    constexpr double degrees() const { return value_ * 180.0 / std::numbers::pi; }

private:
    constexpr explicit Angle(double value) : value_(value) {}
    double value_ = 0.0;
};

// rho = 2 (omega - omega_m) / Gamma.
struct Detuning
{
    double value = 0.0;
};

// Probe power in units of the on-resonance SQL power.
struct NormalizedPower
{
    double value = 0.0;

    constexpr double cooperativity() const { return value / 4.0; }
};

class MechanicalMode
{
public:
    // omega_m and gamma in rad/s.
    MechanicalMode(double omega_m, double gamma, double n_th, double n_ba = 0.0)
        : omega_m_(omega_m), gamma_(gamma), n_th_(n_th), n_ba_(n_ba)
    {
        detail::require(std::isfinite(omega_m) && omega_m > 0.0, "omega_m must be positive");
        detail::require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive");
        detail::require(std::isfinite(n_th) && n_th >= 0.0, "n_th must be >= 0");
        detail::require(std::isfinite(n_ba) && n_ba >= 0.0, "n_ba must be >= 0");
    }

    double omega_m() const { return omega_m_; }
    double gamma() const { return gamma_; }
    double n_th() const { return n_th_; }
    double n_ba() const { return n_ba_; }

    double quality_factor() const { return omega_m_ / gamma_; }
    // The dimensionless spectra assume Gamma << omega_m.
    bool high_q() const { return gamma_ / omega_m_ < 1e-3; }

    MechanicalMode with_occupation(double n_th) const { return {omega_m_, gamma_, n_th, n_ba_}; }

private:
    double omega_m_;
    double gamma_;
    double n_th_;
    double n_ba_;
};

class OpticalCavity
{
public:
    // kappa: full linewidth (rad/s); delta: probe detuning from cavity resonance (rad/s).
    explicit OpticalCavity(double kappa, double delta = 0.0) : kappa_(kappa), delta_(delta)
    {
        detail::require(std::isfinite(kappa) && kappa > 0.0, "kappa must be positive");
        detail::require(std::isfinite(delta), "delta must be finite");
    }

    double kappa() const { return kappa_; }
    double delta() const { return delta_; }
    bool resonant_probe() const { return delta_ == 0.0; }

private:
    double kappa_;
    double delta_;
};

class Detection
{
public:
    explicit Detection(double epsilon = 1.0) : epsilon_(epsilon)
    {
        detail::require(std::isfinite(epsilon) && epsilon > 0.0 && epsilon <= 1.0,
                        "quantum efficiency must lie in (0, 1]");
    }

    double epsilon() const { return epsilon_; }

private:
    double epsilon_;
};

// Everything needed to go between photon numbers and normalized power.
struct SystemParams
{
    MechanicalMode mode;
    OpticalCavity cavity;
    double g = 0.0; // single-photon coupling, rad/s
    Detection detection;
};

// ---------------------------------------------------------------------------
// Frequency coordinates

inline Detuning detuning_of(double omega, const MechanicalMode& mode)
{
    return Detuning{2.0 * (omega - mode.omega_m()) / mode.gamma()};
}

inline double frequency_of(Detuning rho, const MechanicalMode& mode)
{
    return mode.omega_m() + 0.5 * rho.value * mode.gamma();
}

// ---------------------------------------------------------------------------
// Susceptibilities

// chi_m(omega) = (Gamma/2 - i (omega - omega_m))^-1
inline complex chi_m(double omega, const MechanicalMode& mode)
{
    return 1.0 / complex(0.5 * mode.gamma(), -(omega - mode.omega_m()));
}

// chi_m normalized to its on-resonance magnitude: (1 - i rho)^-1.
inline complex chi_m_dimensionless(Detuning rho)
{
    return 1.0 / complex(1.0, -rho.value);
}

// |chi_m~(rho)|^2 = 1 / (1 + rho^2), without the complex detour.
inline double chi_m_dimensionless_sq(Detuning rho)
{
    return 1.0 / (1.0 + rho.value * rho.value);
}

// chi_c(omega) = (kappa/2 - i (omega + Delta))^-1
inline complex chi_c(double omega, const OpticalCavity& cav)
{
    return 1.0 / complex(0.5 * cav.kappa(), -(omega + cav.delta()));
}

// Constructive interference of the two cavity sidebands: chi_c*(-omega) + chi_c(omega).
inline complex pi_plus(double omega, const OpticalCavity& cav)
{
    return std::conj(chi_c(-omega, cav)) + chi_c(omega, cav);
}

// Destructive interference: i (chi_c*(-omega) - chi_c(omega)).
inline complex pi_minus(double omega, const OpticalCavity& cav)
{
    return complex(0.0, 1.0) * (std::conj(chi_c(-omega, cav)) - chi_c(omega, cav));
}

// |chi_c(omega)|^2 / |chi_c(omega_m)|^2: the cavity filtering relative to the
// mechanical resonance frequency.
inline double chi_c_dimensionless_sq(double omega, const OpticalCavity& cav, const MechanicalMode& mode)
{
    return std::norm(chi_c(omega, cav)) / std::norm(chi_c(mode.omega_m(), cav));
}

// ---------------------------------------------------------------------------
// SQL power normalization

namespace detail {

inline void require_resonant_probe(const OpticalCavity& cav, const char* what)
{
    if (!cav.resonant_probe())
        throw DomainError(DomainFault::unsupported_configuration,
                          std::string(what) + " requires a probe on cavity resonance (delta = 0)");
}

} // namespace detail

// Intracavity photon number that reaches the SQL at omega with phi = 90 deg and
// unit efficiency: Gamma sqrt(1 + rho^2) / (4 kappa g^2 |chi_c(omega)|^2).
inline double sql_photon_number(double omega, double g, const MechanicalMode& mode, const OpticalCavity& cav)
{
    detail::require_resonant_probe(cav, "sql_photon_number");
    detail::require(std::isfinite(g) && g > 0.0, "coupling g must be positive");
    const double rho = detuning_of(omega, mode).value;
    return mode.gamma() * std::sqrt(1.0 + rho * rho) / (4.0 * cav.kappa() * g * g * std::norm(chi_c(omega, cav)));
}

inline NormalizedPower normalized_power(double photons, const SystemParams& sys)
{
    detail::require(photons >= 0.0, "photon number must be >= 0");
    return NormalizedPower{photons / sql_photon_number(sys.mode.omega_m(), sys.g, sys.mode, sys.cavity)};
}

inline double photon_number(NormalizedPower p, const SystemParams& sys)
{
    return p.value * sql_photon_number(sys.mode.omega_m(), sys.g, sys.mode, sys.cavity);
}

// Normalized power that reaches the SQL at rho when cavity filtering is
// neglected: sqrt(1 + rho^2).
inline NormalizedPower sql_power(Detuning rho)
{
    return NormalizedPower{std::sqrt(1.0 + rho.value * rho.value)};
}

// ---------------------------------------------------------------------------
// Absolute scales

// x_zp = sqrt(hbar / (2 m omega_m)), metres.
inline double zero_point_displacement(double mass, double omega_m)
{
    detail::require(mass > 0.0 && omega_m > 0.0, "mass and omega_m must be positive");
    return std::sqrt(hbar / (2.0 * mass * omega_m));
}

// p_zp = hbar / (2 x_zp): the force scale paired with x_zp.
inline double zero_point_force(double x_zp) { return hbar / (2.0 * x_zp); }

// S_sql(omega_m) = 2 x_zp^2 / Gamma (m^2/Hz); the unit of every dimensionless displacement PSD.
inline double sql_psd_on_resonance(double x_zp, double gamma) { return 2.0 * x_zp * x_zp / gamma; }

} // namespace qnoise
