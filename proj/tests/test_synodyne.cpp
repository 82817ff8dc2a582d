#include "catch_amalgamated.hpp"

#include <qnoise/synodyne.hpp>

#include "support/oracles.hpp"

using namespace qnoise;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

MechanicalMode mode_with(double n_th) { return MechanicalMode(1.0, 1.0, n_th); }

// Minimum of the synodyne oracle over beta on one LO phase branch.
double best_over_beta(double rho, double p, double phi, double eps)
{
    const auto f = [&](double u) { return oracle::synodyne_displacement(rho, p, 1.0 + u, phi, eps, 0.0); };
    const double u = oracle::log_argmin(f, -7.0, 4.0);
    return f(u);
}

} // namespace

TEST_CASE("LO coefficients at the balanced settings")
{
    const auto amp = lo_coefficients(SynodyneLO(1.0, Angle::degrees(0.0)));
    CHECK_THAT(std::abs(amp.alpha_a - complex(1.0, 0.0)), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(amp.alpha_p), WithinAbs(0.0, 1e-15));

    const auto ph = lo_coefficients(SynodyneLO(1.0, Angle::degrees(90.0)));
    CHECK_THAT(std::abs(ph.alpha_a), WithinAbs(0.0, 1e-15));
    CHECK_THAT(ph.alpha_p.imag(), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(ph.alpha_p), WithinRel(1.0, 1e-15));
}

TEST_CASE("LO coefficient energy identity and weight ratio")
{
    for (double beta : {0.1, 0.5, 1.0, 1.02, 3.0, 40.0})
        for (double deg = -180.0; deg <= 180.0; deg += 7.5) {
            const auto c = lo_coefficients(SynodyneLO(beta, Angle::degrees(deg)));
            CHECK_THAT(std::norm(c.alpha_a) + std::norm(c.alpha_p), WithinRel(0.5 * (1.0 + beta * beta), 1e-13));
        }
    const auto c = lo_coefficients(SynodyneLO(1.02, Angle::degrees(0.0)));
    CHECK_THAT(std::norm(c.alpha_a) / std::norm(c.alpha_p), WithinRel(10201.0, 1e-9));
}

TEST_CASE("LO rejects a non-positive sideband ratio")
{
    CHECK_THROWS_AS(SynodyneLO(0.0, Angle::degrees(10.0)), ValidationError);
    CHECK_THROWS_AS(SynodyneLO(-1.0, Angle::degrees(10.0)), ValidationError);
}

TEST_CASE("shot-noise and correlation factors match the closed forms on a lattice")
{
    for (double beta : {0.2, 0.9, 1.0, 1.02, 2.5, 10.0})
        for (double deg = 2.5; deg < 180.0; deg += 5.0) {
            const double phi = deg * oracle::pi / 180.0;
            const double den = 1.0 + beta * beta - 2.0 * beta * std::cos(2.0 * phi);
            const SynodyneLO lo(beta, Angle::degrees(deg));
            CHECK_THAT(synodyne_shot_noise_factor(lo), WithinRel(2.0 * (1.0 + beta * beta) / den, 1e-12));
            CHECK_THAT(synodyne_correlation_factor(lo), WithinAbs((beta * beta - 1.0) / den, 1e-12 * (1.0 + 1.0 / den)));
        }
}

TEST_CASE("factors approach their large-ratio limits")
{
    const SynodyneLO lo(1e6, Angle::degrees(30.0));
    CHECK_THAT(synodyne_shot_noise_factor(lo), WithinRel(2.0, 1e-5));
    CHECK_THAT(synodyne_correlation_factor(lo), WithinRel(1.0, 1e-5));
}

TEST_CASE("pure amplitude LO carries no mechanical information")
{
    try {
        synodyne_shot_noise_factor(SynodyneLO(1.0, Angle::degrees(0.0)));
        FAIL("expected a domain error");
    } catch (const DomainError& e) {
        CHECK(e.fault() == DomainFault::divergence);
    }
}

TEST_CASE("synodyne PSD agrees with the closed-form oracle")
{
    const Detection det(0.35);
    const auto mode = mode_with(1.29);
    for (double rho : {-7.0, -1.0, 0.0, 0.5, 4.0})
        for (double beta : {0.5, 1.02, 2.0})
            for (double deg : {0.0, 5.8, 45.0, 90.0, 150.0}) {
                const double phi = deg * oracle::pi / 180.0;
                const auto got =
                    synodyne_psd(Detuning{rho}, NormalizedPower{14.0}, SynodyneLO(beta, Angle::degrees(deg)), det, mode);
                CHECK_THAT(got.total, WithinRel(oracle::synodyne_displacement(rho, 14.0, beta, phi, 0.35, 1.29), 1e-11));
            }
}

TEST_CASE("balanced synodyne is homodyne without the correlation term")
{
    const Detection det(0.35);
    const auto mode = mode_with(1.29);
    for (double rho : make_grid(-20.0, 20.0, 41))
        for (double deg : {10.0, 45.0, 90.0, 135.0}) {
            const NormalizedPower p{14.0};
            const auto h = displacement_psd(Detuning{rho}, p, Angle::degrees(deg), det, mode);
            const auto s = synodyne_psd(Detuning{rho}, p, SynodyneLO(1.0, Angle::degrees(deg)), det, mode);
            CHECK_THAT(s.total, WithinAbs(h.total - h.s_corr, 1e-12 * h.total));
            CHECK_THAT(s.s_corr, WithinAbs(0.0, 1e-15));
        }
}

TEST_CASE("optimal sideband ratio on the amplitude branch at p = 100")
{
    const auto b = beta_opt(Detuning{0.0}, NormalizedPower{100.0}, Detection(1.0));
    CHECK(b.branch == SynodyneBranch::amplitude);
    CHECK_THAT(b.beta, WithinAbs(101.0 / 99.0, 1e-12));
    CHECK(b.phi().degrees() == 0.0);
}

TEST_CASE("optimal sideband ratio on the phase branch matches a numerical search")
{
    const auto b = beta_opt(Detuning{0.0}, NormalizedPower{0.5}, Detection(1.0));
    CHECK(b.branch == SynodyneBranch::phase);
    CHECK_THAT(b.beta, WithinRel(3.0, 1e-15));
    const double beta_num = oracle::log_argmin(
        [](double beta) { return oracle::synodyne_displacement(0.0, 0.5, beta, oracle::pi / 2, 1.0, 0.0); }, -3.0, 3.0);
    CHECK_THAT(beta_num, WithinRel(3.0, 1e-6));
}

TEST_CASE("weak measurement drives the ratio toward a balanced LO")
{
    const auto b = beta_opt(Detuning{0.0}, NormalizedPower{1e-9}, Detection(1.0));
    CHECK_THAT(b.beta, WithinAbs(1.0, 1e-8));
}

TEST_CASE("branch pole and branch mismatch are errors")
{
    try {
        beta_opt(Detuning{0.0}, NormalizedPower{1.0}, Detection(1.0));
        FAIL("expected a pole");
    } catch (const DomainError& e) {
        CHECK(e.fault() == DomainFault::pole);
    }
    CHECK_THROWS_AS(beta_opt(Detuning{0.0}, NormalizedPower{100.0}, Detection(1.0), SynodyneBranch::phase), DomainError);
    CHECK_NOTHROW(beta_opt(Detuning{0.0}, NormalizedPower{100.0}, Detection(1.0), SynodyneBranch::amplitude));
    CHECK_THROWS_AS(beta_opt(Detuning{0.0}, NormalizedPower{0.0}, Detection(1.0)), DomainError);
}

TEST_CASE("variational synodyne is the minimum over ratio and phase")
{
    for (double eps : {0.35, 1.0})
        for (double rho : {-6.0, -0.5, 0.0, 0.7, 3.0})
            for (double p : {0.3, 5.0, 100.0}) {
                const Detection det(eps);
                const double x = eps * p * oracle::chi_sq(rho);
                if (std::abs(x - 1.0) < 1e-3)
                    continue;
                const double got = synodyne_variational(Detuning{rho}, NormalizedPower{p}, det, mode_with(0.0));
                const double phi = x < 1.0 ? oracle::pi / 2 : 0.0;
                CHECK_THAT(got, WithinRel(best_over_beta(rho, p, phi, eps), 1e-9));
                for (double beta = 0.25; beta < 8.0; beta *= 1.3)
                    for (double deg = 1.0; deg < 180.0; deg += 11.0)
                        CHECK(got <= oracle::synodyne_displacement(rho, p, beta, deg * oracle::pi / 180.0, eps, 0.0) *
                                         (1.0 + 1e-12));
            }
}

TEST_CASE("variational synodyne is locally optimal in the ratio")
{
    const Detection det(0.35);
    const auto mode = mode_with(1.29);
    for (double rho : {-3.0, 0.0, 2.0})
        for (double p : {1.0, 40.0}) {
            const auto b = beta_opt(Detuning{rho}, NormalizedPower{p}, det);
            const double best = synodyne_variational(Detuning{rho}, NormalizedPower{p}, det, mode);
            CHECK_THAT(synodyne_psd(Detuning{rho}, NormalizedPower{p}, b.lo(), det, mode).total, WithinRel(best, 1e-12));
            for (double d : {1e-3, 1e-2, -1e-3, -1e-2}) {
                const SynodyneLO lo(b.beta + d, b.phi());
                CHECK(best <= synodyne_psd(Detuning{rho}, NormalizedPower{p}, lo, det, mode).total);
            }
        }
}

TEST_CASE("synodyne beats homodyne only inside the linewidth at unit efficiency")
{
    const Detection det(1.0);
    const auto mode = mode_with(0.0);
    const NormalizedPower p{100.0};
    const auto syn = [&](double r) { return synodyne_variational(Detuning{r}, p, det, mode); };
    const auto hom = [&](double r) { return psd_at_phi_opt(Detuning{r}, p, det, mode); };
    CHECK(syn(0.5) < hom(0.5));
    CHECK(syn(2.0) > hom(2.0));
    for (double r : make_grid(1.0, 30.0, 59))
        CHECK(hom(r) <= syn(r) * (1.0 + 1e-12));
    for (double r : make_grid(0.0, 0.99, 34))
        CHECK(syn(r) < hom(r));
}

TEST_CASE("synodyne quantum limit")
{
    const auto cold = mode_with(0.0);
    const auto limit = synodyne_ql(Detuning{0.0}, Detection(1.0), cold);
    CHECK(limit.saturated);
    CHECK(limit.value == 1.0);
    CHECK(synodyne_p_opt(Detuning{0.0}, Detection(1.0)).saturated);

    for (double rho : {1.0, 2.0, 7.5}) {
        const auto l = synodyne_ql(Detuning{rho}, Detection(1.0), cold);
        CHECK_FALSE(l.saturated);
        CHECK_THAT(l.value - oracle::chi_sq(rho), WithinRel(rho * oracle::chi_sq(rho), 1e-12));
    }

    const auto lossy = synodyne_ql(Detuning{0.0}, Detection(0.35), cold);
    CHECK_THAT(lossy.value - 1.0, WithinRel(std::sqrt(0.65 / 0.35), 1e-12));
    // At eps = 0.35 the optimal power sits on the phase branch, so search both.
    const auto both = [](double p) {
        return std::min(best_over_beta(0.0, p, 0.0, 0.35), best_over_beta(0.0, p, oracle::pi / 2, 0.35));
    };
    const double brute = oracle::log_argmin(both, -1.0, 3.0);
    CHECK_THAT(both(brute) - 1.0, WithinRel(std::sqrt(0.65 / 0.35), 1e-7));
    const auto popt = synodyne_p_opt(Detuning{0.0}, Detection(0.35));
    CHECK_THAT(popt.p.value, WithinRel(brute, 1e-4));
    CHECK_THAT(synodyne_variational(Detuning{0.0}, popt.p, Detection(0.35), cold), WithinRel(lossy.value, 1e-12));
}

TEST_CASE("baseband detuning converter")
{
    const MechanicalMode mode(angular_from_hz(1.596e6), angular_from_hz(340.0), 0.0);
    const double lab = mode.omega_m() + angular_from_hz(170.0);
    CHECK_THAT(synodyne_detuning(baseband_frequency(lab, mode), mode).value, WithinRel(1.0, 1e-9));
}

TEST_CASE("on-resonance force response depends on the force phase")
{
    const MechanicalMode mode(100.0, 1.0, 0.0);
    const auto grid = make_grid(-10.0, 10.0, 201);
    const SynodyneLO lo(1.0, Angle::degrees(90.0));
    const auto at = [&](double phi_f) {
        const auto r = synodyne_force_response(grid, {2.0, 100.0, phi_f}, lo, mode);
        return r[100];
    };
    // alpha_p is real here, so the null sits at phi_f = 90 deg and the peak at 0.
    CHECK_THAT(at(oracle::pi / 2), WithinAbs(0.0, 1e-15));
    const double bin = 0.1;
    CHECK_THAT(at(0.0), WithinRel(0.25 * 4.0 / 2.0 / bin, 1e-12));
    CHECK(at(0.3) < at(0.0));
    CHECK(at(0.3) > at(oracle::pi / 2));
}

TEST_CASE("off-resonance force response is independent of the force phase")
{
    const MechanicalMode mode(100.0, 1.0, 0.0);
    const auto grid = make_grid(-10.0, 10.0, 201);
    const SynodyneLO lo(1.3, Angle::degrees(70.0));
    const auto ref = synodyne_force_response(grid, {2.0, 103.0, 0.0}, lo, mode);
    for (double phi_f : {0.4, 1.7, 3.0}) {
        const auto r = synodyne_force_response(grid, {2.0, 103.0, phi_f}, lo, mode);
        for (std::size_t i = 0; i < r.size(); ++i)
            CHECK_THAT(r[i], WithinAbs(ref[i], 1e-12 * ref[130]));
    }
    CHECK(ref[130] > 0.0);
    CHECK(ref[70] > 0.0);
}

TEST_CASE("cavity-symmetry check on the readout")
{
    const MechanicalMode mode(angular_from_hz(1.596e6), angular_from_hz(340.0), 1.29);
    const OpticalCavity cav(angular_from_hz(2.5e6));
    CHECK(SynodyneReadout::cavity_asymmetry(mode, cav, 1.0) < SynodyneReadout::max_asymmetry);
    const SynodyneReadout readout(mode, cav, Detection(0.35), 1.0);
    CHECK(readout.variational(Detuning{0.5}, NormalizedPower{14.0}) ==
          synodyne_variational(Detuning{0.5}, NormalizedPower{14.0}, Detection(0.35), mode));
    CHECK_THROWS_AS(readout.variational(Detuning{2.0}, NormalizedPower{14.0}), DomainError);
    CHECK_THROWS_AS(SynodyneReadout(mode, cav, Detection(0.35), 10.0), DomainError);
    // A much wider cavity passes at the same span.
    CHECK_NOTHROW(SynodyneReadout(mode, OpticalCavity(angular_from_hz(2.5e9)), Detection(0.35), 10.0));
}
