// qnoise command-line front end.
//
// Exit codes: 0 success, 2 validation error, 3 domain error, 4 I/O error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <qnoise/qnoise.hpp>

namespace {

constexpr int exit_validation = 2;
constexpr int exit_domain = 3;
constexpr int exit_io = 4;

struct GlobalOptions
{
    std::string config;
    std::string out;
    std::string format = "csv";
    bool strict = false;
    unsigned workers = 0;
};

qnoise::SweepSpec load_spec(const GlobalOptions& g)
{
    if (g.config.empty())
        throw qnoise::ValidationError("--config <path> is required for this command");
    std::vector<std::string> warnings;
    auto spec = qnoise::load_config(g.config, {g.strict}, &warnings);
    for (const auto& w : warnings)
        std::cerr << "warning: " << w << '\n';
    return spec;
}

void write(const qnoise::SpectrumTable& table, const GlobalOptions& g)
{
    const auto format = qnoise::parse_format(g.format);
    if (g.out.empty() || g.out == "-")
        qnoise::emit_table(table, format, std::cout);
    else
        qnoise::emit_table(table, format, g.out);
}

struct CalibrateOptions
{
    std::string red;
    std::string blue;
    bool synthesize = false;
    double n_th = 1.29;
    double gamma_hz = 325.0;
    double a_blue = 0.78;
    double offset = 1.0;
    double center_hz = 1.596e6;
    double span_linewidths = 5.0;
    std::size_t points = 400;
    double noise = 0.0078;
    std::uint64_t seed = 1;
};

void write_calibration(const qnoise::SidebandFit& fit, const GlobalOptions& g)
{
    using qnoise::format_double;
    const auto format = qnoise::parse_format(g.format);
    std::ostringstream body;
    const double n_th = fit.n_th();
    if (format == qnoise::TableFormat::csv) {
        body << "n_th,gamma_hz,a_red,a_blue,offset,residual_rms\n";
        body << format_double(n_th) << ',' << format_double(qnoise::hz_from_angular(fit.gamma_fit)) << ','
             << format_double(fit.a_red) << ',' << format_double(fit.a_blue) << ',' << format_double(fit.offset) << ','
             << format_double(fit.residual_rms) << '\n';
    } else {
        body << "{\"type\":\"calibration\",\"n_th\":" << format_double(n_th)
             << ",\"gamma_hz\":" << format_double(qnoise::hz_from_angular(fit.gamma_fit))
             << ",\"a_red\":" << format_double(fit.a_red) << ",\"a_blue\":" << format_double(fit.a_blue)
             << ",\"offset\":" << format_double(fit.offset) << ",\"residual_rms\":" << format_double(fit.residual_rms)
             << "}\n";
    }
    if (g.out.empty() || g.out == "-") {
        std::cout << body.str();
        return;
    }
    std::ofstream out(g.out, std::ios::binary | std::ios::trunc);
    if (!out)
        throw qnoise::IoError(g.out, "cannot open for writing");
    out << body.str();
    if (!out.flush())
        throw qnoise::IoError(g.out, "write failed");
}

void run_calibrate(const CalibrateOptions& c, const GlobalOptions& g)
{
    if (c.red.empty() || c.blue.empty())
        throw qnoise::ValidationError("calibrate needs --red and --blue spectrum files");
    if (c.synthesize) {
        qnoise::detail::require(c.n_th > 0.0, "--n-th must be > 0");
        qnoise::detail::require(c.gamma_hz > 0.0 && c.span_linewidths > 0.0, "--gamma-hz and --span must be > 0");
        const double gamma = qnoise::angular_from_hz(c.gamma_hz);
        const double center = qnoise::angular_from_hz(c.center_hz);
        const auto grid = qnoise::make_grid(center - c.span_linewidths * gamma, center + c.span_linewidths * gamma,
                                            c.points);
        const double a_red = c.a_blue * (1.0 + 1.0 / c.n_th);
        const auto red = qnoise::synth_sideband_spectrum({c.offset, a_red, center, gamma}, grid, c.noise, c.seed);
        const auto blue =
            qnoise::synth_sideband_spectrum({c.offset, c.a_blue, center, gamma}, grid, c.noise, c.seed + 1);
        qnoise::write_spectrum_csv(c.red, red);
        qnoise::write_spectrum_csv(c.blue, blue);
    }
    const auto red = qnoise::read_spectrum_csv(c.red);
    const auto blue = qnoise::read_spectrum_csv(c.blue);
    write_calibration(qnoise::fit_sidebands(red, blue), g);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum noise budgets for interferometric displacement readout"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Sweep configuration file (key = value)");
    app.add_option("--out", g.out, "Output path (default: stdout)");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
    app.add_flag("--strict", g.strict, "Reject unknown configuration keys");
    app.add_option("--workers", g.workers, "Evaluation threads (0: one per hardware thread)");

    auto* spectrum = app.add_subcommand("spectrum", "Evaluate the configured sweep");
    auto* limits = app.add_subcommand("limits", "SQL and QL curves over the configured grid");
    auto* variational = app.add_subcommand("variational", "Variational homodyne readout over the configured grid");
    auto* synodyne = app.add_subcommand("synodyne", "Synodyne readout over the configured grid");
    bool synodyne_opt = false;
    synodyne->add_flag("--optimal-beta", synodyne_opt, "Choose the sideband ratio per frequency");

    auto* calibrate = app.add_subcommand("calibrate", "Fit red/blue sideband spectra for n_th and linewidth");
    CalibrateOptions cal;
    calibrate->add_option("--red", cal.red, "Red sideband CSV (frequency_hz,psd_shotnoise_units)");
    calibrate->add_option("--blue", cal.blue, "Blue sideband CSV");
    calibrate->add_flag("--synthesize", cal.synthesize, "Write synthetic spectra to --red/--blue before fitting");
    calibrate->add_option("--n-th", cal.n_th, "Synthetic occupation");
    calibrate->add_option("--gamma-hz", cal.gamma_hz, "Synthetic linewidth (FWHM, Hz)");
    calibrate->add_option("--a-blue", cal.a_blue, "Synthetic blue amplitude (shot-noise units)");
    calibrate->add_option("--offset", cal.offset, "Synthetic baseline (shot-noise units)");
    calibrate->add_option("--center-hz", cal.center_hz, "Synthetic line centre (Hz)");
    calibrate->add_option("--span", cal.span_linewidths, "Synthetic half-span in linewidths");
    calibrate->add_option("--points", cal.points, "Synthetic sample count");
    calibrate->add_option("--noise", cal.noise, "Synthetic white-noise sigma (shot-noise units)");
    calibrate->add_option("--seed", cal.seed, "Synthetic noise seed");

    auto* figure = app.add_subcommand("reproduce-figure", "Emit the model curves of a figure");
    std::string figure_id;
    figure->add_option("id", figure_id, "Figure id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_validation;
    }

    try {
        if (*spectrum) {
            write(qnoise::run_sweep(load_spec(g), {g.workers}), g);
        } else if (*limits) {
            write(qnoise::limit_table(load_spec(g)), g);
        } else if (*variational) {
            auto spec = load_spec(g);
            spec.readout = qnoise::Readout::variational;
            write(qnoise::run_sweep(spec, {g.workers}), g);
        } else if (*synodyne) {
            auto spec = load_spec(g);
            spec.readout = synodyne_opt ? qnoise::Readout::synodyne_variational : qnoise::Readout::synodyne;
            write(qnoise::run_sweep(spec, {g.workers}), g);
        } else if (*calibrate) {
            run_calibrate(cal, g);
        } else if (*figure) {
            write(qnoise::reproduce_figure(figure_id), g);
        }
    } catch (const qnoise::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    } catch (const qnoise::DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return exit_domain;
    } catch (const qnoise::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return exit_io;
    }
    return 0;
}
