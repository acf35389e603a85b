#include "klms/cli/commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "klms/cli/config.hpp"
#include "klms/errors.hpp"
#include "klms/experiments.hpp"
#include "klms/theory.hpp"

namespace klms::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
    RunConfig config;
    std::ostream& out;
    std::ostream& err;
};

fs::path prepare_output(const RunConfig& c) {
    const fs::path dir(c.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + c.out_dir + "': " + ec.message());
    std::ofstream echo(dir / "resolved_config.ini");
    if (!echo) throw IoError("cannot write to output directory '" + c.out_dir + "'");
    write_resolved(echo, c);
    return dir;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot open " + p.string() + " for writing");
    return os;
}

// key = value lines to the report file and stdout
class Report {
public:
    Report(const fs::path& path, std::ostream& echo) : file_(open_out(path)), echo_(echo) {
        file_ << std::setprecision(12);
        echo_ << std::setprecision(12);
    }
    template <class T>
    Report& operator()(const std::string& key, const T& value) {
        file_ << key << " = " << value << '\n';
        echo_ << key << " = " << value << '\n';
        return *this;
    }

private:
    std::ofstream file_;
    std::ostream& echo_;
};

const char* yes_no(bool b) { return b ? "true" : "false"; }

Dictionary dictionary_with_report(const Context& ctx, const fs::path& dir, bool& valid) {
    std::optional<CoherenceSweep> sweep;
    Dictionary dict = build_dictionary(ctx.config, &sweep);
    const auto diag = diagnose(dict, GaussianKernel(ctx.config.sigma));
    write_dictionary((dir / "dictionary.txt").string(), dict);

    Report r(dir / "dictionary_report.txt", ctx.out);
    r("size", diag.size)("dimension", dict.dimension());
    if (sweep) r("mu0", sweep->mu0)("target_size", ctx.config.dictionary.target_size)("sweep_exact", yes_no(sweep->exact));
    else if (ctx.config.dictionary.mu0) r("mu0", *ctx.config.dictionary.mu0);
    r("min_distance", diag.min_distance)("max_coherence", diag.max_coherence)("gram_condition", diag.gram_condition)(
        "near_duplicates", yes_no(diag.near_duplicates));
    valid = !diag.near_duplicates;
    return dict;
}

struct TheoryOutcome {
    ExperimentTheory theory;
    std::optional<PredictedCurve> curve;
    bool mean_stable = false;
    bool ms_stable = false;
};

TheoryOutcome theory_with_report(const Context& ctx, const ExperimentConfig& cfg, const fs::path& dir) {
    TheoryOptions opts;
    opts.samples = ctx.config.theory_samples;
    TheoryOutcome outcome{build_theory(cfg, opts), std::nullopt, false, false};
    const auto& m = outcome.theory.model;
    const double bound = mean_stability_bound(m.rkk());
    const double mean_radius = mean_iteration_radius(m.rkk(), m.step_size());
    const auto ms = ms_stability(m);

    outcome.mean_stable = mean_radius < 1.0;
    outcome.ms_stable = ms.stable;
    std::optional<std::size_t> diverged_at;
    try {
        outcome.curve = predict_curve(outcome.theory.model, outcome.theory.initial_covariance, cfg.horizon);
    } catch (const Diverged& e) {
        if (ms.stable) throw;
        diverged_at = e.iteration();
    }

    Report r(dir / "theory_report.txt", ctx.out);
    r("seed", cfg.seed)("dictionary_size", m.size())("eta", m.step_size())("lambda_max", m.lambda_max())(
        "mean_stability_bound", bound)("mean_iteration_radius", mean_radius)("mean_stable", yes_no(outcome.mean_stable))(
        "G_spectral_radius", ms.spectral_radius)("ms_stable", yes_no(ms.stable))("min_mse", m.optimal().min_mse)(
        "min_mse_stderr", m.optimal().min_mse_stderr)("output_power", m.optimal().output_power)(
        "theory_samples", m.optimal().samples);
    if (ms.stable) r("steady_state_mse", outcome.curve->steady_state_mse);
    else r("steady_state_mse", "undefined");
    if (outcome.curve) {
        auto os = open_out(dir / "predicted_curve.csv");
        write_predicted_curve(os, *outcome.curve);
        r("predicted_curve", "predicted_curve.csv");
    } else {
        r("predicted_curve_diverged_at", *diverged_at);
    }
    return outcome;
}

LearningCurve simulate_with_report(const Context& ctx, const ExperimentConfig& cfg, const fs::path& dir) {
    const auto curve = monte_carlo(cfg, ctx.config.runs);
    {
        auto os = open_out(dir / "learning_curve.csv");
        write_learning_curve(os, curve);
    }
    Report r(dir / "simulate_report.txt", ctx.out);
    r("seed", cfg.seed)("runs", curve.runs)("horizon", curve.horizon)("steady_state_mse", curve.steady_state())(
        "steady_state_stderr", curve.steady_state_stderr())("learning_curve", "learning_curve.csv");
    return curve;
}

double steady_state_from_report(const std::string& path) {
    const IniFile f = IniFile::load(path);
    const auto v = f.get("steady_state_mse");
    if (!v || *v == "undefined") return std::numeric_limits<double>::quiet_NaN();
    try {
        return std::stod(*v);
    } catch (const std::logic_error&) {
        throw ConfigError("malformed steady_state_mse in " + path);
    }
}

int cmd_dict(const Context& ctx) {
    const auto dir = prepare_output(ctx.config);
    bool valid = true;
    dictionary_with_report(ctx, dir, valid);
    if (!valid) {
        ctx.err << "error: dictionary has near-duplicate centers (coherence > " << near_duplicate_coherence << ")\n";
        return exit_code::config;
    }
    return exit_code::ok;
}

int cmd_theory(const Context& ctx) {
    const auto dir = prepare_output(ctx.config);
    const auto cfg = experiment_config(ctx.config, build_dictionary(ctx.config));
    const auto t = theory_with_report(ctx, cfg, dir);
    if (!t.mean_stable || !t.ms_stable) {
        ctx.err << "verdict: unstable (" << (t.mean_stable ? "" : "mean ") << (t.ms_stable ? "" : "mean-square")
                << ")\n";
        return exit_code::failed;
    }
    return exit_code::ok;
}

int cmd_simulate(const Context& ctx) {
    const auto dir = prepare_output(ctx.config);
    const auto cfg = experiment_config(ctx.config, build_dictionary(ctx.config));
    simulate_with_report(ctx, cfg, dir);
    return exit_code::ok;
}

int cmd_compare(const Context& ctx) {
    const auto dir = prepare_output(ctx.config);
    const auto& c = ctx.config;
    LearningCurve curve;
    PredictedCurve predicted;
    if (!c.empirical_csv.empty()) {
        std::ifstream e(c.empirical_csv), t(c.theory_csv);
        curve = read_learning_curve(e);
        predicted = read_predicted_curve(t);
        if (!c.theory_report.empty()) predicted.steady_state_mse = steady_state_from_report(c.theory_report);
    } else {
        const auto cfg = experiment_config(c, build_dictionary(c));
        auto t = theory_with_report(ctx, cfg, dir);
        if (!t.curve) throw Unstable("theory model is not mean-square stable", t.theory.model.spectral_radius());
        predicted = std::move(*t.curve);
        curve = simulate_with_report(ctx, cfg, dir);
    }
    const auto report = compare(curve, predicted, c.tolerances);
    curve.mse_theory = predicted.mse;
    {
        auto os = open_out(dir / "comparison.csv");
        write_learning_curve(os, curve);
    }
    {
        auto os = open_out(dir / "comparison_report.txt");
        write_comparison_report(os, report, c.tolerances);
    }
    write_comparison_report(ctx.out, report, c.tolerances);
    return report.pass ? exit_code::ok : exit_code::failed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"KLMS filter simulation and convergence model"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    std::uint64_t seed = 0;
    std::size_t runs = 0, horizon = 0;
    double eta = 0.0, sigma = 0.0;
    std::string out_dir, empirical, theory_csv, theory_report;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--runs", runs, "Monte Carlo runs");
        sub->add_option("--horizon", horizon, "Iterations per run");
        sub->add_option("--eta", eta, "Step size");
        sub->add_option("--sigma", sigma, "Kernel bandwidth");
        sub->add_option("--set", ov.assignments, "Override a config key: section.key=value");
    };
    auto* dict = app.add_subcommand("dict", "Build, validate and write the dictionary");
    auto* theory = app.add_subcommand("theory", "Analytical model report and predicted learning curve");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo learning curve");
    auto* cmp = app.add_subcommand("compare", "Theory against simulation, pass/fail report");
    for (auto* s : {dict, theory, simulate, cmp}) add_common(s);
    cmp->add_option("--empirical", empirical, "Empirical learning curve CSV");
    cmp->add_option("--theory", theory_csv, "Predicted curve CSV");
    cmp->add_option("--theory-report", theory_report, "Theory report carrying steady_state_mse");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::ok : exit_code::config;
    }

    auto* sub = app.get_subcommands().front();
    auto given = [&](const char* name) { return sub->count(name) > 0; };
    if (given("--seed")) ov.seed = seed;
    if (given("--runs")) ov.runs = runs;
    if (given("--horizon")) ov.horizon = horizon;
    if (given("--eta")) ov.eta = eta;
    if (given("--sigma")) ov.sigma = sigma;
    if (given("--out")) ov.out_dir = out_dir;
    if (sub == cmp) {
        if (cmp->count("--empirical")) ov.assignments.push_back("compare.empirical=" + empirical);
        if (cmp->count("--theory")) ov.assignments.push_back("compare.theory=" + theory_csv);
        if (cmp->count("--theory-report")) ov.assignments.push_back("compare.theory_report=" + theory_report);
    }

    try {
        const IniFile file = config_path.empty() ? IniFile{} : IniFile::load(config_path);
        Context ctx{resolve(file, ov), out, err};
        if (sub == dict) return cmd_dict(ctx);
        if (sub == theory) return cmd_theory(ctx);
        if (sub == simulate) return cmd_simulate(ctx);
        return cmd_compare(ctx);
    } catch (const Diverged& e) {
        err << "error: " << e.what();
        if (e.run() != Diverged::npos) err << " [run " << e.run() << ", iteration " << e.iteration() << "]";
        err << '\n';
        return exit_code::numerical;
    } catch (const Unstable& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::numerical;
    } catch (const SingularMatrix& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::numerical;
    } catch (const IllConditioned& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::numerical;
    } catch (const NonFinite& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::numerical;
    } catch (const Error& e) {
        // configuration, IO, horizon mismatch, invalid arguments
        err << "error: " << e.what() << '\n';
        return exit_code::config;
    }
}

}  // namespace klms::cli
