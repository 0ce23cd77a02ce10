// gwpd: Gaussian wavepacket dynamics from an INI config.
//
//   gwpd run          --config run.ini [--output DIR] [--quiet]
//   gwpd converge     --config run.ini --dt-list "0.1,0.05,0.025" [--output DIR]
//   gwpd reverse      --config run.ini [--output DIR]
//   gwpd compare-grid --config run.ini [--output DIR]
//   gwpd list-methods [--emit-coeffs --config run.ini --in trajectory.csv]
//
// Exit status: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include "gwpd/cli.hpp"

namespace {

using namespace gwpd;

struct Options {
    std::string config;
    std::string output;
    std::string dt_list;
    std::string input;
    bool quiet = false;
    bool emit_coeffs = false;
};

cli::fs::path output_dir(const Options& o, const cli::RunConfig& cfg) {
    return o.output.empty() ? cfg.output_dir : cli::fs::path(o.output);
}

int dispatch(const std::string& cmd, const Options& o) {
    std::ostream& log = std::cout;
    if (cmd == "list-methods") {
        if (!o.emit_coeffs) {
            cli::list_methods(std::cout);
            return cli::ok;
        }
        if (o.config.empty() || o.input.empty()) throw ConfigError("--emit-coeffs needs --config and --in");
        const cli::RunConfig cfg = cli::load_config(o.config);
        std::ifstream in(o.input);
        if (!in) throw ConfigError("cannot open " + o.input);
        if (o.output.empty()) {
            cli::emit_coefficients(cfg, in, std::cout);
        } else {
            std::ofstream out = cli::open_output(cli::fs::path(o.output) / "coefficients.csv");
            cli::emit_coefficients(cfg, in, out);
        }
        return cli::ok;
    }

    const cli::RunConfig cfg = cli::load_config(o.config);
    const cli::fs::path dir = output_dir(o, cfg);
    if (cmd == "run") {
        const cli::Summary s = cli::run(cfg, dir);
        if (!o.quiet)
            log << s.method << ' ' << s.scheme << ": norm drift " << cli::fmt(s.norm_drift) << ", E drift "
                << cli::fmt(s.E_drift) << ", E_eff drift " << cli::fmt(s.E_eff_drift) << " -> " << dir.string() << '\n';
    } else if (cmd == "reverse") {
        const cli::Summary s = cli::reverse(cfg, dir);
        if (!o.quiet) log << "reversibility residual " << cli::fmt(*s.reversibility_residual) << '\n';
    } else if (cmd == "converge") {
        if (o.dt_list.empty()) throw ConfigError("converge needs --dt-list");
        const cli::ConvergenceResult r =
            cli::converge(cfg, cli::detail::parse_list("--dt-list", o.dt_list), dir);
        if (!o.quiet) {
            for (const cli::ConvergenceRow& row : r.rows)
                log << "dt " << cli::fmt(row.dt) << "  error " << cli::fmt(row.error) << '\n';
            log << "fitted slope " << cli::fmt(r.slope) << (r.analytic_reference ? " (analytic reference)" : "")
                << '\n';
        }
    } else if (cmd == "compare-grid") {
        const std::vector<double> f = cli::compare_grid(cfg, dir);
        if (!o.quiet) log << "minimum fidelity " << cli::fmt(*std::min_element(f.begin(), f.end())) << '\n';
    }
    return cli::ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian wavepacket dynamics"};
    app.require_subcommand(1);
    Options o;
    auto with_config = [&](CLI::App* sub, bool required) {
        auto* c = sub->add_option("--config", o.config, "INI config file");
        if (required) c->required()->check(CLI::ExistingFile);
        sub->add_option("--output", o.output, "output directory (overrides [output] directory)");
        sub->add_flag("--quiet", o.quiet, "suppress progress output");
    };
    with_config(app.add_subcommand("run", "propagate and write trajectory.csv, summary.json"), true);
    auto* conv = app.add_subcommand("converge", "error against step size, writes convergence.csv");
    with_config(conv, true);
    conv->add_option("--dt-list", o.dt_list, "comma-separated step sizes")->required();
    with_config(app.add_subcommand("reverse", "forward then backward, writes summary.json"), true);
    with_config(app.add_subcommand("compare-grid", "fidelity against the split-operator grid solution"), true);
    auto* lm = app.add_subcommand("list-methods", "list method ids, or evaluate coefficients along a trajectory");
    with_config(lm, false);
    lm->add_flag("--emit-coeffs", o.emit_coeffs, "write t, V0, V1, V2 for each trajectory row");
    lm->add_option("--in", o.input, "trajectory.csv to read");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::config_error;
    }

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return dispatch(cmd, o);
    } catch (const NumericalFailure& e) {
        std::cerr << "gwpd: numerical failure at step " << e.step() << ": " << e.what() << '\n';
        return cli::numerical_failure;
    } catch (const BranchError& e) {
        std::cerr << "gwpd: numerical failure: " << e.what() << '\n';
        return cli::numerical_failure;
    } catch (const Error& e) {
        std::cerr << "gwpd: configuration error: " << e.what() << '\n';
        return cli::config_error;
    } catch (const std::exception& e) {
        std::cerr << "gwpd: " << e.what() << '\n';
        return 1;
    }
}
