#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "gwpd/cli.hpp"

using namespace gwpd;
namespace fs = std::filesystem;

namespace {

const std::string cli_path = GWPD_CLI_PATH;
const fs::path demos = GWPD_DEMOS_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(::testing::TempDir()) / "gwpd_cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const fs::path& log = {}) {
    std::string cmd = cli_path + " " + args + " --quiet";
    if (!log.empty()) cmd += " 2>" + log.string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.ini";
    std::ofstream(p) << text;
    return p;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::string harmonic_base = R"(
[potential]
kind = harmonic
K = 1

[method]
id = tgwd_local_harmonic

[scheme]
base = TVT
order = 2
dt = 0.01
steps = 100

[initial]
q0 = 1.0
ImA0 = 1.0

[output]
save_every = 7
)";

cli::RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return cli::parse_config(in);
}

} // namespace

TEST(Cli, HarmonicDemoRowCountAndColumns) {
    const fs::path out = scratch("harmonic");
    ASSERT_EQ(run_cli("run --config " + (demos / "configs/harmonic.ini").string() + " --output " + out.string()), 0);
    const std::string csv = slurp(out / "trajectory.csv");
    EXPECT_EQ(count_lines(csv), 6280u / 10u + 1u + 1u);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,q_0,p_0,ReA_00,ImA_00,Re_gamma,Im_gamma,norm,E,E_eff");
    const nlohmann::json j = nlohmann::json::parse(slurp(out / "summary.json"));
    for (const char* key : {"method", "scheme", "dt", "steps", "norm_drift", "E_drift", "E_eff_drift", "wall_time_seconds"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_FALSE(j.contains("reversibility_residual"));
    EXPECT_LT(j["norm_drift"].get<double>(), 1e-12);
}

TEST(Cli, RowCountIsStepsOverSaveEveryPlusOne) {
    const fs::path dir = scratch("rows");
    const fs::path cfg = write_config(dir, harmonic_base);
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --output " + (dir / "out").string()), 0);
    EXPECT_EQ(count_lines(slurp(dir / "out/trajectory.csv")), 100u / 7u + 1u + 1u);
}

TEST(Cli, IdenticalConfigGivesIdenticalBytes) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const std::string cfg = (demos / "configs/morse_single_quartic.ini").string();
    ASSERT_EQ(run_cli("run --config " + cfg + " --output " + a.string()), 0);
    ASSERT_EQ(run_cli("run --config " + cfg + " --output " + b.string()), 0);
    EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
}

TEST(Cli, MorseSingleQuarticDemoMeetsEffectiveEnergyBound) {
    const fs::path out = scratch("morse_sq");
    ASSERT_EQ(run_cli("run --config " + (demos / "configs/morse_single_quartic.ini").string() + " --output " +
                      out.string()),
              0);
    const nlohmann::json j = nlohmann::json::parse(slurp(out / "summary.json"));
    EXPECT_LT(j["E_eff_drift"].get<double>(), j["E_eff_drift_bound"].get<double>());
    EXPECT_TRUE(j["within_bounds"].get<bool>());
    EXPECT_LT(j["reversibility_residual"].get<double>(), 1e-10);
}

TEST(Cli, FrozenMethodWithChirpedWidthIsConfigError) {
    const fs::path dir = scratch("fgwd");
    std::string text = harmonic_base;
    text.replace(text.find("tgwd_local_harmonic"), 19, "fgwd_variational");
    text.replace(text.find("ImA0 = 1.0"), 10, "ImA0 = 1.0\nReA0 = 0.3");
    const fs::path cfg = write_config(dir, text);
    EXPECT_EQ(run_cli("run --config " + cfg.string(), dir / "err.txt"), 2);
    EXPECT_NE(slurp(dir / "err.txt").find("Re A0 = 0"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const fs::path dir = scratch("config_errors");
    const std::vector<std::pair<std::string, std::string>> edits{
        {"K = 1", "K = 1\nomega = 2"},
        {"[output]", "[outputs]"},
        {"order = 2", "order = 3"},
        {"kind = harmonic", "kind = anharmonic"},
        {"dt = 0.01", "dt = fast"},
        {"id = tgwd_local_harmonic", "id = tgwd_local_quartic"},
    };
    for (const auto& [from, to] : edits) {
        std::string text = harmonic_base;
        text.replace(text.find(from), from.size(), to);
        EXPECT_EQ(run_cli("run --config " + write_config(dir, text).string() + " --output " + dir.string()), 2) << to;
    }
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.ini").string()), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, BranchCrossingExitsThree) {
    const fs::path dir = scratch("numerical");
    const fs::path cfg = write_config(dir, R"(
[potential]
kind = polynomial
terms =

[method]
id = tgwd_variational

[scheme]
base = TVT
order = 2
dt = 0.6
steps = 10

[initial]
ReA0 = -2.0
ImA0 = 0.05
)");
    EXPECT_EQ(run_cli("run --config " + cfg.string() + " --output " + dir.string(), dir / "err.txt"), 3);
    EXPECT_NE(slurp(dir / "err.txt").find("step 1"), std::string::npos);
}

TEST(Cli, ReverseWritesResidual) {
    const fs::path dir = scratch("reverse");
    ASSERT_EQ(run_cli("reverse --config " + (demos / "configs/morse_hagedorn.ini").string() + " --output " + dir.string()),
              0);
    const nlohmann::json j = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_LT(j["reversibility_residual"].get<double>(), 1e-10);
}

TEST(Cli, ConvergeReportsSecondOrderForTvt) {
    const fs::path dir = scratch("converge");
    std::string text = harmonic_base;
    text.replace(text.find("steps = 100"), 11, "steps = 10");
    text.replace(text.find("dt = 0.01"), 9, "dt = 0.1");
    const fs::path cfg = write_config(dir, text);
    ASSERT_EQ(run_cli("converge --config " + cfg.string() + " --dt-list 0.1,0.05,0.025,0.0125 --output " + dir.string()),
              0);
    std::istringstream csv(slurp(dir / "convergence.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "dt,error,fitted_slope");
    std::vector<std::vector<double>> rows;
    while (std::getline(csv, line)) rows.push_back(cli::detail::parse_list("row", line));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_NEAR(rows[0][2], 2.0, 0.1);
    EXPECT_EQ(run_cli("converge --config " + cfg.string() + " --dt-list 0.03 --output " + dir.string()), 2);
}

TEST(Cli, CompareGridStartsAtUnitFidelity) {
    const fs::path dir = scratch("grid");
    ASSERT_EQ(run_cli("compare-grid --config " + (demos / "configs/grid_harmonic.ini").string() + " --output " +
                      dir.string()),
              0);
    std::istringstream csv(slurp(dir / "fidelity.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,fidelity");
    double worst = 1.0;
    bool first = true;
    while (std::getline(csv, line)) {
        const std::vector<double> v = cli::detail::parse_list("row", line);
        if (first) EXPECT_NEAR(v[1], 1.0, 1e-12);
        first = false;
        worst = std::min(worst, v[1]);
    }
    EXPECT_GT(worst, 1.0 - 1e-6);
}

TEST(Cli, ListMethodsAndEmitCoefficients) {
    const fs::path dir = scratch("coeffs");
    ASSERT_EQ(run_cli("list-methods > " + (dir / "methods.csv").string()), 0);
    EXPECT_EQ(count_lines(slurp(dir / "methods.csv")), all_methods.size() + 1);

    const fs::path cfg = demos / "configs/morse_single_quartic.ini";
    ASSERT_EQ(run_cli("run --config " + cfg.string() + " --output " + dir.string()), 0);
    ASSERT_EQ(run_cli("list-methods --emit-coeffs --config " + cfg.string() + " --in " +
                      (dir / "trajectory.csv").string() + " --output " + dir.string()),
              0);
    std::istringstream traj(slurp(dir / "trajectory.csv")), coeffs(slurp(dir / "coefficients.csv"));
    std::string tl, cl;
    std::getline(traj, tl);
    std::getline(coeffs, cl);
    EXPECT_EQ(cl, "t,V0,V1_0,V2_00");
    const cli::RunConfig rc = cli::load_config(cfg);
    const Method m = rc.make_method();
    std::size_t rows = 0;
    while (std::getline(traj, tl) && std::getline(coeffs, cl)) {
        const std::vector<double> t = cli::detail::parse_list("t", tl), c = cli::detail::parse_list("c", cl);
        const EffectiveCoefficients e = m(Vec::Constant(1, t[1]), Mat::Constant(1, 1, t[4]));
        EXPECT_EQ(c[0], t[0]);
        EXPECT_NEAR(c[1], e.V0, 1e-15);
        EXPECT_NEAR(c[2], e.V1(0), 1e-15);
        EXPECT_NEAR(c[3], e.V2(0, 0), 1e-15);
        ++rows;
    }
    EXPECT_EQ(rows, 5000u / 50u + 1u);
}

TEST(ParseConfig, DefaultsAndBroadcasting) {
    const cli::RunConfig c = parse(R"(
[setup]
dim = 2
hbar = 0.5
mass = 2

[potential]
kind = morse
De = 2
a = 0.5, 0.7

[method]
id = tgwd_single_hessian

[scheme]
dt = 0.01
steps = 5

[initial]
q0 = 0.1, 0.2
ImA0 = 1, 0.1, 0.1, 2
)");
    EXPECT_EQ(c.setup.dim(), 2);
    EXPECT_EQ(c.setup.hbar(), 0.5);
    EXPECT_EQ(c.setup.mass()(1, 1), 2.0);
    EXPECT_EQ(c.scheme.base, BaseScheme::VTV);
    EXPECT_EQ(c.scheme.order, 2);
    EXPECT_EQ(c.model.morse_params()->a(1), 0.7);
    EXPECT_EQ(c.initial.A(0, 1), cplx(0.0, 0.1));
    EXPECT_NEAR(norm(c.initial, c.setup), 1.0, 1e-14);
    EXPECT_FALSE(c.hagedorn);
}

TEST(ParseConfig, HagedornInitialBlock) {
    const cli::RunConfig c = parse(R"(
[potential]
kind = quartic_double_well
quartic = 1
[method]
id = tgwd_variational
[scheme]
dt = 0.01
steps = 5
parametrization = hagedorn
[initial]
ReQ0 = 1
ImQ0 = 0.5
ImP0 = 1
S0 = 0.25
)");
    ASSERT_TRUE(c.initial_hagedorn);
    EXPECT_EQ(c.initial_hagedorn->Q(0, 0), cplx(1.0, 0.5));
    EXPECT_NEAR(std::abs(c.initial.A(0, 0) - cplx(0.4, 0.8)), 0.0, 1e-15);
}

TEST(ParseConfig, InconsistentInitialBlocksRejected) {
    const std::string head = "[potential]\nkind = harmonic\nK = 1\n[method]\nid = tgwd_variational\n"
                             "[scheme]\ndt = 0.01\nsteps = 5\n";
    EXPECT_THROW(parse(head + "[initial]\nReQ0 = 1\nImP0 = 1\n"), ConfigError);
    EXPECT_THROW(parse(head + "parametrization = hagedorn\n[initial]\nReQ0 = 1\nImP0 = 1\nImA0 = 1\n"), ConfigError);
    EXPECT_THROW(parse(head + "parametrization = hagedorn\n[initial]\nImA0 = 1\nnormalize = false\n"), InvalidState);
    EXPECT_THROW(parse(head + "[initial]\nq0 = 1\n"), ConfigError);
    EXPECT_THROW(parse(head + "[initial]\nImA0 = -1\n"), InvalidState);
    EXPECT_THROW(parse(head + "[initial]\nImA0 = 1\nq0 = 1, 2\n"), ConfigError);
    EXPECT_NO_THROW(parse(head + "[initial]\nImA0 = 1 # unit width\n"));
}

TEST(ParseConfig, PolynomialTermsAndUserTable) {
    const fs::path dir = scratch("table");
    {
        std::ofstream table(dir / "v.txt");
        table << "# V(q) = q^2 / 2 on [-4, 4]\n";
        for (int i = 0; i <= 80; ++i) table << 0.5 * std::pow(-4.0 + 0.1 * i, 2) << '\n';
    }
    std::ofstream(dir / "run.ini") << "[potential]\nkind = user_table\nfile = v.txt\nqmin = -4\nqmax = 4\n"
                                      "[method]\nid = tgwd_local_harmonic\n[scheme]\ndt = 0.01\nsteps = 1\n"
                                      "[initial]\nImA0 = 1\n";
    const cli::RunConfig t = cli::load_config(dir / "run.ini");
    EXPECT_NEAR(t.model.hessian(Vec::Constant(1, 0.3))(0, 0), 1.0, 1e-6);
    fs::remove(dir / "v.txt");
    EXPECT_THROW(cli::load_config(dir / "run.ini"), ConfigError);

    const cli::RunConfig p = parse("[setup]\ndim = 2\n[potential]\nkind = polynomial\nterms = 0.5 2 0; 0.25 0 4; 1 1 1\n"
                                   "[method]\nid = tgwd_variational\n[scheme]\ndt = 0.01\nsteps = 1\n"
                                   "[initial]\nImA0 = 1\n");
    EXPECT_NEAR(p.model.value(Vec{{2.0, 1.0}}), 2.0 + 0.25 + 2.0, 1e-15);
    EXPECT_THROW(parse("[potential]\nkind = polynomial\nterms = 1 2 3\n[method]\nid = tgwd_variational\n"
                       "[scheme]\ndt = 0.01\nsteps = 1\n[initial]\nImA0 = 1\n"),
                 ConfigError);
}
