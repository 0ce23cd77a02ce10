#include <gtest/gtest.h>

#include "gwpd/integrators.hpp"
#include "gwpd/reference.hpp"
#include "oracles.hpp"

using namespace gwpd;

namespace {

GaussianHeller heller1(double q, double p, cplx a, cplx gamma = 0.0) {
    return {Vec::Constant(1, q), Vec::Constant(1, p), CMat::Constant(1, 1, a), gamma};
}

GridSpec grid1(double lo, double hi, int n, double dt, std::size_t steps, std::size_t save_every = 1) {
    return {{lo}, {hi}, {n}, dt, steps, save_every};
}

const PhysicalSetup setup1(1);
const PotentialModel harmonic = PotentialModel::harmonic_1d(1.0, 1.0);
const PotentialModel free_particle = PotentialModel::polynomial(1, {});

} // namespace

TEST(GridSpec, Validation) {
    EXPECT_NO_THROW(grid1(-10, 10, 64, 0.1, 1).validate());
    EXPECT_THROW(grid1(-10, 10, 100, 0.1, 1).validate(), ConfigError);
    EXPECT_THROW(grid1(-10, 10, 32, 0.1, 1).validate(), ConfigError);
    EXPECT_THROW(grid1(10, -10, 64, 0.1, 1).validate(), ConfigError);
    EXPECT_THROW(grid1(-10, 10, 64, -0.1, 1).validate(), ConfigError);
    EXPECT_THROW((GridSpec{{-1, -1, -1}, {1, 1, 1}, {64, 64, 64}, 0.1, 1, 1}).validate(), ConfigError);
    EXPECT_THROW(GridPropagator(harmonic, GridSpec{{-1, -1}, {1, 1}, {64, 64}, 0.1, 1, 1}, setup1), ConfigError);
}

TEST(GridSpec, NodesAndSpacing) {
    const GridSpec g{{-4, 0}, {4, 2}, {64, 128}, 0.1, 1, 1};
    EXPECT_DOUBLE_EQ(g.spacing(0), 0.125);
    EXPECT_DOUBLE_EQ(g.spacing(1), 2.0 / 128);
    EXPECT_EQ(g.size(), 64u * 128u);
    EXPECT_DOUBLE_EQ(g.node(1)(1), 2.0 / 128);
    EXPECT_DOUBLE_EQ(g.node(128)(0), -4 + 0.125);
}

TEST(Grid, SampledNormalizedStateHasUnitNorm) {
    const GaussianHeller s = normalize_initial(heller1(0.5, 1.0, cplx(0.3, 1.2)), setup1);
    const GridSpec g = grid1(-12, 12, 512, 0.01, 1);
    EXPECT_NEAR(grid_norm(sample_gaussian_on_grid(s, g, setup1), g), 1.0, 1e-12);
    EXPECT_LT(edge_density(sample_gaussian_on_grid(s, g, setup1), g), 1e-20);
}

TEST(Grid, HarmonicGroundStateIsStationary) {
    const GaussianHeller s = normalize_initial(heller1(0, 0, I), setup1);
    const GridSpec g = grid1(-10, 10, 256, 0.01, 1000, 1000);
    const GridPropagator prop(harmonic, g, setup1);
    const std::vector<GridField> frames = prop.propagate(sample_gaussian_on_grid(s, g, setup1));
    ASSERT_EQ(frames.size(), 2u);
    // the ground state only acquires the phase exp(-i E t / hbar), E = 1/2, up to an O(dt^2) energy shift
    const cplx ov = grid_inner(frames[0], frames[1], g);
    EXPECT_NEAR(std::abs(ov - std::exp(-0.5 * I * 10.0)), 0.0, 1e-4);
    EXPECT_NEAR(std::abs(ov), 1.0, 1e-10);
}

TEST(Grid, CoherentStateRecurs) {
    const GaussianHeller s = normalize_initial(heller1(2.0, 0.0, I), setup1);
    const GridSpec g = grid1(-12, 12, 256, 2 * pi / 2000, 2000, 2000);
    const std::vector<GridField> frames = GridPropagator(harmonic, g, setup1).propagate(sample_gaussian_on_grid(s, g, setup1));
    EXPECT_GT(std::norm(grid_inner(frames[0], frames[1], g)), 1.0 - 1e-8);
}

TEST(Grid, FreeSpreadingMatchesKineticFlow) {
    const GaussianHeller s = normalize_initial(heller1(-2.0, 1.0, cplx(0.0, 2.0)), setup1);
    const double t = 3.0;
    const GridSpec g = grid1(-20, 20, 1024, 0.05, 60, 60);
    const std::vector<GridField> frames =
        GridPropagator(free_particle, g, setup1).propagate(sample_gaussian_on_grid(s, g, setup1));
    const GridField exact = sample_gaussian_on_grid(kinetic_step(s, t, setup1), g, setup1);
    // no potential: the split step is exact up to the FFT, phase included
    EXPECT_NEAR(std::abs(grid_inner(exact, frames.back(), g) - 1.0), 0.0, 1e-9);
    EXPECT_NEAR(grid_norm(frames.back(), g), 1.0, 1e-12);
}

TEST(Grid, SecondOrderInTimeStep) {
    const GaussianHeller s = normalize_initial(heller1(1.5, 0.5, cplx(0.2, 2.0)), setup1);
    const PotentialModel morse = PotentialModel::morse_1d(2.0, 0.5);
    const double T = 2.0;
    auto run = [&](double dt) {
        const auto steps = static_cast<std::size_t>(std::lround(T / dt));
        const GridSpec g = grid1(-12, 20, 512, dt, steps, steps);
        return GridPropagator(morse, g, setup1).propagate(sample_gaussian_on_grid(s, g, setup1)).back();
    };
    const GridSpec g = grid1(-12, 20, 512, 1.0, 1, 1);
    const GridField ref = run(0.0025);
    double prev = 0.0;
    for (double dt : {0.04, 0.02}) {
        GridField psi = run(dt);
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] -= ref[i];
        const double err = grid_norm(psi, g);
        if (prev > 0.0) EXPECT_NEAR(std::log2(prev / err), 2.0, 0.1);
        prev = err;
    }
}

TEST(Grid, BoundaryContactAborts) {
    const GaussianHeller s = normalize_initial(heller1(0.0, 3.0, I), setup1);
    const GridSpec g = grid1(-8, 8, 128, 0.05, 200);
    try {
        GridPropagator(free_particle, g, setup1).propagate(sample_gaussian_on_grid(s, g, setup1));
        FAIL() << "expected a numerical failure";
    } catch (const NumericalFailure& e) {
        EXPECT_GT(e.step(), 0u);
        EXPECT_LT(e.step(), 200u);
    }
}

TEST(Grid, TwoDimensionalCoupledHarmonicMatchesExactGaussian) {
    Mat K(2, 2);
    K << 1.0, 0.3, 0.3, 1.5;
    const PotentialModel model = PotentialModel::harmonic(K, Vec::Zero(2));
    const PhysicalSetup setup(2);
    GaussianHeller s{Vec{{1.0, -0.5}}, Vec{{0.0, 0.5}}, CMat::Zero(2, 2), 0.0};
    s.A << cplx(0.1, 1.2), cplx(0.0, 0.1), cplx(0.0, 0.1), cplx(-0.2, 0.9);
    s = normalize_initial(s, setup);
    const GridSpec g{{-9, -9}, {9, 9}, {128, 128}, 0.01, 300, 300};
    const std::vector<GridField> frames =
        GridPropagator(model, g, setup).propagate(sample_gaussian_on_grid(s, g, setup));
    const GaussianHeller exact = harmonic_exact(s, *model.harmonic_params(), setup, 3.0);
    const cplx ov = grid_inner(sample_gaussian_on_grid(exact, g, setup), frames.back(), g);
    EXPECT_GT(std::norm(ov), 1.0 - 1e-6);
    EXPECT_NEAR(std::abs(ov - 1.0), 0.0, 1e-3);
}

TEST(HarmonicExact, GroundStatePhase) {
    const GaussianHeller s = normalize_initial(heller1(0, 0, I), setup1);
    const GaussianHeller e = harmonic_exact(s, *harmonic.harmonic_params(), setup1, 10.0);
    EXPECT_NEAR(std::abs(e.A(0, 0) - I), 0.0, 1e-12);
    EXPECT_NEAR(e.gamma.real(), -5.0, 1e-10);
    EXPECT_NEAR(e.gamma.imag(), s.gamma.imag(), 1e-12);
}

TEST(HarmonicExact, MatchesOracleAndComposes) {
    const PhysicalSetup setup(1, 0.7, Mat::Constant(1, 1, 1.3));
    const PotentialModel h = PotentialModel::harmonic_1d(1.3, 0.8);
    const GaussianHeller s = normalize_initial(heller1(0.5, -0.4, cplx(0.3, 0.6)), setup);
    const GaussianHagedorn h0 = heller_to_hagedorn(s, setup);
    const oracle::Harmonic1D osc{1.3, 0.8};
    const GaussianHagedorn e = harmonic_exact(h0, *h.harmonic_params(), setup, 12.0);
    const auto [Q, P] = osc.flow(h0.Q(0, 0), h0.P(0, 0), 12.0);
    EXPECT_NEAR(std::abs(e.Q(0, 0) - Q), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(e.P(0, 0) - P), 0.0, 1e-12);
    const GaussianHagedorn twice = harmonic_exact(harmonic_exact(h0, *h.harmonic_params(), setup, 5.0),
                                                  *h.harmonic_params(), setup, 7.0);
    EXPECT_NEAR(twice.S, e.S, 1e-10);
    EXPECT_EQ(twice.branch, e.branch);
    EXPECT_NEAR(twice.det_phase(), e.det_phase(), 1e-10);
}

TEST(HarmonicExact, AgreesWithGridIncludingPhase) {
    const GaussianHeller s = normalize_initial(heller1(1.0, 0.5, cplx(0.4, 3.0)), setup1);
    const double t = 20.0;
    const GridSpec g = grid1(-10, 10, 256, 0.005, 4000, 4000);
    const std::vector<GridField> frames =
        GridPropagator(harmonic, g, setup1).propagate(sample_gaussian_on_grid(s, g, setup1));
    const GaussianHeller e = harmonic_exact(s, *harmonic.harmonic_params(), setup1, t);
    const cplx ov = grid_inner(sample_gaussian_on_grid(e, g, setup1), frames.back(), g);
    EXPECT_NEAR(std::abs(ov - 1.0), 0.0, 1e-3);
}
