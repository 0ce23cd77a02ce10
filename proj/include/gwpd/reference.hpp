#pragma once

// Exact quantum references: split-operator propagation of the linear TDSE on a 1-D or 2-D grid,
// and the closed-form Gaussian solution in a harmonic potential.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/MatrixFunctions>

#include "gwpd/core.hpp"
#include "gwpd/integrators.hpp"
#include "gwpd/potentials.hpp"

namespace gwpd {

struct GridSpec {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> points;
    double dt = 0.01;
    std::size_t steps = 0;
    std::size_t save_every = 1;

    int dim() const { return static_cast<int>(points.size()); }
    double spacing(int k) const {
        return (upper[static_cast<std::size_t>(k)] - lower[static_cast<std::size_t>(k)]) /
               points[static_cast<std::size_t>(k)];
    }
    double cell_volume() const {
        double v = 1.0;
        for (int k = 0; k < dim(); ++k) v *= spacing(k);
        return v;
    }
    std::size_t size() const {
        std::size_t n = 1;
        for (int p : points) n *= static_cast<std::size_t>(p);
        return n;
    }
    /// Grid node of a flat index; the last dimension varies fastest.
    Vec node(std::size_t flat) const {
        Vec x(dim());
        for (int k = dim() - 1; k >= 0; --k) {
            const auto n = static_cast<std::size_t>(points[static_cast<std::size_t>(k)]);
            x(k) = lower[static_cast<std::size_t>(k)] + static_cast<double>(flat % n) * spacing(k);
            flat /= n;
        }
        return x;
    }

    void validate() const {
        if (dim() < 1 || dim() > 2) throw ConfigError("grid reference supports 1 or 2 dimensions");
        if (lower.size() != points.size() || upper.size() != points.size()) throw ConfigError("grid bounds mismatch");
        for (int k = 0; k < dim(); ++k) {
            const int n = points[static_cast<std::size_t>(k)];
            if (n < 64 || (n & (n - 1)) != 0) throw ConfigError("grid points must be a power of two >= 64");
            if (!(upper[static_cast<std::size_t>(k)] > lower[static_cast<std::size_t>(k)]))
                throw ConfigError("grid upper bound must exceed the lower bound");
        }
        if (!(dt > 0.0)) throw ConfigError("grid dt must be positive");
        if (save_every == 0) throw ConfigError("grid save_every must be positive");
    }
};

using GridField = std::vector<cplx>;

template <class State>
GridField sample_gaussian_on_grid(const State& s, const GridSpec& g, const PhysicalSetup& setup) {
    GridField psi(g.size());
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = evaluate_wavefunction(s, g.node(i), setup);
    return psi;
}

/// <a|b> as a Riemann sum over the periodic grid.
inline cplx grid_inner(const GridField& a, const GridField& b, const GridSpec& g) {
    cplx s{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s * g.cell_volume();
}

inline double grid_norm(const GridField& psi, const GridSpec& g) { return std::sqrt(grid_inner(psi, psi, g).real()); }

/// Largest density on the outermost grid rows.
inline double edge_density(const GridField& psi, const GridSpec& g) {
    double m = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) {
        std::size_t flat = i;
        bool edge = false;
        for (int k = g.dim() - 1; k >= 0; --k) {
            const auto n = static_cast<std::size_t>(g.points[static_cast<std::size_t>(k)]);
            const std::size_t j = flat % n;
            flat /= n;
            edge = edge || j == 0 || j == n - 1;
        }
        if (edge) m = std::max(m, std::norm(psi[i]));
    }
    return m;
}

/// Second-order split-operator propagator exp(-iV dt/2h) exp(-iT dt/h) exp(-iV dt/2h).
class GridPropagator {
public:
    GridPropagator(const PotentialModel& model, GridSpec spec, const PhysicalSetup& setup)
        : spec_(std::move(spec)), setup_(setup) {
        spec_.validate();
        if (spec_.dim() != setup.dim() || model.dim() != setup.dim())
            throw ConfigError("grid, potential and setup dimensions differ");
        const double hbar = setup.hbar();
        const std::size_t n = spec_.size();
        half_potential_.resize(n);
        kinetic_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = model.value(spec_.node(i));
            half_potential_[i] = std::exp(-I * v * spec_.dt / (2.0 * hbar));
            const Vec k = wave_vector(i);
            const double T = 0.5 * hbar * hbar * k.dot(setup.inv_mass() * k);
            kinetic_[i] = std::exp(-I * T * spec_.dt / hbar);
        }
    }

    const GridSpec& spec() const { return spec_; }

    void step(GridField& psi) const {
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_potential_[i];
        transform(psi, true);
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= kinetic_[i];
        transform(psi, false);
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= half_potential_[i];
    }

    /// Frames at every save_every-th step, starting with psi0; aborts when density reaches the edges.
    std::vector<GridField> propagate(GridField psi) const {
        std::vector<GridField> frames{psi};
        for (std::size_t n = 1; n <= spec_.steps; ++n) {
            step(psi);
            if (edge_density(psi, spec_) > 1e-6)
                throw NumericalFailure("wavepacket density reached the grid boundary", n);
            if (n % spec_.save_every == 0) frames.push_back(psi);
        }
        return frames;
    }

private:
    Vec wave_vector(std::size_t flat) const {
        const int d = spec_.dim();
        Vec k(d);
        for (int j = d - 1; j >= 0; --j) {
            const int n = spec_.points[static_cast<std::size_t>(j)];
            const int idx = static_cast<int>(flat % static_cast<std::size_t>(n));
            flat /= static_cast<std::size_t>(n);
            const int m = idx < n / 2 ? idx : idx - n;
            k(j) = 2.0 * pi * m / (n * spec_.spacing(j));
        }
        return k;
    }

    void transform(GridField& psi, bool forward) const {
        Eigen::FFT<double> fft;
        std::vector<cplx> in, out;
        if (spec_.dim() == 1) {
            in = psi;
            forward ? fft.fwd(out, in) : fft.inv(out, in);
            psi = out;
            return;
        }
        const auto n0 = static_cast<std::size_t>(spec_.points[0]), n1 = static_cast<std::size_t>(spec_.points[1]);
        in.resize(n1);
        for (std::size_t r = 0; r < n0; ++r) {
            std::copy(psi.begin() + static_cast<std::ptrdiff_t>(r * n1),
                      psi.begin() + static_cast<std::ptrdiff_t>((r + 1) * n1), in.begin());
            forward ? fft.fwd(out, in) : fft.inv(out, in);
            std::copy(out.begin(), out.end(), psi.begin() + static_cast<std::ptrdiff_t>(r * n1));
        }
        in.resize(n0);
        for (std::size_t c = 0; c < n1; ++c) {
            for (std::size_t r = 0; r < n0; ++r) in[r] = psi[r * n1 + c];
            forward ? fft.fwd(out, in) : fft.inv(out, in);
            for (std::size_t r = 0; r < n0; ++r) psi[r * n1 + c] = out[r];
        }
    }

    GridSpec spec_;
    PhysicalSetup setup_;
    GridField half_potential_;
    GridField kinetic_;
};

/// |<psi_grid|psi_gauss>|^2 frame by frame.
inline std::vector<double> fidelity(const std::vector<GridField>& gaussian, const std::vector<GridField>& grid,
                                    const GridSpec& g) {
    if (gaussian.size() != grid.size()) throw InvalidState("frame counts differ");
    std::vector<double> f(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) f[i] = std::norm(grid_inner(grid[i], gaussian[i], g));
    return f;
}

/// Exact Gaussian evolution in V = v0 + (q - c)^T K (q - c) / 2.
///
/// (q - c, p) and (Q, P) follow the linear flow exp(t [[0, m^-1], [-K, 0]]); S is the classical
/// action integral of T - V along the center; the phase of det Q is unwrapped on a fine time grid.
inline GaussianHagedorn harmonic_exact(const GaussianHagedorn& s0, const HarmonicParams& h, const PhysicalSetup& setup,
                                       double t) {
    const int d = setup.dim();
    Mat G = Mat::Zero(2 * d, 2 * d);
    G.topRightCorner(d, d) = setup.inv_mass();
    G.bottomLeftCorner(d, d) = -h.K;
    auto flow = [&](double tau) -> Mat { return Mat(G * tau).exp(); };
    auto center = [&](double tau) {
        Vec z(2 * d);
        z << s0.q - h.center, s0.p;
        return Vec(flow(tau) * z);
    };
    auto lagrangian = [&](double tau) {
        const Vec z = center(tau);
        const Vec x = z.head(d), p = z.tail(d);
        return setup.kinetic_energy(p) - (h.v0 + 0.5 * x.dot(h.K * x));
    };
    GaussianHagedorn s = s0;
    const Vec z = center(t);
    s.q = z.head(d) + h.center;
    s.p = z.tail(d);
    const Mat F = flow(t);
    const CMat Fc = F.cast<cplx>();
    s.Q = Fc.topLeftCorner(d, d) * s0.Q + Fc.topRightCorner(d, d) * s0.P;
    s.P = Fc.bottomLeftCorner(d, d) * s0.Q + Fc.bottomRightCorner(d, d) * s0.P;

    const double span = std::abs(t);
    const int pieces = std::max(1, static_cast<int>(std::ceil(span / 0.5)));
    double action = 0.0;
    for (int i = 0; i < pieces; ++i) {
        const double a = t * i / pieces, b = t * (i + 1) / pieces;
        action += boost::math::quadrature::gauss<double, 30>::integrate(lagrangian, a, b);
    }
    s.S = s0.S + action;

    const int samples = std::max(1, static_cast<int>(std::ceil(span / 1e-3)));
    const CMat Fstep = flow(t / samples).cast<cplx>();
    CMat Qi = s0.Q, Pi = s0.P;
    double phase = s0.det_phase();
    for (int i = 1; i <= samples; ++i) {
        const CMat Qn = Fstep.topLeftCorner(d, d) * Qi + Fstep.topRightCorner(d, d) * Pi;
        Pi = Fstep.bottomLeftCorner(d, d) * Qi + Fstep.bottomRightCorner(d, d) * Pi;
        Qi = Qn;
        const double principal = std::arg(Qi.determinant());
        phase = principal + 2.0 * pi * std::round((phase - principal) / (2.0 * pi));
    }
    track_branch(s, phase);
    return s;
}

/// Heller form of the exact harmonic solution; the initial state must be normalized.
inline GaussianHeller harmonic_exact(const GaussianHeller& s0, const HarmonicParams& h, const PhysicalSetup& setup,
                                     double t) {
    return hagedorn_to_heller(harmonic_exact(heller_to_hagedorn(s0, setup), h, setup, t), setup);
}

} // namespace gwpd
