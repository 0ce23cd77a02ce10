#pragma once

// Exact kinetic and potential sub-flows, split-step schemes and their symmetric compositions.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gwpd/core.hpp"
#include "gwpd/diagnostics.hpp"
#include "gwpd/methods.hpp"

namespace gwpd {

/// Throws BranchError unless every eigenvalue of M lies in the open right half-plane.
inline void require_branch_safe(const CMat& M) {
    Eigen::ComplexEigenSolver<CMat> es(M, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const cplx lambda = es.eigenvalues()(i);
        if (!(lambda.real() > 0.0))
            throw BranchError("kinetic step leaves the principal branch of ln det; reduce the time step");
    }
}

/// Free-particle flow for time t (either sign). Frozen mode keeps A and uses the constant-width phase.
inline GaussianHeller kinetic_step(GaussianHeller s, double t, const PhysicalSetup& setup, bool frozen = false) {
    const Mat& minv = setup.inv_mass();
    const double hbar = setup.hbar();
    const double T = setup.kinetic_energy(s.p);
    s.q += t * minv * s.p;
    if (frozen) {
        s.gamma += t * (T - 0.5 * hbar * (minv * s.im_a()).trace());
        return s;
    }
    const int d = setup.dim();
    const CMat M = CMat::Identity(d, d) + t * minv.cast<cplx>() * s.A;
    require_branch_safe(M);
    const cplx logdet = log_det_eigen(M);
    s.A = symmetrize(CMat(s.A * M.inverse()));
    s.gamma += t * T + 0.5 * I * hbar * logdet;
    return s;
}

/// Flow of the effective quadratic potential for time t with coefficients frozen at the entry state.
inline GaussianHeller potential_step(GaussianHeller s, double t, const EffectiveCoefficients& c, bool frozen = false) {
    s.p -= t * c.V1;
    if (!frozen) s.A = symmetrize(CMat(s.A - t * c.V2.cast<cplx>()));
    s.gamma -= t * c.V0;
    return s;
}

/// Kinetic flow in Hagedorn form; the det Q phase is continued through ln det(Id + t m^-1 A).
inline GaussianHagedorn kinetic_step(GaussianHagedorn s, double t, const PhysicalSetup& setup) {
    const Mat& minv = setup.inv_mass();
    const int d = setup.dim();
    const CMat M = CMat::Identity(d, d) + t * minv.cast<cplx>() * (s.P * s.Q.inverse());
    require_branch_safe(M);
    const double phase = s.det_phase() + log_det_eigen(M).imag();
    s.S += t * setup.kinetic_energy(s.p);
    s.q += t * minv * s.p;
    s.Q += t * minv.cast<cplx>() * s.P;
    track_branch(s, phase);
    return s;
}

inline GaussianHagedorn potential_step(GaussianHagedorn s, double t, const EffectiveCoefficients& c) {
    s.P -= t * c.V2.cast<cplx>() * s.Q;
    s.p -= t * c.V1;
    s.S -= t * c.V0;
    return s;
}

enum class BaseScheme { TV, VT, TVT, VTV };
enum class Composition { triple_jump, suzuki_fractal, kahan_li };

inline std::string_view to_string(BaseScheme b) {
    switch (b) {
    case BaseScheme::TV: return "TV";
    case BaseScheme::VT: return "VT";
    case BaseScheme::TVT: return "TVT";
    case BaseScheme::VTV: return "VTV";
    }
    return "?";
}

inline std::string_view to_string(Composition c) {
    switch (c) {
    case Composition::triple_jump: return "triple_jump";
    case Composition::suzuki_fractal: return "suzuki_fractal";
    case Composition::kahan_li: return "kahan_li";
    }
    return "?";
}

inline BaseScheme parse_base(std::string_view s) {
    for (BaseScheme b : {BaseScheme::TV, BaseScheme::VT, BaseScheme::TVT, BaseScheme::VTV})
        if (to_string(b) == s) return b;
    throw ConfigError("unknown base scheme '" + std::string(s) + "'");
}

inline Composition parse_composition(std::string_view s) {
    if (s == "kahan_li_optional") return Composition::kahan_li;
    for (Composition c : {Composition::triple_jump, Composition::suzuki_fractal, Composition::kahan_li})
        if (to_string(c) == s) return c;
    throw ConfigError("unknown composition '" + std::string(s) + "'");
}

struct SchemeSpec {
    BaseScheme base = BaseScheme::VTV;
    int order = 2;
    Composition composition = Composition::triple_jump;
    double dt = 0.01;
    std::size_t steps = 100;

    void validate() const {
        const bool symmetric = base == BaseScheme::TVT || base == BaseScheme::VTV;
        if (order != 1 && order != 2 && order != 4 && order != 6 && order != 8)
            throw ConfigError("scheme order must be 1, 2, 4, 6 or 8");
        if (order == 1 && symmetric) throw ConfigError("order 1 needs the TV or VT base");
        if (order != 1 && !symmetric) throw ConfigError("TV and VT bases are first order only");
        if (composition == Composition::kahan_li && order > 2 && order != 6)
            throw ConfigError("the Kahan-Li composition is sixth order only");
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    }

    std::string name() const {
        std::string n = std::string(to_string(base)) + "-" + std::to_string(order);
        if (order > 2) n += "-" + std::string(to_string(composition));
        return n;
    }
};

enum class SubFlow { kinetic, potential };

struct SubStep {
    SubFlow flow;
    double fraction;
};

/// Stage weights of a symmetric composition lifting a second-order scheme to `order`.
///
/// Triple jump, order 2k -> 2k+2:  g1 = 1 / (2 - 2^(1/(2k+1))), weights (g1, 1 - 2 g1, g1).
/// Suzuki fractal, order 2k -> 2k+2: p = 1 / (4 - 4^(1/(2k+1))), weights (p, p, 1 - 4p, p, p).
/// Kahan-Li: nine fixed stages of order six.
inline std::vector<double> composition_weights(Composition c, int order) {
    std::vector<double> w{1.0};
    if (order <= 2) return w;
    if (c == Composition::kahan_li) {
        const double g1 = 0.39216144400731413927925056, g2 = 0.33259913678935943859974864,
                     g3 = -0.70624617255763935980996482, g4 = 0.08221359629355080023149045,
                     g5 = 0.79854399093482996339895035;
        return {g1, g2, g3, g4, g5, g4, g3, g2, g1};
    }
    for (int k = 1; 2 * k < order; ++k) {
        const double e = 1.0 / (2.0 * k + 1.0);
        std::vector<double> stage;
        if (c == Composition::triple_jump) {
            const double g1 = 1.0 / (2.0 - std::pow(2.0, e));
            stage = {g1, 1.0 - 2.0 * g1, g1};
        } else {
            const double p = 1.0 / (4.0 - std::pow(4.0, e));
            stage = {p, p, 1.0 - 4.0 * p, p, p};
        }
        std::vector<double> next;
        for (double s : stage)
            for (double x : w) next.push_back(s * x);
        w = std::move(next);
    }
    return w;
}

/// Sub-flow sequence of one step as fractions of dt, with adjacent same-kind sub-flows merged.
inline std::vector<SubStep> build_sequence(const SchemeSpec& spec) {
    spec.validate();
    std::vector<SubStep> raw;
    auto base = [&](double h) {
        switch (spec.base) {
        case BaseScheme::TV: raw.push_back({SubFlow::kinetic, h}), raw.push_back({SubFlow::potential, h}); break;
        case BaseScheme::VT: raw.push_back({SubFlow::potential, h}), raw.push_back({SubFlow::kinetic, h}); break;
        case BaseScheme::TVT:
            raw.push_back({SubFlow::kinetic, h / 2});
            raw.push_back({SubFlow::potential, h});
            raw.push_back({SubFlow::kinetic, h / 2});
            break;
        case BaseScheme::VTV:
            raw.push_back({SubFlow::potential, h / 2});
            raw.push_back({SubFlow::kinetic, h});
            raw.push_back({SubFlow::potential, h / 2});
            break;
        }
    };
    for (double w : composition_weights(spec.composition, spec.order)) base(w);
    std::vector<SubStep> merged;
    for (const SubStep& s : raw) {
        if (!merged.empty() && merged.back().flow == s.flow) merged.back().fraction += s.fraction;
        else merged.push_back(s);
    }
    return merged;
}

template <class State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    std::vector<DiagnosticsRecord> diagnostics;
};

/// Drives a method with a split-step scheme; State is GaussianHeller or GaussianHagedorn.
template <class State>
class Propagator {
public:
    Propagator(Method method, SchemeSpec scheme)
        : method_(std::move(method)), scheme_(scheme), sequence_(build_sequence(scheme_)) {
        if constexpr (std::is_same_v<State, GaussianHagedorn>) {
            if (method_.frozen()) throw UnsupportedError("frozen Gaussian methods use the Heller parametrization");
        }
    }

    const SchemeSpec& scheme() const { return scheme_; }
    const std::vector<SubStep>& sequence() const { return sequence_; }
    const Method& method() const { return method_; }

    /// One step of length dt; a negative dt applies the exact inverse of the forward step.
    State step(State s, double dt) const {
        if (dt >= 0.0) {
            for (const SubStep& sub : sequence_) s = apply(std::move(s), sub.flow, sub.fraction * dt);
        } else {
            for (auto it = sequence_.rbegin(); it != sequence_.rend(); ++it)
                s = apply(std::move(s), it->flow, it->fraction * dt);
        }
        return s;
    }

    State step(const State& s) const { return step(s, scheme_.dt); }

    State apply(State s, SubFlow flow, double t) const {
        const PhysicalSetup& setup = method_.setup();
        if (flow == SubFlow::kinetic) {
            if constexpr (std::is_same_v<State, GaussianHeller>) return kinetic_step(std::move(s), t, setup, method_.frozen());
            else return kinetic_step(std::move(s), t, setup);
        }
        const EffectiveCoefficients c = method_(s);
        if constexpr (std::is_same_v<State, GaussianHeller>) return potential_step(std::move(s), t, c, method_.frozen());
        else return potential_step(std::move(s), t, c);
    }

private:
    Method method_;
    SchemeSpec scheme_;
    std::vector<SubStep> sequence_;
};

inline GaussianHeller as_heller(const GaussianHeller& s, const PhysicalSetup&) { return s; }
inline GaussianHeller as_heller(const GaussianHagedorn& s, const PhysicalSetup& setup) {
    return hagedorn_to_heller(s, setup);
}

inline void validate_state(const GaussianHeller& s, const PhysicalSetup& setup) { validate(s, setup); }
inline void validate_state(const GaussianHagedorn& s, const PhysicalSetup& setup) { validate(s, setup); }

/// Norm, energies and covariances of a state.
template <class State>
DiagnosticsRecord diagnose(const State& state, double t, const Method& method) {
    const PhysicalSetup& setup = method.setup();
    const GaussianHeller h = as_heller(state, setup);
    DiagnosticsRecord r;
    r.t = t;
    r.norm = norm(state, setup);
    r.E = energy(h, method.model(), method.engine(), setup);
    r.E_eff = effective_energy(h, method(state), setup);
    r.cov = covariances(h, setup);
    return r;
}

struct PropagateOptions {
    std::size_t save_every = 1;
    bool diagnostics = true;
    /// Rescale Im gamma after every step; off by default since both sub-flows conserve the norm.
    bool renormalize = false;
};

/// Integrates `steps` steps, recording every save_every-th state. Invariant violations abort with
/// NumericalFailure carrying the step index.
template <class State>
Trajectory<State> propagate(const State& initial, const Propagator<State>& prop, PropagateOptions opt = {}) {
    const SchemeSpec& spec = prop.scheme();
    const PhysicalSetup& setup = prop.method().setup();
    if (opt.save_every == 0) throw ConfigError("save_every must be positive");
    Trajectory<State> traj;
    auto record = [&](const State& s, std::size_t n) {
        const double t = static_cast<double>(n) * spec.dt;
        traj.times.push_back(t);
        traj.states.push_back(s);
        if (opt.diagnostics) traj.diagnostics.push_back(diagnose(s, t, prop.method()));
    };
    State s = initial;
    validate_state(s, setup);
    record(s, 0);
    for (std::size_t n = 1; n <= spec.steps; ++n) {
        try {
            s = prop.step(s);
            if constexpr (std::is_same_v<State, GaussianHeller>) {
                if (opt.renormalize) s = normalize_initial(s, setup);
            }
            validate_state(s, setup);
            if (n % opt.save_every == 0) record(s, n);
        } catch (const NumericalFailure&) {
            throw;
        } catch (const Error& e) {
            throw NumericalFailure(e.what(), n);
        }
    }
    return traj;
}

/// Largest absolute parameter difference, gamma compared as a full complex number.
inline double parameter_distance(const GaussianHeller& a, const GaussianHeller& b) {
    double d = std::max((a.q - b.q).cwiseAbs().maxCoeff(), (a.p - b.p).cwiseAbs().maxCoeff());
    d = std::max(d, (a.A - b.A).cwiseAbs().maxCoeff());
    return std::max(d, std::abs(a.gamma - b.gamma));
}

inline double parameter_distance(const GaussianHagedorn& a, const GaussianHagedorn& b) {
    double d = std::max((a.q - b.q).cwiseAbs().maxCoeff(), (a.p - b.p).cwiseAbs().maxCoeff());
    d = std::max({d, (a.Q - b.Q).cwiseAbs().maxCoeff(), (a.P - b.P).cwiseAbs().maxCoeff()});
    return std::max(d, std::abs(a.S - b.S) + (a.branch == b.branch ? 0.0 : 2.0 * pi));
}

/// Forward `steps` steps, then `steps` steps with negated dt; returns the parameter residual.
template <class State>
double reverse_roundtrip(const State& initial, const Propagator<State>& prop, std::size_t steps) {
    State s = initial;
    const double dt = prop.scheme().dt;
    for (std::size_t n = 0; n < steps; ++n) s = prop.step(s, dt);
    for (std::size_t n = 0; n < steps; ++n) s = prop.step(s, -dt);
    return parameter_distance(s, initial);
}

} // namespace gwpd
