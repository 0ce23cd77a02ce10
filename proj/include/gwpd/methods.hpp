#pragma once

// Effective quadratic potential V_eff(x) = V0 + V1.x + x.V2.x / 2 for every method variant.

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "gwpd/core.hpp"
#include "gwpd/potentials.hpp"
#include "gwpd/quadrature.hpp"

namespace gwpd {

struct EffectiveCoefficients {
    double V0 = 0.0;
    Vec V1;
    Mat V2;
};

enum class MethodId {
    tgwd_variational,
    tgwd_local_harmonic,
    tgwd_single_hessian,
    tgwd_global_harmonic,
    tgwd_local_cubic_var,
    tgwd_single_quartic_var,
    fgwd_variational,
    fgwd_classical_var,
    fgwd_local_harmonic,
    fgwd_global_harmonic,
};

inline constexpr std::array<MethodId, 10> all_methods{
    MethodId::tgwd_variational,     MethodId::tgwd_local_harmonic,     MethodId::tgwd_single_hessian,
    MethodId::tgwd_global_harmonic, MethodId::tgwd_local_cubic_var,    MethodId::tgwd_single_quartic_var,
    MethodId::fgwd_variational,     MethodId::fgwd_classical_var,      MethodId::fgwd_local_harmonic,
    MethodId::fgwd_global_harmonic,
};

inline constexpr std::array<MethodId, 6> thawed_methods{
    MethodId::tgwd_variational,     MethodId::tgwd_local_harmonic,  MethodId::tgwd_single_hessian,
    MethodId::tgwd_global_harmonic, MethodId::tgwd_local_cubic_var, MethodId::tgwd_single_quartic_var,
};

inline std::string_view to_string(MethodId id) {
    switch (id) {
    case MethodId::tgwd_variational: return "tgwd_variational";
    case MethodId::tgwd_local_harmonic: return "tgwd_local_harmonic";
    case MethodId::tgwd_single_hessian: return "tgwd_single_hessian";
    case MethodId::tgwd_global_harmonic: return "tgwd_global_harmonic";
    case MethodId::tgwd_local_cubic_var: return "tgwd_local_cubic_var";
    case MethodId::tgwd_single_quartic_var: return "tgwd_single_quartic_var";
    case MethodId::fgwd_variational: return "fgwd_variational";
    case MethodId::fgwd_classical_var: return "fgwd_classical_var";
    case MethodId::fgwd_local_harmonic: return "fgwd_local_harmonic";
    case MethodId::fgwd_global_harmonic: return "fgwd_global_harmonic";
    }
    return "unknown";
}

inline MethodId parse_method(std::string_view name) {
    for (MethodId id : all_methods)
        if (to_string(id) == name) return id;
    throw ConfigError("unknown method id '" + std::string(name) + "'");
}

inline bool is_frozen(MethodId id) { return to_string(id).starts_with("fgwd"); }

/// Whether the method uses a reference geometry.
inline bool uses_reference(MethodId id) {
    return id == MethodId::tgwd_single_hessian || id == MethodId::tgwd_global_harmonic ||
           id == MethodId::tgwd_single_quartic_var || id == MethodId::fgwd_global_harmonic;
}

struct MethodSpec {
    MethodId id = MethodId::tgwd_variational;
    /// Reference geometry; defaults to the initial position when empty.
    std::optional<Vec> q_ref;

    bool frozen() const { return is_frozen(id); }
};

/// A method bound to a potential: evaluates (V0, V1, V2) from (q_t, Im A_t) only.
///
/// Reference-geometry data is computed once at construction and shared read-only afterwards.
class Method {
public:
    Method(MethodSpec spec, PotentialModel model, PhysicalSetup setup, ExpectationEngine engine = ExpectationEngine{},
           const std::optional<Vec>& q0 = std::nullopt)
        : spec_(std::move(spec)), model_(std::move(model)), setup_(std::move(setup)), engine_(std::move(engine)) {
        if (model_.dim() != setup_.dim()) throw ConfigError("potential dimension differs from setup dimension");
        if (uses_reference(spec_.id)) {
            if (!spec_.q_ref) {
                if (!q0) throw ConfigError(std::string(to_string(spec_.id)) + " needs a reference geometry");
                spec_.q_ref = *q0;
            }
            if (spec_.q_ref->size() != setup_.dim()) throw ConfigError("reference geometry has wrong dimension");
            const Vec& r = *spec_.q_ref;
            ref_v0_ = model_.evaluate(r, 0).value();
            ref_v1_ = model_.evaluate(r, 1).vector();
            ref_v2_ = symmetrize(model_.evaluate(r, 2).matrix());
            if (spec_.id == MethodId::tgwd_single_quartic_var) ref_v4_ = model_.evaluate(r, 4);
        }
    }

    const MethodSpec& spec() const { return spec_; }
    MethodId id() const { return spec_.id; }
    bool frozen() const { return spec_.frozen(); }
    const PotentialModel& model() const { return model_; }
    const PhysicalSetup& setup() const { return setup_; }
    const ExpectationEngine& engine() const { return engine_; }

    /// Coefficients at center q and width Im A = B.
    EffectiveCoefficients operator()(const Vec& q, const Mat& B) const {
        const Mat sigma = symmetrize(Mat(0.5 * setup_.hbar() * B.inverse()));
        EffectiveCoefficients c;
        switch (spec_.id) {
        case MethodId::tgwd_variational: {
            c.V2 = expect(q, sigma, 2).matrix();
            c.V1 = expect(q, sigma, 1).vector();
            c.V0 = expect(q, sigma, 0).value() - 0.5 * (c.V2 * sigma).trace();
            break;
        }
        case MethodId::tgwd_local_harmonic:
            c = local_quadratic(q);
            break;
        case MethodId::tgwd_single_hessian:
            c = local_quadratic(q, false);
            c.V2 = ref_v2_;
            break;
        case MethodId::tgwd_global_harmonic: {
            const Vec x = q - *spec_.q_ref;
            c.V2 = ref_v2_;
            c.V1 = ref_v1_ + ref_v2_ * x;
            c.V0 = ref_v0_ + ref_v1_.dot(x) + 0.5 * x.dot(ref_v2_ * x);
            break;
        }
        case MethodId::tgwd_local_cubic_var:
            c = local_quadratic(q);
            c.V1 += cubic_correction(q, sigma);
            break;
        case MethodId::tgwd_single_quartic_var: {
            c = local_quadratic(q);
            c.V1 += cubic_correction(q, sigma);
            const int d = setup_.dim();
            double quart = 0.0;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    for (int k = 0; k < d; ++k)
                        for (int l = 0; l < d; ++l) {
                            c.V2(i, j) += 0.5 * ref_v4_(i, j, k, l) * sigma(k, l);
                            quart += ref_v4_(i, j, k, l) * sigma(i, j) * sigma(k, l);
                        }
            c.V0 -= quart / 8.0;
            break;
        }
        case MethodId::fgwd_variational:
        case MethodId::fgwd_classical_var: {
            c.V0 = expect(q, sigma, 0).value() - 0.25 * setup_.hbar() * (setup_.inv_mass() * B).trace();
            c.V1 = spec_.id == MethodId::fgwd_variational ? expect(q, sigma, 1).vector() : model_.gradient(q);
            break;
        }
        case MethodId::fgwd_local_harmonic:
            c.V0 = model_.value(q);
            c.V1 = model_.gradient(q);
            break;
        case MethodId::fgwd_global_harmonic: {
            // Reference expansion whose Hessian is the frozen-width constraint.
            const Mat v2 = frozen_hessian(B);
            const Vec x = q - *spec_.q_ref;
            c.V0 = ref_v0_ + ref_v1_.dot(x) + 0.5 * x.dot(v2 * x);
            c.V1 = ref_v1_ + v2 * x;
            break;
        }
        }
        if (frozen()) c.V2 = frozen_hessian(B);
        c.V2 = symmetrize(c.V2);
        if (!std::isfinite(c.V0) || !c.V1.allFinite() || !c.V2.allFinite())
            throw InvalidState("effective potential coefficients are not finite");
        return c;
    }

    /// Coefficients for a Heller state; frozen methods require Re A = 0.
    EffectiveCoefficients operator()(const GaussianHeller& s) const {
        if (frozen() && s.re_a().cwiseAbs().maxCoeff() != 0.0)
            throw ConstraintError("frozen Gaussian methods require a purely imaginary width matrix (Re A = 0)");
        return (*this)(s.q, s.im_a());
    }

    EffectiveCoefficients operator()(const GaussianHagedorn& s) const { return (*this)(s.q, im_width(s)); }

    /// B m^-1 B, the Hessian forced by a constant width.
    Mat frozen_hessian(const Mat& B) const { return symmetrize(Mat(B * setup_.inv_mass() * B)); }

private:
    Tensor expect(const Vec& q, const Mat& sigma, int order) const {
        return engine_.expect(model_, q, sigma, order).value;
    }

    EffectiveCoefficients local_quadratic(const Vec& q, bool hessian = true) const {
        EffectiveCoefficients c;
        c.V0 = model_.value(q);
        c.V1 = model_.gradient(q);
        c.V2 = hessian ? model_.hessian(q) : Mat::Zero(setup_.dim(), setup_.dim());
        return c;
    }

    /// V'''(q)_{ijk} Sigma_{jk} / 2.
    Vec cubic_correction(const Vec& q, const Mat& sigma) const {
        const int d = setup_.dim();
        const Tensor v3 = model_.evaluate(q, 3);
        Vec out = Vec::Zero(d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) out(i) += 0.5 * v3(i, j, k) * sigma(j, k);
        return out;
    }

    MethodSpec spec_;
    PotentialModel model_;
    PhysicalSetup setup_;
    ExpectationEngine engine_;
    double ref_v0_ = 0.0;
    Vec ref_v1_;
    Mat ref_v2_;
    Tensor ref_v4_;
};

/// Convenience wrapper: coefficients for one state without keeping a Method around.
inline EffectiveCoefficients coefficients(const MethodSpec& spec, const GaussianHeller& state,
                                          const PotentialModel& model, const PhysicalSetup& setup,
                                          const ExpectationEngine& engine = ExpectationEngine{}) {
    return Method(spec, model, setup, engine, state.q)(state);
}

} // namespace gwpd
