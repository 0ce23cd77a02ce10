#pragma once

// Observables and geometric checks: norm, energies, covariances, symplectic form, overlaps.

#include <functional>
#include <optional>

#include "gwpd/core.hpp"
#include "gwpd/methods.hpp"
#include "gwpd/quadrature.hpp"

namespace gwpd {

struct Covariances {
    Mat cov_q;
    Mat cov_p;
    CMat cov_qp;
    Mat cov_qp_real;
};

struct DiagnosticsRecord {
    double t = 0.0;
    double norm = 1.0;
    double E = 0.0;
    double E_eff = 0.0;
    Covariances cov;
    std::optional<double> symplectic_defect;
    std::optional<double> energy_rate_predicted;
};

/// ||psi|| from det(Im A / (pi hbar))^(-1/2) exp(-2 Im gamma / hbar).
inline double norm(const GaussianHeller& s, const PhysicalSetup& setup) {
    const double hbar = setup.hbar();
    const double log_n2 = -0.5 * std::log((s.im_a() / (pi * hbar)).determinant()) - 2.0 * s.gamma.imag() / hbar;
    return std::exp(0.5 * log_n2);
}

/// Hagedorn wavepackets are normalized by construction.
inline double norm(const GaussianHagedorn&, const PhysicalSetup&) { return 1.0; }

inline Covariances covariances(const GaussianHeller& s, const PhysicalSetup& setup) {
    const double h2 = 0.5 * setup.hbar();
    const Mat Binv = s.im_a().inverse();
    Covariances c;
    c.cov_q = symmetrize(Mat(h2 * Binv));
    c.cov_p = symmetrize(Mat((h2 * s.A * Binv.cast<cplx>() * s.A.conjugate()).real()));
    c.cov_qp = c.cov_q.cast<cplx>() * s.A;
    c.cov_qp_real = h2 * Binv * s.re_a();
    return c;
}

/// <T> = T(p) + Tr(m^-1 Cov(p)) / 2.
inline double kinetic_expectation(const GaussianHeller& s, const PhysicalSetup& setup) {
    return setup.kinetic_energy(s.p) + 0.5 * (setup.inv_mass() * covariances(s, setup).cov_p).trace();
}

/// Exact energy <T> + <V>.
inline double energy(const GaussianHeller& s, const PotentialModel& model, const ExpectationEngine& engine,
                     const PhysicalSetup& setup) {
    return kinetic_expectation(s, setup) + engine.expect(model, s, setup, 0).value.value();
}

/// E_eff = <T> + V0 + Tr(V2 Sigma) / 2.
inline double effective_energy(const GaussianHeller& s, const EffectiveCoefficients& c, const PhysicalSetup& setup) {
    return kinetic_expectation(s, setup) + c.V0 + 0.5 * (c.V2 * position_covariance(s, setup)).trace();
}

/// dE/dt = p^T m^-1 (<V'> - V1) + Tr[m^-1 (<V''> - V2) Cov_R].
inline double energy_rate(const GaussianHeller& s, const EffectiveCoefficients& c, const PotentialModel& model,
                          const ExpectationEngine& engine, const PhysicalSetup& setup) {
    const Vec g = engine.expect(model, s, setup, 1).value.vector();
    const Mat h = engine.expect(model, s, setup, 2).value.matrix();
    const Mat cov_r = covariances(s, setup).cov_qp_real;
    return s.p.dot(setup.inv_mass() * (g - c.V1)) + (setup.inv_mass() * (h - c.V2) * cov_r).trace();
}

/// dE_eff/dt = dV0/dt - V1.dq/dt + Tr(dV2/dt Sigma) / 2, given the coefficient rates.
inline double effective_energy_rate(const GaussianHeller& s, const EffectiveCoefficients& c, double dV0,
                                    const Mat& dV2, const PhysicalSetup& setup) {
    const Vec qdot = setup.inv_mass() * s.p;
    return dV0 - c.V1.dot(qdot) + 0.5 * (dV2 * position_covariance(s, setup)).trace();
}

/// Reduced symplectic form on (q, p, Re A, Im A):
/// dq1.dp2 - dq2.dp1 - (hbar/4) Tr[B^-1 dB1 B^-1 dR2 - B^-1 dB2 B^-1 dR1].
inline double symplectic_form(const GaussianHeller& s, const TangentVector& d1, const TangentVector& d2,
                              const PhysicalSetup& setup) {
    const Mat Binv = s.im_a().inverse();
    const double canonical = d1.dq.dot(d2.dp) - d2.dq.dot(d1.dp);
    const double width = (Binv * d1.dImA * Binv * d2.dReA - Binv * d2.dImA * Binv * d1.dReA).trace();
    return canonical - 0.25 * setup.hbar() * width;
}

/// Basis of the tangent space: unit q_i, p_i, then symmetric unit matrices for Re A and Im A.
inline std::vector<TangentVector> tangent_basis(int dim) {
    std::vector<TangentVector> basis;
    for (int i = 0; i < dim; ++i) {
        TangentVector t = TangentVector::zero(dim);
        t.dq(i) = 1.0;
        basis.push_back(t);
    }
    for (int i = 0; i < dim; ++i) {
        TangentVector t = TangentVector::zero(dim);
        t.dp(i) = 1.0;
        basis.push_back(t);
    }
    for (int part = 0; part < 2; ++part)
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) {
                TangentVector t = TangentVector::zero(dim);
                Mat& m = part == 0 ? t.dReA : t.dImA;
                m(i, j) = m(j, i) = 1.0;
                basis.push_back(t);
            }
    return basis;
}

inline GaussianHeller displaced(GaussianHeller s, const TangentVector& d, double h) {
    s.q += h * d.dq;
    s.p += h * d.dp;
    s.A += h * (d.dReA.cast<cplx>() + I * d.dImA.cast<cplx>());
    return s;
}

inline TangentVector difference(const GaussianHeller& a, const GaussianHeller& b, double scale) {
    return {scale * (a.q - b.q), scale * (a.p - b.p), scale * Mat((a.A - b.A).real()),
            scale * Mat((a.A - b.A).imag())};
}

using HellerFlow = std::function<GaussianHeller(const GaussianHeller&)>;

/// Pushes every basis tangent through the flow Jacobian (central differences with step h).
inline std::vector<TangentVector> pushforward(const HellerFlow& flow, const GaussianHeller& s, double h) {
    std::vector<TangentVector> out;
    for (const TangentVector& e : tangent_basis(s.dim()))
        out.push_back(difference(flow(displaced(s, e, h)), flow(displaced(s, e, -h)), 0.5 / h));
    return out;
}

/// max_ij |omega_{Phi(s)}(J e_i, J e_j) - omega_s(e_i, e_j)|.
inline double symplectic_defect(const HellerFlow& flow, const GaussianHeller& s, const PhysicalSetup& setup,
                                double h = 1e-6) {
    const std::vector<TangentVector> basis = tangent_basis(s.dim());
    const std::vector<TangentVector> pushed = pushforward(flow, s, h);
    const GaussianHeller image = flow(s);
    double defect = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i)
        for (std::size_t j = i + 1; j < basis.size(); ++j) {
            const double after = symplectic_form(image, pushed[i], pushed[j], setup);
            const double before = symplectic_form(s, basis[i], basis[j], setup);
            defect = std::max(defect, std::abs(after - before));
        }
    return defect;
}

/// <a|b> in closed form: the integrand is exp(-x.K.x/2 + j.x + s) with K = -(i/hbar)(A_b - conj(A_a)).
inline cplx gaussian_overlap(const GaussianHeller& a, const GaussianHeller& b, const PhysicalSetup& setup) {
    const double hbar = setup.hbar();
    const CMat Aa = a.A.conjugate();
    const CMat& Ab = b.A;
    const CMat K = symmetrize(CMat(-(I / hbar) * (Ab - Aa)));
    if (!is_positive_definite(K.real())) throw InvalidState("overlap integrand is not normalizable");
    const CVec qa = a.q.cast<cplx>(), qb = b.q.cast<cplx>();
    const CVec j = (I / hbar) * (-(Ab * qb) + b.p.cast<cplx>() + Aa * qa - a.p.cast<cplx>());
    const cplx s = (I / hbar) * (0.5 * qb.dot(Ab * qb) - b.p.dot(b.q) + b.gamma - 0.5 * qa.dot(Aa * qa) +
                                 a.p.dot(a.q) - std::conj(a.gamma));
    Eigen::ComplexEigenSolver<CMat> es(K, false);
    cplx inv_sqrt_det{1.0, 0.0};
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) inv_sqrt_det /= std::sqrt(es.eigenvalues()(i));
    const cplx quad = 0.5 * (j.transpose() * K.partialPivLu().solve(j)).value();
    return std::pow(2.0 * pi, 0.5 * setup.dim()) * inv_sqrt_det * std::exp(quad + s);
}

} // namespace gwpd
