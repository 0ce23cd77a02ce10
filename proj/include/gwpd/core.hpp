#pragma once

// Gaussian wavepacket state types in Heller (q, p, A, gamma) and Hagedorn (q, p, Q, P, S) form,
// pointwise evaluation, and conversion between the two.
//
//   Heller:   psi(q) = exp[(i/hbar)(x^T A x / 2 + p^T x + gamma)],                      x = q - q_t
//   Hagedorn: psi(q) = (pi hbar)^(-D/4) (det Q)^(-1/2) exp[(i/hbar)(x^T P Q^-1 x / 2 + p^T x + S)]
//
// The Hagedorn form is always normalized. Its square root of det Q is taken on a branch that is
// tracked along a trajectory: arg det Q is unwrapped as Arg(det Q) + 2 pi * branch.

#include <cmath>
#include <string>

#include "gwpd/linalg.hpp"

namespace gwpd {

/// Dimension, reduced Planck constant and mass matrix shared by every operation.
class PhysicalSetup {
public:
    PhysicalSetup() : PhysicalSetup(1) {}

    /// Atomic-style defaults: hbar = 1, m = Id.
    explicit PhysicalSetup(int dim, double hbar = 1.0) : PhysicalSetup(dim, hbar, Mat::Identity(dim, dim)) {}

    PhysicalSetup(int dim, double hbar, Mat mass) : dim_(dim), hbar_(hbar), mass_(std::move(mass)) {
        if (dim_ < 1) throw InvalidState("dimension must be positive");
        if (!(hbar_ > 0.0)) throw InvalidState("hbar must be positive");
        if (mass_.rows() != dim_ || mass_.cols() != dim_) throw InvalidState("mass matrix has wrong shape");
        if (!is_symmetric(mass_)) throw InvalidState("mass matrix is not symmetric");
        require_positive_definite(mass_, "mass matrix");
        mass_ = symmetrize(mass_);
        inv_mass_ = symmetrize(Mat(mass_.inverse()));
    }

    int dim() const { return dim_; }
    double hbar() const { return hbar_; }
    const Mat& mass() const { return mass_; }
    const Mat& inv_mass() const { return inv_mass_; }

    /// Classical kinetic energy p^T m^-1 p / 2.
    double kinetic_energy(const Vec& p) const { return 0.5 * p.dot(inv_mass_ * p); }

private:
    int dim_;
    double hbar_;
    Mat mass_;
    Mat inv_mass_;
};

/// Gaussian in Heller's parametrization.
struct GaussianHeller {
    Vec q;
    Vec p;
    CMat A;
    cplx gamma{0.0, 0.0};

    int dim() const { return static_cast<int>(q.size()); }
    Mat re_a() const { return A.real(); }
    Mat im_a() const { return A.imag(); }
};

/// Gaussian in Hagedorn's parametrization.
struct GaussianHagedorn {
    Vec q;
    Vec p;
    CMat Q;
    CMat P;
    double S = 0.0;
    /// Winding of arg det Q relative to its principal value.
    int branch = 0;

    int dim() const { return static_cast<int>(q.size()); }

    /// Continuous phase of det Q.
    double det_phase() const { return std::arg(Q.determinant()) + 2.0 * pi * branch; }
};

/// Tangent vector in the coordinates (q, p, Re A, Im A).
struct TangentVector {
    Vec dq;
    Vec dp;
    Mat dReA;
    Mat dImA;

    static TangentVector zero(int dim) {
        return {Vec::Zero(dim), Vec::Zero(dim), Mat::Zero(dim, dim), Mat::Zero(dim, dim)};
    }
};

/// Throws InvalidState unless shapes match, A is symmetric and Im A is positive definite.
inline void validate(const GaussianHeller& s, const PhysicalSetup& setup) {
    const int d = setup.dim();
    if (s.q.size() != d || s.p.size() != d || s.A.rows() != d || s.A.cols() != d)
        throw InvalidState("Heller state has wrong dimensions");
    if (!s.q.allFinite() || !s.p.allFinite() || !s.A.allFinite() || !std::isfinite(s.gamma.real()) ||
        !std::isfinite(s.gamma.imag()))
        throw InvalidState("Heller state has non-finite entries");
    if (!is_symmetric(s.A)) throw InvalidState("width matrix A is not symmetric");
    require_positive_definite(s.im_a(), "Im A");
}

/// Largest deviation from Q^T P - P^T Q = 0 and Q^dag P - P^dag Q = 2i Id.
inline double hagedorn_relation_defect(const CMat& Q, const CMat& P) {
    const Eigen::Index d = Q.rows();
    const CMat r1 = Q.transpose() * P - P.transpose() * Q;
    const CMat r2 = Q.adjoint() * P - P.adjoint() * Q - 2.0 * I * CMat::Identity(d, d);
    return std::max(r1.cwiseAbs().maxCoeff(), r2.cwiseAbs().maxCoeff());
}

inline void validate(const GaussianHagedorn& s, const PhysicalSetup& setup, double tol = 1e-10) {
    const int d = setup.dim();
    if (s.q.size() != d || s.p.size() != d || s.Q.rows() != d || s.Q.cols() != d || s.P.rows() != d ||
        s.P.cols() != d)
        throw InvalidState("Hagedorn state has wrong dimensions");
    if (!s.q.allFinite() || !s.p.allFinite() || !s.Q.allFinite() || !s.P.allFinite() || !std::isfinite(s.S))
        throw InvalidState("Hagedorn state has non-finite entries");
    const double defect = hagedorn_relation_defect(s.Q, s.P);
    if (!(defect <= tol))
        throw InvalidState("Hagedorn symplecticity relations violated by " + std::to_string(defect));
    Eigen::JacobiSVD<CMat> svd(s.Q);
    const double smin = svd.singularValues().minCoeff();
    if (!(smin > 1e-14 * svd.singularValues().maxCoeff())) throw InvalidState("Q is singular");
}

/// Position covariance Sigma = (hbar/2) (Im A)^-1.
inline Mat position_covariance(const GaussianHeller& s, const PhysicalSetup& setup) {
    return symmetrize(Mat(0.5 * setup.hbar() * s.im_a().inverse()));
}

inline Mat position_covariance(const GaussianHagedorn& s, const PhysicalSetup& setup) {
    return symmetrize(Mat((0.5 * setup.hbar() * s.Q * s.Q.adjoint()).real()));
}

/// Im A = (Q Q^dag)^-1.
inline Mat im_width(const GaussianHagedorn& s) { return symmetrize(Mat((s.Q * s.Q.adjoint()).real().inverse())); }

/// Replaces Im gamma so that the state has unit norm; Re gamma is kept.
inline GaussianHeller normalize_initial(GaussianHeller s, const PhysicalSetup& setup) {
    validate(s, setup);
    const double logdet = std::log((s.im_a() / (pi * setup.hbar())).determinant());
    // exp(-Im gamma / hbar) = det(Im A / (pi hbar))^(1/4)
    s.gamma = cplx(s.gamma.real(), -0.25 * setup.hbar() * logdet);
    return s;
}

/// psi at a point in configuration space.
inline cplx evaluate_wavefunction(const GaussianHeller& s, const Vec& point, const PhysicalSetup& setup) {
    const Vec x = point - s.q;
    const cplx phase = 0.5 * x.dot(s.A * x) + s.p.dot(x) + s.gamma;
    return std::exp(I * phase / setup.hbar());
}

/// xi = A x + p.
inline CVec xi(const GaussianHeller& s, const Vec& point) {
    const Vec x = point - s.q;
    return s.A * x + s.p.cast<cplx>();
}

/// Gradient of psi, (i/hbar) xi psi.
inline CVec wavefunction_gradient(const GaussianHeller& s, const Vec& point, const PhysicalSetup& setup) {
    return (I / setup.hbar()) * evaluate_wavefunction(s, point, setup) * xi(s, point);
}

/// Probability density of a normalized Gaussian at the shifted coordinate x = q - q_t.
inline double density(const GaussianHeller& s, const Vec& x, const PhysicalSetup& setup) {
    const Mat sigma = position_covariance(s, setup);
    Eigen::LLT<Mat> llt(sigma);
    if (llt.info() != Eigen::Success) throw InvalidState("position covariance is singular");
    const double d = static_cast<double>(setup.dim());
    const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    return std::exp(-0.5 * x.dot(llt.solve(x)) - 0.5 * (d * std::log(2.0 * pi) + logdet));
}

/// psi evaluated directly in Hagedorn form.
inline cplx evaluate_wavefunction(const GaussianHagedorn& s, const Vec& point, const PhysicalSetup& setup) {
    const double hbar = setup.hbar();
    const Vec x = point - s.q;
    const CMat A = s.P * s.Q.inverse();
    const cplx detq = s.Q.determinant();
    // (det Q)^(-1/2) on the tracked branch
    const cplx inv_sqrt_det = std::pow(std::abs(detq), -0.5) * std::exp(-0.5 * I * s.det_phase());
    const cplx phase = 0.5 * x.dot(A * x) + s.p.dot(x) + s.S;
    return std::pow(pi * hbar, -0.25 * setup.dim()) * inv_sqrt_det * std::exp(I * phase / hbar);
}

/// Picks the branch so that the unwrapped phase of det Q is closest to `previous_phase`.
inline void track_branch(GaussianHagedorn& s, double previous_phase) {
    const double principal = std::arg(s.Q.determinant());
    s.branch = static_cast<int>(std::lround((previous_phase - principal) / (2.0 * pi)));
}

/// Heller to Hagedorn with Q = (Im A)^(-1/2) real positive definite and P = A Q.
/// Requires a normalized state since the Hagedorn form carries no norm.
inline GaussianHagedorn heller_to_hagedorn(const GaussianHeller& s, const PhysicalSetup& setup) {
    validate(s, setup);
    const double hbar = setup.hbar();
    const double log_norm2 = -0.5 * std::log((s.im_a() / (pi * hbar)).determinant()) - 2.0 * s.gamma.imag() / hbar;
    if (std::abs(log_norm2) > 1e-10) throw InvalidState("Hagedorn conversion requires a normalized Gaussian");
    GaussianHagedorn h;
    h.q = s.q;
    h.p = s.p;
    h.Q = spd_inv_sqrt(s.im_a()).cast<cplx>();
    h.P = s.A * h.Q;
    // det Q > 0, so the phase of the prefactor vanishes and S carries Re gamma.
    h.S = s.gamma.real();
    h.branch = 0;
    return h;
}

/// Hagedorn to Heller: A = P Q^-1, gamma absorbs the normalization and (det Q)^(-1/2) prefactor.
inline GaussianHeller hagedorn_to_heller(const GaussianHagedorn& h, const PhysicalSetup& setup) {
    validate(h, setup);
    const double hbar = setup.hbar();
    const double d = static_cast<double>(setup.dim());
    GaussianHeller s;
    s.q = h.q;
    s.p = h.p;
    s.A = symmetrize(CMat(h.P * h.Q.inverse()));
    const double re = h.S - 0.5 * hbar * h.det_phase();
    const double im = 0.5 * hbar * (0.5 * d * std::log(pi * hbar) + std::log(std::abs(h.Q.determinant())));
    s.gamma = cplx(re, im);
    return s;
}

} // namespace gwpd
