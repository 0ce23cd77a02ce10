#pragma once

#include <complex>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gwpd/errors.hpp"

namespace gwpd {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/// Smallest eigenvalue allowed for a matrix to count as positive definite.
inline constexpr double spd_tolerance = 1e-12;

template <class Derived>
auto symmetrize(const Eigen::MatrixBase<Derived>& m) {
    using Plain = typename Derived::PlainObject;
    Plain out = (m + m.transpose()) / 2.0;
    return out;
}

template <class Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, static_cast<double>(m.norm()));
    return (m - m.transpose()).norm() <= rel_tol * scale;
}

inline double min_eigenvalue(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline bool is_positive_definite(const Mat& sym) {
    return sym.rows() > 0 && sym.rows() == sym.cols() && min_eigenvalue(symmetrize(sym)) > spd_tolerance;
}

inline void require_positive_definite(const Mat& sym, const std::string& what) {
    if (!is_positive_definite(sym)) throw InvalidState(what + " is not positive definite");
}

/// Symmetric square root of a symmetric positive-definite matrix.
inline Mat spd_sqrt(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
    if (es.eigenvalues().minCoeff() <= 0.0) throw InvalidState("matrix square root of a non-positive-definite matrix");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse symmetric square root of a symmetric positive-definite matrix.
inline Mat spd_inv_sqrt(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
    if (es.eigenvalues().minCoeff() <= 0.0) throw InvalidState("matrix square root of a non-positive-definite matrix");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

/// Sum of principal logarithms of the eigenvalues; continuous in t for I + t*M as long as no
/// eigenvalue crosses the negative real axis.
inline cplx log_det_eigen(const CMat& m) {
    Eigen::ComplexEigenSolver<CMat> es(m, false);
    cplx s{0.0, 0.0};
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s += std::log(es.eigenvalues()(i));
    return s;
}

/// Real symmetric D x D matrix from row-major entries; a single entry means a multiple of the identity.
inline Mat matrix_from_list(const std::vector<double>& v, int dim) {
    Mat m(dim, dim);
    if (v.size() == 1) {
        m = v[0] * Mat::Identity(dim, dim);
    } else if (v.size() == static_cast<std::size_t>(dim) * dim) {
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) m(i, j) = v[static_cast<std::size_t>(i) * dim + j];
    } else {
        throw ConfigError("expected 1 or " + std::to_string(dim * dim) + " matrix entries, got " +
                          std::to_string(v.size()));
    }
    return m;
}

inline Vec vector_from_list(const std::vector<double>& v, int dim) {
    if (v.size() == 1) return Vec::Constant(dim, v[0]);
    if (v.size() != static_cast<std::size_t>(dim))
        throw ConfigError("expected " + std::to_string(dim) + " vector entries, got " + std::to_string(v.size()));
    return Eigen::Map<const Vec>(v.data(), dim);
}

} // namespace gwpd
