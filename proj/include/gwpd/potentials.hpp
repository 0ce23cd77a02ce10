#pragma once

// Model potentials with derivative tensors up to order four.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/math/interpolators/cardinal_quintic_b_spline.hpp>

#include "gwpd/linalg.hpp"

namespace gwpd {

inline constexpr int max_derivative_order = 4;

/// Dense rank-r tensor over a D-dimensional index space, row-major storage.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rank, int dim) : rank_(rank), dim_(dim), data_(ipow(dim, rank), 0.0) {}

    static Tensor scalar(double v) {
        Tensor t(0, 1);
        t.data_[0] = v;
        return t;
    }
    static Tensor from(const Vec& v) {
        Tensor t(1, static_cast<int>(v.size()));
        std::copy(v.data(), v.data() + v.size(), t.data_.begin());
        return t;
    }
    static Tensor from(const Mat& m) {
        Tensor t(2, static_cast<int>(m.rows()));
        for (int i = 0; i < t.dim_; ++i)
            for (int j = 0; j < t.dim_; ++j) t.data_[static_cast<std::size_t>(i * t.dim_ + j)] = m(i, j);
        return t;
    }

    int rank() const { return rank_; }
    int dim() const { return dim_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    template <class... Idx>
    double& operator()(Idx... idx) { return data_[offset({static_cast<int>(idx)...})]; }
    template <class... Idx>
    double operator()(Idx... idx) const { return data_[offset({static_cast<int>(idx)...})]; }

    double& at(const std::vector<int>& idx) { return data_[offset(idx)]; }
    double at(const std::vector<int>& idx) const { return data_[offset(idx)]; }

    double value() const { return data_.at(0); }
    Vec vector() const { return Eigen::Map<const Vec>(data_.data(), dim_); }
    Mat matrix() const {
        Mat m(dim_, dim_);
        for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) m(i, j) = data_[static_cast<std::size_t>(i * dim_ + j)];
        return m;
    }

    /// Index tuple of a flat position.
    std::vector<int> unflatten(std::size_t flat) const {
        std::vector<int> idx(static_cast<std::size_t>(rank_));
        for (int k = rank_ - 1; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)] = static_cast<int>(flat % static_cast<std::size_t>(dim_));
            flat /= static_cast<std::size_t>(dim_);
        }
        return idx;
    }

    /// Average over all index permutations.
    Tensor symmetrized() const {
        Tensor out(rank_, dim_);
        for (std::size_t f = 0; f < data_.size(); ++f) {
            std::vector<int> idx = unflatten(f);
            std::sort(idx.begin(), idx.end());
            double sum = 0.0;
            int count = 0;
            do {
                sum += at(idx);
                ++count;
            } while (std::next_permutation(idx.begin(), idx.end()));
            out.data_[f] = sum / count;
        }
        return out;
    }

    double max_abs_diff(const Tensor& o) const {
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::abs(data_[i] - o.data_[i]));
        return m;
    }

    Tensor& operator+=(const Tensor& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }
    friend Tensor operator-(Tensor a, const Tensor& b) {
        for (std::size_t i = 0; i < a.data_.size(); ++i) a.data_[i] -= b.data_[i];
        return a;
    }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

private:
    static std::size_t ipow(int b, int e) {
        std::size_t r = 1;
        for (int i = 0; i < e; ++i) r *= static_cast<std::size_t>(b);
        return r;
    }
    std::size_t offset(std::initializer_list<int> idx) const {
        std::size_t o = 0;
        for (int i : idx) o = o * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
        return o;
    }
    std::size_t offset(const std::vector<int>& idx) const {
        std::size_t o = 0;
        for (int i : idx) o = o * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
        return o;
    }

    int rank_ = 0;
    int dim_ = 1;
    std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// V(q) = v0 + (q - c)^T K (q - c) / 2 with K positive definite.
struct HarmonicParams {
    Mat K;
    Vec center;
    double v0 = 0.0;
};

/// V(q) = sum_i De_i (1 - exp(-a_i (q_i - qe_i)))^2.
struct MorseParams {
    Vec De;
    Vec a;
    Vec qe;
};

/// One monomial coefficient * prod_i q_i^powers[i].
struct Monomial {
    double coefficient = 0.0;
    std::vector<int> powers;
};

struct PolynomialParams {
    std::vector<Monomial> terms;
};

/// One-dimensional tabulated potential on a uniform grid.
struct TableParams {
    double qmin = 0.0;
    double qmax = 1.0;
    std::vector<double> values;
};

enum class PotentialKind { harmonic, morse, quartic_double_well, polynomial, user_table };

inline std::string_view to_string(PotentialKind k) {
    switch (k) {
    case PotentialKind::harmonic: return "harmonic";
    case PotentialKind::morse: return "morse";
    case PotentialKind::quartic_double_well: return "quartic_double_well";
    case PotentialKind::polynomial: return "polynomial";
    case PotentialKind::user_table: return "user_table";
    }
    return "unknown";
}

/// Potential energy surface with derivative tensors of order 0..4.
///
/// Orders up to `analytic_order()` are exact; higher orders come from the finite-difference
/// fallback when `fd_fallback()` is enabled.
class PotentialModel {
public:
    static PotentialModel harmonic(Mat K, Vec center, double v0 = 0.0) {
        if (K.rows() != K.cols() || center.size() != K.rows()) throw InvalidState("harmonic: shape mismatch");
        if (!is_symmetric(K)) throw InvalidState("harmonic: force constant matrix is not symmetric");
        require_positive_definite(K, "harmonic force constant matrix");
        PotentialModel m(PotentialKind::harmonic, static_cast<int>(K.rows()), 4);
        m.params_ = HarmonicParams{symmetrize(K), std::move(center), v0};
        return m;
    }

    /// V = m omega^2 q^2 / 2 in one dimension.
    static PotentialModel harmonic_1d(double mass, double omega) {
        return harmonic(Mat::Constant(1, 1, mass * omega * omega), Vec::Zero(1));
    }

    static PotentialModel morse(Vec De, Vec a, Vec qe) {
        if (De.size() != a.size() || De.size() != qe.size()) throw InvalidState("morse: shape mismatch");
        if (!(De.array() > 0.0).all() || !(a.array() > 0.0).all())
            throw InvalidState("morse: De and a must be positive");
        PotentialModel m(PotentialKind::morse, static_cast<int>(De.size()), 4);
        m.params_ = MorseParams{std::move(De), std::move(a), std::move(qe)};
        return m;
    }

    /// One-dimensional Morse oscillator; the defaults are the repository's example values.
    static PotentialModel morse_1d(double De = 0.1, double a = 1.0, double qe = 0.0) {
        return morse(Vec::Constant(1, De), Vec::Constant(1, a), Vec::Constant(1, qe));
    }

    /// V = sum_i (quartic/4 q_i^4 - quadratic/2 q_i^2) + coupling sum_{i<j} q_i^2 q_j^2.
    static PotentialModel quartic_double_well(int dim, double quartic, double quadratic = 0.0,
                                              double coupling = 0.0) {
        std::vector<Monomial> terms;
        for (int i = 0; i < dim; ++i) {
            std::vector<int> p4(static_cast<std::size_t>(dim), 0), p2(static_cast<std::size_t>(dim), 0);
            p4[static_cast<std::size_t>(i)] = 4;
            p2[static_cast<std::size_t>(i)] = 2;
            if (quartic != 0.0) terms.push_back({quartic / 4.0, p4});
            if (quadratic != 0.0) terms.push_back({-quadratic / 2.0, p2});
            for (int j = i + 1; j < dim; ++j) {
                std::vector<int> pc(static_cast<std::size_t>(dim), 0);
                pc[static_cast<std::size_t>(i)] = 2;
                pc[static_cast<std::size_t>(j)] = 2;
                if (coupling != 0.0) terms.push_back({coupling, pc});
            }
        }
        PotentialModel m = polynomial(dim, std::move(terms));
        m.kind_ = PotentialKind::quartic_double_well;
        return m;
    }

    static PotentialModel polynomial(int dim, std::vector<Monomial> terms) {
        for (const Monomial& t : terms) {
            if (t.powers.size() != static_cast<std::size_t>(dim)) throw InvalidState("polynomial: wrong exponent count");
            for (int e : t.powers)
                if (e < 0) throw InvalidState("polynomial: negative exponent");
        }
        PotentialModel m(PotentialKind::polynomial, dim, 4);
        m.params_ = PolynomialParams{std::move(terms)};
        return m;
    }

    static PotentialModel user_table(double qmin, double qmax, std::vector<double> values) {
        if (values.size() < 8) throw InvalidState("user_table: need at least 8 samples");
        if (!(qmax > qmin)) throw InvalidState("user_table: qmax must exceed qmin");
        PotentialModel m(PotentialKind::user_table, 1, 2);
        const double h = (qmax - qmin) / static_cast<double>(values.size() - 1);
        m.spline_ = std::make_shared<const Spline>(values, qmin, h);
        m.params_ = TableParams{qmin, qmax, std::move(values)};
        return m;
    }

    PotentialKind kind() const { return kind_; }
    int dim() const { return dim_; }
    int analytic_order() const { return analytic_order_; }
    bool fd_fallback() const { return fd_fallback_; }
    void set_fd_fallback(bool on) { fd_fallback_ = on; }

    /// True when order `k` is available analytically.
    bool supports(int k) const { return k >= 0 && k <= analytic_order_; }

    bool is_polynomial() const { return std::holds_alternative<PolynomialParams>(params_); }
    bool is_harmonic() const { return kind_ == PotentialKind::harmonic; }

    /// Total degree of a polynomial model (2 for harmonic), -1 otherwise.
    int polynomial_degree() const {
        if (is_harmonic()) return 2;
        if (!is_polynomial()) return -1;
        int deg = 0;
        for (const Monomial& t : std::get<PolynomialParams>(params_).terms)
            deg = std::max(deg, std::accumulate(t.powers.begin(), t.powers.end(), 0));
        return deg;
    }

    const HarmonicParams* harmonic_params() const { return std::get_if<HarmonicParams>(&params_); }
    const MorseParams* morse_params() const { return std::get_if<MorseParams>(&params_); }
    const PolynomialParams* polynomial_params() const { return std::get_if<PolynomialParams>(&params_); }
    const TableParams* table_params() const { return std::get_if<TableParams>(&params_); }

    /// Derivative tensor of rank `order` at q; totally symmetric.
    Tensor evaluate(const Vec& q, int order) const;

    double value(const Vec& q) const { return analytic(q, 0).value(); }
    Vec gradient(const Vec& q) const { return evaluate(q, 1).vector(); }
    Mat hessian(const Vec& q) const { return evaluate(q, 2).matrix(); }

    /// Exact derivative tensor; order must not exceed analytic_order().
    Tensor analytic(const Vec& q, int order) const;

private:
    using Spline = boost::math::interpolators::cardinal_quintic_b_spline<double>;

    PotentialModel(PotentialKind k, int dim, int analytic_order)
        : kind_(k), dim_(dim), analytic_order_(analytic_order) {}

    Tensor harmonic_derivative(const HarmonicParams& h, const Vec& q, int order) const {
        Tensor t(order, dim_);
        const Vec x = q - h.center;
        switch (order) {
        case 0: t.data()[0] = h.v0 + 0.5 * x.dot(h.K * x); break;
        case 1: t = Tensor::from(Vec(h.K * x)); break;
        case 2: t = Tensor::from(h.K); break;
        default: break;
        }
        return t;
    }

    Tensor morse_derivative(const MorseParams& mp, const Vec& q, int order) const {
        // Separable: only the fully diagonal entries are nonzero for order >= 1.
        Tensor t(order, dim_);
        double v = 0.0;
        for (int i = 0; i < dim_; ++i) {
            const double a = mp.a(i), De = mp.De(i);
            const double e = std::exp(-a * (q(i) - mp.qe(i)));
            // d^k/dq^k of De (1 - e)^2 = De (1 - 2e + e^2)
            // = De[ -2 (-a)^k e + (-2a)^k e^2 ] for k >= 1
            if (order == 0) {
                v += De * (1.0 - e) * (1.0 - e);
            } else {
                const double dk = De * (-2.0 * std::pow(-a, order) * e + std::pow(-2.0 * a, order) * e * e);
                std::vector<int> idx(static_cast<std::size_t>(order), i);
                t.at(idx) = dk;
            }
        }
        if (order == 0) t.data()[0] = v;
        return t;
    }

    Tensor polynomial_derivative(const PolynomialParams& pp, const Vec& q, int order) const {
        Tensor t(order, dim_);
        for (std::size_t f = 0; f < t.size(); ++f) {
            const std::vector<int> idx = t.unflatten(f);
            // Multiplicity of each coordinate in the derivative multi-index.
            std::vector<int> k(static_cast<std::size_t>(dim_), 0);
            for (int i : idx) ++k[static_cast<std::size_t>(i)];
            double sum = 0.0;
            for (const Monomial& m : pp.terms) {
                double term = m.coefficient;
                for (int i = 0; i < dim_ && term != 0.0; ++i) {
                    const int e = m.powers[static_cast<std::size_t>(i)];
                    const int ki = k[static_cast<std::size_t>(i)];
                    if (ki > e) {
                        term = 0.0;
                        break;
                    }
                    double falling = 1.0;
                    for (int r = 0; r < ki; ++r) falling *= static_cast<double>(e - r);
                    term *= falling * std::pow(q(i), e - ki);
                }
                sum += term;
            }
            t.data()[f] = sum;
        }
        return t;
    }

    Tensor table_derivative(const Vec& q, int order) const {
        const double x = q(0);
        const auto& tp = std::get<TableParams>(params_);
        if (x < tp.qmin || x > tp.qmax) throw InvalidState("user_table: position outside the tabulated range");
        Tensor t(order, 1);
        switch (order) {
        case 0: t.data()[0] = (*spline_)(x); break;
        case 1: t.data()[0] = spline_->prime(x); break;
        case 2: t.data()[0] = spline_->double_prime(x); break;
        default: throw UnsupportedError("user_table: order > 2 is not analytic");
        }
        return t;
    }

    PotentialKind kind_;
    int dim_;
    int analytic_order_;
    bool fd_fallback_ = true;
    std::variant<HarmonicParams, MorseParams, PolynomialParams, TableParams> params_;
    std::shared_ptr<const Spline> spline_;
};

/// Default finite-difference step for a given order.
inline double default_fd_step(int order) { return order >= 4 ? 5e-3 : 1e-3; }

inline Tensor central_difference(const PotentialModel& model, const Vec& q, int order, double h);

/// Order-3 or order-4 tensor by central differences of the highest analytic derivative,
/// Richardson-extrapolated over (h, h/2) and symmetrized over index permutations.
inline Tensor finite_difference_tensor(const PotentialModel& model, const Vec& q, int order, double step) {
    if (!(step > 0.0)) throw InvalidState("finite-difference step must be positive");
    if (order < 1 || order > max_derivative_order) throw UnsupportedError("finite-difference order out of range");
    if (!model.supports(order - 1) && !model.supports(order - 2))
        throw UnsupportedError("finite differences need analytic order " + std::to_string(order - 2) + " or " +
                               std::to_string(order - 1));
    const Tensor coarse = central_difference(model, q, order, step);
    const Tensor fine = central_difference(model, q, order, step / 2.0);
    Tensor r = (4.0 / 3.0) * fine - (1.0 / 3.0) * coarse;
    return r.symmetrized();
}

inline Tensor central_difference(const PotentialModel& model, const Vec& q, int order, double h) {
    const int d = model.dim();
    Tensor out(order, d);
    if (model.supports(order - 1)) {
        // First central difference of the rank (order-1) tensor along the leading index.
        for (int i = 0; i < d; ++i) {
            Vec qp = q, qm = q;
            qp(i) += h;
            qm(i) -= h;
            const Tensor tp = model.analytic(qp, order - 1);
            const Tensor tm = model.analytic(qm, order - 1);
            for (std::size_t f = 0; f < tp.size(); ++f)
                out.data()[static_cast<std::size_t>(i) * tp.size() + f] = (tp.data()[f] - tm.data()[f]) / (2.0 * h);
        }
        return out;
    }
    // Second central differences of the rank (order-2) tensor along the two leading indices.
    const Tensor t0 = model.analytic(q, order - 2);
    const std::size_t inner = t0.size();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            std::vector<double> block(inner);
            if (i == j) {
                Vec qp = q, qm = q;
                qp(i) += h;
                qm(i) -= h;
                const Tensor tp = model.analytic(qp, order - 2), tm = model.analytic(qm, order - 2);
                for (std::size_t f = 0; f < inner; ++f)
                    block[f] = (tp.data()[f] - 2.0 * t0.data()[f] + tm.data()[f]) / (h * h);
            } else {
                Vec qpp = q, qpm = q, qmp = q, qmm = q;
                qpp(i) += h, qpp(j) += h;
                qpm(i) += h, qpm(j) -= h;
                qmp(i) -= h, qmp(j) += h;
                qmm(i) -= h, qmm(j) -= h;
                const Tensor a = model.analytic(qpp, order - 2), b = model.analytic(qpm, order - 2);
                const Tensor c = model.analytic(qmp, order - 2), e = model.analytic(qmm, order - 2);
                for (std::size_t f = 0; f < inner; ++f)
                    block[f] = (a.data()[f] - b.data()[f] - c.data()[f] + e.data()[f]) / (4.0 * h * h);
            }
            const std::size_t base = (static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j)) * inner;
            std::copy(block.begin(), block.end(), out.data().begin() + static_cast<std::ptrdiff_t>(base));
        }
    }
    return out;
}

inline Tensor PotentialModel::analytic(const Vec& q, int order) const {
    if (q.size() != dim_) throw InvalidState("potential evaluated at a point of wrong dimension");
    if (order < 0 || order > analytic_order_) throw UnsupportedError("derivative order not analytic for this model");
    return std::visit(
        [&](const auto& p) -> Tensor {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, HarmonicParams>) return harmonic_derivative(p, q, order);
            else if constexpr (std::is_same_v<P, MorseParams>) return morse_derivative(p, q, order);
            else if constexpr (std::is_same_v<P, PolynomialParams>) return polynomial_derivative(p, q, order);
            else return table_derivative(q, order);
        },
        params_);
}

inline Tensor PotentialModel::evaluate(const Vec& q, int order) const {
    if (order < 0 || order > max_derivative_order) throw UnsupportedError("derivative order must be in 0..4");
    if (supports(order)) return analytic(q, order);
    if (!fd_fallback_)
        throw UnsupportedError("order " + std::to_string(order) + " is not analytic and finite differences are off");
    return finite_difference_tensor(*this, q, order, default_fd_step(order));
}

} // namespace gwpd
