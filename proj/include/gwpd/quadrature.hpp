#pragma once

// Gaussian expectation values <V^(j)> = int V^(j)(q_t + x) rho(x) dx.

#include <map>
#include <vector>

#include "gwpd/core.hpp"
#include "gwpd/potentials.hpp"

namespace gwpd {

/// Nodes and weights of the probabilists' Gauss-Hermite rule (weight exp(-u^2/2)/sqrt(2 pi)),
/// from the eigen-decomposition of the Jacobi matrix; weights sum to one.
struct HermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit HermiteRule(int n) {
        if (n < 1) throw UnsupportedError("quadrature order must be at least 1");
        Mat J = Mat::Zero(n, n);
        for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
        Eigen::SelfAdjointEigenSolver<Mat> es(J);
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            // Newton polish on the orthonormal Hermite polynomial, then Christoffel weights.
            double x = es.eigenvalues()(i);
            for (int it = 0; it < 3; ++it) {
                const auto [pn, pn1] = orthonormal(n, x);
                x -= pn / (std::sqrt(static_cast<double>(n)) * pn1);
            }
            double inv_w = 0.0, prev = 0.0, cur = 1.0;
            for (int j = 0; j < n; ++j) {
                inv_w += cur * cur;
                const double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(j + 1.0);
                prev = cur;
                cur = next;
            }
            nodes[static_cast<std::size_t>(i)] = x;
            weights[static_cast<std::size_t>(i)] = 1.0 / inv_w;
        }
        // Enforce the reflection symmetry of the exact rule so that odd moments vanish identically.
        for (std::size_t i = 0, j = nodes.size() - 1; i < j; ++i, --j) {
            const double x = 0.5 * (nodes[j] - nodes[i]), w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x, nodes[j] = x;
            weights[i] = weights[j] = w;
        }
        if (n % 2) nodes[static_cast<std::size_t>(n / 2)] = 0.0;
        double total = 0.0;
        for (double w : weights) total += w;
        for (double& w : weights) w /= total;
    }

private:
    /// (phi_n(x), phi_{n-1}(x)) of the orthonormal probabilists' Hermite family.
    static std::pair<double, double> orthonormal(int n, double x) {
        double prev = 0.0, cur = 1.0;
        for (int j = 0; j < n; ++j) {
            const double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(j + 1.0);
            prev = cur;
            cur = next;
        }
        return {cur, prev};
    }
};

/// Expectation value together with a flag raised when the rule cannot be exact.
struct Expectation {
    Tensor value;
    bool warning = false;
};

/// Moment E[prod_i x_i^{k_i}] of a centered Gaussian with covariance sigma (Isserlis pairings).
class GaussianMoments {
public:
    explicit GaussianMoments(Mat sigma) : sigma_(std::move(sigma)) {}

    double operator()(std::vector<int> k) {
        int total = 0;
        for (int v : k) total += v;
        if (total == 0) return 1.0;
        if (total % 2) return 0.0;
        if (auto it = cache_.find(k); it != cache_.end()) return it->second;
        std::vector<int> key = k;
        // Pair the first remaining factor with every other factor.
        int a = 0;
        while (k[static_cast<std::size_t>(a)] == 0) ++a;
        --k[static_cast<std::size_t>(a)];
        double sum = 0.0;
        for (std::size_t b = 0; b < k.size(); ++b) {
            if (k[b] == 0) continue;
            const double mult = k[b];
            --k[b];
            sum += mult * sigma_(a, static_cast<Eigen::Index>(b)) * (*this)(k);
            ++k[b];
        }
        cache_.emplace(std::move(key), sum);
        return sum;
    }

private:
    Mat sigma_;
    std::map<std::vector<int>, double> cache_;
};

/// Gauss-Hermite tensor-product engine; 16 nodes per dimension by default.
class ExpectationEngine {
public:
    explicit ExpectationEngine(int order = 16) : rule_(order), order_(order) {}

    int order() const { return order_; }

    /// Use quadrature even where a closed form exists.
    bool force_quadrature = false;

    /// Sum over nodes of w * f(q_t + x), x = U diag(sqrt(lambda)) u for sigma = U diag(lambda) U^T.
    template <class F>
    auto integrate(const Vec& center, const Mat& sigma, F&& f) const {
        const int d = static_cast<int>(center.size());
        Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sigma));
        if (es.eigenvalues().minCoeff() <= 0.0) throw InvalidState("position covariance is not positive definite");
        const Mat T = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal();
        const int n = order_;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        Vec u(d);
        using R = std::decay_t<decltype(f(center))>;
        R acc{};
        bool first = true;
        for (;;) {
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                u(i) = rule_.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
                w *= rule_.weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            }
            R val = f(Vec(center + T * u));
            if (first) {
                acc = w * val;
                first = false;
            } else {
                acc += w * val;
            }
            int k = 0;
            while (k < d && ++idx[static_cast<std::size_t>(k)] == n) idx[static_cast<std::size_t>(k++)] = 0;
            if (k == d) break;
        }
        return acc;
    }

    /// <V^(order)> over the Gaussian density with center q and covariance sigma.
    Expectation expect(const PotentialModel& model, const Vec& q, const Mat& sigma, int order) const {
        if (order < 0 || order > 2) throw UnsupportedError("expectation order must be 0, 1 or 2");
        const int deg = model.polynomial_degree();
        if (deg >= 0 && !force_quadrature) return {closed_form(model, q, sigma, order), false};
        Expectation e;
        e.value = integrate(q, sigma, [&](const Vec& x) { return model.evaluate(x, order); });
        e.warning = deg >= 0 && deg - order > 2 * order_ - 1;
        return e;
    }

    Expectation expect(const PotentialModel& model, const GaussianHeller& s, const PhysicalSetup& setup,
                       int order) const {
        return expect(model, s.q, position_covariance(s, setup), order);
    }

private:
    static Tensor closed_form(const PotentialModel& model, const Vec& q, const Mat& sigma, int order) {
        const int d = model.dim();
        if (const HarmonicParams* h = model.harmonic_params()) {
            const Vec x = q - h->center;
            switch (order) {
            case 0: return Tensor::scalar(h->v0 + 0.5 * x.dot(h->K * x) + 0.5 * (h->K * sigma).trace());
            case 1: return Tensor::from(Vec(h->K * x));
            default: return Tensor::from(h->K);
            }
        }
        const PolynomialParams& pp = *model.polynomial_params();
        GaussianMoments moments(sigma);
        Tensor t(order, d);
        for (std::size_t f = 0; f < t.size(); ++f) {
            std::vector<int> k(static_cast<std::size_t>(d), 0);
            for (int i : t.unflatten(f)) ++k[static_cast<std::size_t>(i)];
            double sum = 0.0;
            for (const Monomial& m : pp.terms) {
                // Differentiate, then expand prod (q_i + x_i)^{n_i} binomially.
                std::vector<int> n(static_cast<std::size_t>(d));
                double c = m.coefficient;
                for (int i = 0; i < d && c != 0.0; ++i) {
                    const int e = m.powers[static_cast<std::size_t>(i)], ki = k[static_cast<std::size_t>(i)];
                    if (ki > e) c = 0.0;
                    for (int r = 0; r < ki && c != 0.0; ++r) c *= static_cast<double>(e - r);
                    n[static_cast<std::size_t>(i)] = e - ki;
                }
                if (c == 0.0) continue;
                sum += c * shifted_moment(moments, q, n);
            }
            t.data()[f] = sum;
        }
        return t;
    }

    /// E[prod_i (q_i + x_i)^{n_i}].
    static double shifted_moment(GaussianMoments& moments, const Vec& q, const std::vector<int>& n) {
        const std::size_t d = n.size();
        std::vector<int> m(d, 0);
        double sum = 0.0;
        for (;;) {
            double coeff = 1.0;
            for (std::size_t i = 0; i < d; ++i)
                coeff *= binomial(n[i], m[i]) * std::pow(q(static_cast<Eigen::Index>(i)), n[i] - m[i]);
            if (coeff != 0.0) sum += coeff * moments(m);
            std::size_t k = 0;
            while (k < d && ++m[k] > n[k]) m[k++] = 0;
            if (k == d) break;
        }
        return sum;
    }

    static double binomial(int n, int k) {
        double r = 1.0;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    }

    HermiteRule rule_;
    int order_;
};

} // namespace gwpd
