#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "snojoe/random.hpp"

namespace snojoe {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Singular values below this are treated as a dead layer.
inline constexpr double kDegenerateSigma = 1e-12;

/// Running estimate of the top singular triplet of one weight matrix.
/// `u` lives in the output space (rows), `v` in the input space (cols).
template <typename Scalar>
struct PowerIterState {
    Vector<Scalar> u;
    Vector<Scalar> v;
    Scalar sigma_estimate{0};

    /// Unit-norm Gaussian u, and v = W^T u direction left for the first step.
    static PowerIterState random(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
        PowerIterState s;
        s.u = rng.normal_vector(rows).template cast<Scalar>();
        s.u.normalize();
        s.v = Vector<Scalar>::Zero(cols);
        s.v[0] = Scalar(1);
        return s;
    }
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

/// Alternating W^T u / W v refinement of `state`. Stops after `steps`
/// iterations or once two successive sigma estimates differ by less than `tol`.
/// sigma_estimate is u^T W v for the returned (u, v).
template <typename Derived, typename Scalar = typename Derived::Scalar>
PowerIterState<Scalar> power_iteration(const Eigen::MatrixBase<Derived>& W, PowerIterState<Scalar> state,
                                       int steps, Scalar tol) {
    if (steps <= 0) throw std::invalid_argument("power_iteration: steps must be positive");
    if (!(tol > Scalar(0))) throw std::invalid_argument("power_iteration: tol must be positive");
    if (state.u.size() != W.rows() || state.v.size() != W.cols())
        throw std::invalid_argument("power_iteration: state dimensions do not match weight matrix");
    require_finite(W, "power_iteration");
    if (W.squaredNorm() == Scalar(0)) throw std::domain_error("degenerate weight matrix");

    Scalar previous = state.sigma_estimate;
    for (int i = 0; i < steps; ++i) {
        Vector<Scalar> v = W.transpose() * state.u;
        Scalar vn = v.norm();
        if (vn == Scalar(0)) {
            // u is orthogonal to range(W); restart from the largest column.
            Eigen::Index col = 0;
            W.colwise().norm().maxCoeff(&col);
            v = Vector<Scalar>::Unit(W.cols(), col);
            vn = Scalar(1);
        }
        state.v = v / vn;
        Vector<Scalar> u = W * state.v;
        const Scalar un = u.norm();
        if (un == Scalar(0)) throw std::domain_error("degenerate weight matrix");
        state.u = u / un;
        state.sigma_estimate = state.u.dot(W * state.v);
        if (std::abs(state.sigma_estimate - previous) < tol) break;
        previous = state.sigma_estimate;
    }
    if (state.sigma_estimate < Scalar(kDegenerateSigma)) throw std::domain_error("degenerate weight matrix");
    return state;
}

/// Largest singular value as the square root of the top eigenvalue of W^T W
/// (or W W^T, whichever is smaller), from a dense self-adjoint eigensolver.
/// Shares no code with power_iteration; tests use it as the reference.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar spectral_norm_oracle(const Eigen::MatrixBase<Derived>& W) {
    require_finite(W, "spectral_norm_oracle");
    if (W.size() == 0) return Scalar(0);
    const Matrix<Scalar> gram = W.rows() >= W.cols() ? Matrix<Scalar>(W.transpose() * W)
                                                     : Matrix<Scalar>(W * W.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw std::runtime_error("spectral_norm_oracle: eigensolver failed");
    return std::sqrt(std::max(Scalar(0), solver.eigenvalues().maxCoeff()));
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
Matrix<Scalar> normalize_spectral(const Eigen::MatrixBase<Derived>& W, Scalar sigma) {
    if (!std::isfinite(sigma) || !(sigma > Scalar(0)))
        throw std::invalid_argument("normalize_spectral: sigma must be positive and finite");
    return W / sigma;
}

/// Two-sided Lipschitz envelope of a stack of residual maps x + g(x) where
/// every g is alpha-Lipschitz.
struct LipschitzBounds {
    double lower;
    double upper;
    double alpha;
    int depth_L;
};

inline LipschitzBounds lipschitz_bounds(double alpha, int depth_L) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("lipschitz_bounds: alpha must lie in (0, 1]");
    if (depth_L < 1) throw std::invalid_argument("lipschitz_bounds: depth must be positive");
    const double e = static_cast<double>(depth_L - 1);
    return {std::pow(1.0 - alpha, e), std::pow(1.0 + alpha, e), alpha, depth_L};
}

}  // namespace snojoe
