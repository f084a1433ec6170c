#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>

namespace gtop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Array with a shared natural-log offset: value = mantissa * exp(log_scale).
// Mantissa entries are nonnegative everywhere in this library.
template <typename Array>
struct Scaled {
    Array mantissa;
    double log_scale = 0.0;

    Scaled() = default;
    explicit Scaled(Array m, double s = 0.0) : mantissa(std::move(m)), log_scale(s) {}

    Index size() const { return mantissa.size(); }

    // Shifts the mantissa by a power of two so its largest entry lies in [0.5, 1).
    // Returns true if the largest entry had drifted outside [2^-threshold, 2^threshold].
    bool renormalize(int threshold = 64) {
        if (mantissa.size() == 0) return false;
        const double top = mantissa.maxCoeff();
        if (!(top > 0.0)) {
            log_scale = 0.0;
            return false;
        }
        int e = 0;
        std::frexp(top, &e);
        if (e != 0) {
            mantissa *= std::ldexp(1.0, -e);
            log_scale += e * std::log(2.0);
        }
        return e > threshold || e < -threshold + 1;
    }

    bool is_zero() const { return mantissa.size() == 0 || !(mantissa.maxCoeff() > 0.0); }

    // May overflow to +inf; use log-space helpers when magnitudes matter.
    Array value() const { return mantissa * std::exp(log_scale); }

    // log of the sum of all entries, -inf for an all-zero array.
    double log_sum() const {
        const double s = mantissa.sum();
        return s > 0.0 ? std::log(s) + log_scale : -kInf;
    }

    double sum() const { return std::exp(log_sum()); }

    // Entrywise natural logs, -inf for zero entries.
    Array log_values() const {
        Array out = mantissa;
        for (Index i = 0; i < out.size(); ++i) {
            double& v = out.data()[i];
            v = v > 0.0 ? std::log(v) + log_scale : -kInf;
        }
        return out;
    }
};

using ScaledVector = Scaled<Vector>;
using ScaledMatrix = Scaled<Matrix>;

inline ScaledVector ones_vector(Index n) { return ScaledVector(Vector::Ones(n)); }
inline ScaledMatrix ones_matrix(Index rows, Index cols) { return ScaledMatrix(Matrix::Ones(rows, cols)); }

// Builds a scaled array from entrywise logs (-inf allowed, +inf rejected by callers).
template <typename Array>
Scaled<Array> from_log(const Array& logs) {
    double top = -kInf;
    for (Index i = 0; i < logs.size(); ++i) top = std::max(top, logs.data()[i]);
    Scaled<Array> out;
    out.mantissa = logs;
    if (!(top > -kInf)) {
        out.mantissa.setZero();
        return out;
    }
    out.log_scale = top;
    for (Index i = 0; i < logs.size(); ++i) {
        double& v = out.mantissa.data()[i];
        v = std::exp(v - top);
    }
    return out;
}

template <typename Array>
Scaled<Array> hadamard(const Scaled<Array>& a, const Scaled<Array>& b) {
    Scaled<Array> out(a.mantissa.cwiseProduct(b.mantissa), a.log_scale + b.log_scale);
    out.renormalize();
    return out;
}

// Max-norm distance divided by the larger max-norm, scales reconciled.
template <typename Array>
double relative_difference(const Scaled<Array>& a, const Scaled<Array>& b) {
    const double ma = a.is_zero() ? 0.0 : a.mantissa.maxCoeff();
    const double mb = b.is_zero() ? 0.0 : b.mantissa.maxCoeff();
    if (ma == 0.0 && mb == 0.0) return 0.0;
    if (ma == 0.0 || mb == 0.0) return 1.0;
    const double ref = std::max(a.log_scale + std::log(ma), b.log_scale + std::log(mb));
    const double fa = std::exp(a.log_scale - ref);
    const double fb = std::exp(b.log_scale - ref);
    const double top = std::max(ma * fa, mb * fb);
    return (a.mantissa * fa - b.mantissa * fb).cwiseAbs().maxCoeff() / top;
}

// Row-major flattening, which is how matrix arguments reach separable functionals.
inline Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unflatten(const Vector& v, Index rows, Index cols) {
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace gtop
