#pragma once

// Products of scaled arrays. Results are not renormalized; callers do that
// so rescaling events can be counted in one place.

#include "gtop/scaled.hpp"

namespace gtop::ops {

inline ScaledVector mul(const ScaledMatrix& a, const ScaledVector& x) {
    return ScaledVector(a.mantissa * x.mantissa, a.log_scale + x.log_scale);
}

inline ScaledVector tmul(const ScaledMatrix& a, const ScaledVector& x) {
    return ScaledVector(a.mantissa.transpose() * x.mantissa, a.log_scale + x.log_scale);
}

inline ScaledMatrix mul(const ScaledMatrix& a, const ScaledMatrix& b) {
    return ScaledMatrix(a.mantissa * b.mantissa, a.log_scale + b.log_scale);
}

// a * b^T
inline ScaledMatrix mul_t(const ScaledMatrix& a, const ScaledMatrix& b) {
    return ScaledMatrix(a.mantissa * b.mantissa.transpose(), a.log_scale + b.log_scale);
}

// a^T * b
inline ScaledMatrix t_mul(const ScaledMatrix& a, const ScaledMatrix& b) {
    return ScaledMatrix(a.mantissa.transpose() * b.mantissa, a.log_scale + b.log_scale);
}

template <typename Array>
Scaled<Array> prod(const Scaled<Array>& a, const Scaled<Array>& b) {
    return Scaled<Array>(a.mantissa.cwiseProduct(b.mantissa), a.log_scale + b.log_scale);
}

// diag(v) * a
inline ScaledMatrix scale_rows(const ScaledVector& v, const ScaledMatrix& a) {
    return ScaledMatrix(v.mantissa.asDiagonal() * a.mantissa, v.log_scale + a.log_scale);
}

// a * diag(v)
inline ScaledMatrix scale_cols(const ScaledMatrix& a, const ScaledVector& v) {
    return ScaledMatrix(a.mantissa * v.mantissa.asDiagonal(), a.log_scale + v.log_scale);
}

inline ScaledVector row_sums(const ScaledMatrix& a) {
    return ScaledVector(a.mantissa.rowwise().sum(), a.log_scale);
}

inline ScaledVector col_sums(const ScaledMatrix& a) {
    return ScaledVector(a.mantissa.colwise().sum().transpose(), a.log_scale);
}

inline ScaledMatrix transpose(const ScaledMatrix& a) {
    return ScaledMatrix(a.mantissa.transpose(), a.log_scale);
}

inline ScaledMatrix identity(Index n) { return ScaledMatrix(Matrix::Identity(n, n)); }

template <typename Array>
Scaled<Array> normalized(Scaled<Array> a) {
    a.renormalize();
    return a;
}

}  // namespace gtop::ops
