#pragma once

#include "gtop/scaled.hpp"

#include <variant>
#include <vector>

namespace gtop {

// Catalog of separable convex functionals on a marginal (vector) or a
// row-major flattened bimarginal.
namespace fn {
struct Zero {
    Index size = 0;
};
struct Equality {
    Vector target;
};
// lower may be 0, upper may be +inf.
struct Box {
    Vector lower;
    Vector upper;
};
struct Linear {
    Vector cost;
};
// weight * sum |x - anchor|^exponent
struct QuadraticDistance {
    double weight = 1.0;
    Vector anchor;
    double exponent = 2.0;
};
// sum x / (capacity - x) on [0, capacity)
struct Congestion {
    Vector capacity;
};
}  // namespace fn

using FunctionPiece =
    std::variant<fn::Zero, fn::Equality, fn::Box, fn::Linear, fn::QuadraticDistance, fn::Congestion>;

enum class FunctionKind { Zero, Equality, Box, Linear, QuadraticDistance, Congestion };

const char* kind_name(FunctionKind kind);
FunctionKind kind_of(const FunctionPiece& piece);
Index piece_size(const FunctionPiece& piece);

// A function is a concatenation of pieces tiling its argument, so e.g. a
// congestion cost on edge states can sit next to a Zero on source/sink states.
class MarginalFunction {
public:
    MarginalFunction() = default;
    explicit MarginalFunction(FunctionPiece piece);

    static MarginalFunction zero(Index size);
    static MarginalFunction equality(Vector target);
    static MarginalFunction box(Vector lower, Vector upper);
    static MarginalFunction box_upper(Vector upper);
    static MarginalFunction linear(Vector cost);
    static MarginalFunction quadratic(double weight, Vector anchor, double exponent = 2.0);
    static MarginalFunction congestion(Vector capacity);
    static MarginalFunction concat(const std::vector<MarginalFunction>& parts);

    Index size() const { return size_; }
    const std::vector<FunctionPiece>& pieces() const { return pieces_; }
    const std::vector<Index>& offsets() const { return offsets_; }
    bool is_zero() const;

    // The same functional multiplied by a positive factor (time-step weighting).
    MarginalFunction scaled(double factor) const;

private:
    void append(FunctionPiece piece);

    std::vector<FunctionPiece> pieces_;
    std::vector<Index> offsets_;
    Index size_ = 0;
};

// The kappa functions whose sum is attached to one node or edge.
struct CompositeFunction {
    std::vector<MarginalFunction> parts;

    CompositeFunction() = default;
    CompositeFunction(MarginalFunction f) { parts.push_back(std::move(f)); }  // NOLINT implicit
    explicit CompositeFunction(std::vector<MarginalFunction> fs) : parts(std::move(fs)) {}

    Index size() const { return parts.empty() ? 0 : parts.front().size(); }
    bool is_zero() const;
};

// Closed interval per entry; lo > hi encodes the empty set.
struct Interval {
    double lo;
    double hi;
    bool empty() const { return lo > hi; }
};

// Primal value f(x); +inf outside the domain.
double evaluate(const MarginalFunction& f, const Vector& x);

// Conjugate f*(s). Entries s_i = +inf stand for eliminated states (u_i = 0)
// and contribute their limit, using 0 * inf = 0.
double conjugate(const MarginalFunction& f, const Vector& s);

std::vector<Interval> conjugate_subgradient(const MarginalFunction& f, const Vector& s);

// Solves 0 in -u.w + d f*(-eps log u) entrywise.
ScaledVector solve_inclusion(const MarginalFunction& f, const ScaledVector& w, double eps);
ScaledMatrix solve_inclusion_bimarginal(const MarginalFunction& f, const ScaledMatrix& w, double eps);

// Largest per-entry distance between u.w and the subdifferential at -eps log u,
// relative to max(1, |u.w|).
double inclusion_residual(const MarginalFunction& f, const ScaledVector& u, const ScaledVector& w,
                          double eps);

// Dual variable s = -eps log u from a scaled potential (+inf where u = 0).
Vector dual_argument(const ScaledVector& u, double eps);

}  // namespace gtop
