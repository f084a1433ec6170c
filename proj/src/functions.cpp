#include "gtop/functions.hpp"

#include "gtop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace gtop {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool all_finite(const Vector& v) { return v.allFinite(); }

double indicator_tol(double c) { return 1e-9 * std::max(1.0, std::abs(c)); }
constexpr double kKinkTol = 1e-13;

void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidInput(msg);
}

// Hoelder conjugate exponent of p.
double conjugate_exponent(double p) { return p / (p - 1.0); }

// Gradient of the conjugate of weight*|x - y|^p at s.
double power_gradient(const fn::QuadraticDistance& q, double y, double s) {
    if (q.exponent == 2.0) return y + s / (2.0 * q.weight);
    const double qq = conjugate_exponent(q.exponent);
    const double denom = std::pow(q.weight * q.exponent, qq - 1.0);
    return y + std::copysign(std::pow(std::abs(s), qq - 1.0), s) / denom;
}

double power_gradient_slope(const fn::QuadraticDistance& q, double s) {
    if (q.exponent == 2.0) return 1.0 / (2.0 * q.weight);
    const double qq = conjugate_exponent(q.exponent);
    const double denom = std::pow(q.weight * q.exponent, qq - 1.0);
    return (qq - 1.0) * std::pow(std::abs(s), qq - 2.0) / denom;
}

struct Eval {
    double value;
    double slope;
};

// Root of an increasing convex function. [lo, hi] is a starting guess that is
// widened until it brackets a sign change, then refined by Newton steps from
// the right end with a bisection fallback.
template <typename F>
double increasing_root(const F& h, double lo, double hi, const char* what) {
    double hlo = h(lo).value;
    double hhi = h(hi).value;
    for (int i = 0; hlo > 0.0; ++i) {
        if (i > 200 || !std::isfinite(lo)) {
            std::ostringstream os;
            os << what << ": could not bracket root from below (last z=" << lo << ", h=" << hlo << ")";
            throw NumericalError(os.str());
        }
        const double width = hi - lo;
        hi = lo;
        hhi = hlo;
        lo -= 2.0 * width;
        hlo = h(lo).value;
    }
    for (int i = 0; hhi < 0.0; ++i) {
        if (i > 200 || !std::isfinite(hi)) {
            std::ostringstream os;
            os << what << ": could not bracket root from above (last z=" << hi << ", h=" << hhi << ")";
            throw NumericalError(os.str());
        }
        const double width = hi - lo;
        lo = hi;
        hlo = hhi;
        hi += 2.0 * width;
        hhi = h(hi).value;
    }
    if (hlo == 0.0) return lo;
    if (hhi == 0.0) return hi;
    if (std::isnan(hlo) || std::isnan(hhi)) throw NumericalError(std::string(what) + ": NaN while bracketing");

    double z = hi;
    double last_width = hi - lo;
    for (int it = 0; it < 300; ++it) {
        const Eval e = h(z);
        if (std::isnan(e.value)) throw NumericalError(std::string(what) + ": NaN during refinement");
        if (e.value == 0.0) return z;
        if (e.value > 0.0)
            hi = z;
        else
            lo = z;
        double next = 0.5 * (lo + hi);
        // Newton creeping along one side of a noisy root: fall back to halving.
        const bool stalled = hi - lo > 0.5 * last_width;
        last_width = hi - lo;
        if (!stalled && std::isfinite(e.slope) && e.slope > 0.0) {
            const double newton = z - e.value / e.slope;
            if (newton > lo && newton < hi) next = newton;
        }
        const double tol = 1e-15 * std::max(1.0, std::abs(z));
        if (std::abs(next - z) <= tol || hi - lo <= tol) return next;
        z = next;
    }
    std::ostringstream os;
    os << what << ": no convergence, bracket [" << lo << ", " << hi << "]";
    throw NumericalError(os.str());
}

std::string entry_note(const char* what, Index i) {
    std::ostringstream os;
    os << what << " at entry " << i;
    return os.str();
}

// Fills log u for one piece given log w (-inf where w = 0).
void solve_piece(const FunctionPiece& piece, const double* lw, double* lu, Index n, Index offset, double eps) {
    std::visit(
        overloaded{
            [&](const fn::Zero&) { std::fill(lu, lu + n, 0.0); },
            [&](const fn::Equality& f) {
                for (Index i = 0; i < n; ++i) {
                    const double t = f.target[i];
                    if (t == 0.0) {
                        lu[i] = -kInf;
                    } else if (lw[i] == -kInf) {
                        throw InfeasibleError(entry_note("equality target unreachable", offset + i));
                    } else {
                        lu[i] = std::log(t) - lw[i];
                    }
                }
            },
            [&](const fn::Box& f) {
                for (Index i = 0; i < n; ++i) {
                    if (lw[i] == -kInf) {
                        if (f.lower[i] > 0.0)
                            throw InfeasibleError(entry_note("box lower bound unreachable", offset + i));
                        lu[i] = 0.0;
                        continue;
                    }
                    const double up = std::log(f.upper[i]) - lw[i];
                    const double down = std::log(f.lower[i]) - lw[i];
                    lu[i] = std::min(std::max(0.0, down), up);
                }
            },
            [&](const fn::Linear& f) {
                for (Index i = 0; i < n; ++i) lu[i] = -f.cost[i] / eps;
            },
            [&](const fn::QuadraticDistance& f) {
                for (Index i = 0; i < n; ++i) {
                    const double y = f.anchor[i];
                    if (lw[i] == -kInf) {
                        // u.w vanishes, so the gradient of the conjugate must vanish.
                        double s;
                        if (f.exponent == 2.0) {
                            s = -2.0 * f.weight * y;
                        } else {
                            const double qq = conjugate_exponent(f.exponent);
                            s = -std::copysign(std::pow(std::abs(y), 1.0 / (qq - 1.0)), y) * f.weight * f.exponent;
                        }
                        lu[i] = -s / eps;
                        continue;
                    }
                    const double l = lw[i];
                    auto h = [&](double z) {
                        const double m = std::exp(z + l);
                        return Eval{m - power_gradient(f, y, -eps * z), m + eps * power_gradient_slope(f, -eps * z)};
                    };
                    lu[i] = increasing_root(h, -1.0, 1.0, "quadratic inclusion");
                }
            },
            [&](const fn::Congestion& f) {
                for (Index i = 0; i < n; ++i) {
                    if (lw[i] == -kInf) {
                        lu[i] = 0.0;
                        continue;
                    }
                    const double beta = f.capacity[i];
                    const double l = lw[i];
                    const double kink = -1.0 / (beta * eps);
                    auto h = [&](double z) {
                        const double m = std::exp(z + l);
                        const double v = -eps * z;
                        return Eval{m - beta + std::sqrt(beta / v),
                                    m + 0.5 * eps * std::sqrt(beta) * std::pow(v, -1.5)};
                    };
                    if (h(kink).value <= 0.0) {
                        lu[i] = kink;
                        continue;
                    }
                    // h stays positive at the kink, so the upper end never moves.
                    lu[i] = increasing_root(h, kink - 1.0, kink, "congestion inclusion");
                }
            },
        },
        piece);
}

}  // namespace

const char* kind_name(FunctionKind kind) {
    switch (kind) {
        case FunctionKind::Zero: return "zero";
        case FunctionKind::Equality: return "equality";
        case FunctionKind::Box: return "box";
        case FunctionKind::Linear: return "linear";
        case FunctionKind::QuadraticDistance: return "quadratic";
        case FunctionKind::Congestion: return "congestion";
    }
    return "?";
}

FunctionKind kind_of(const FunctionPiece& piece) { return static_cast<FunctionKind>(piece.index()); }

Index piece_size(const FunctionPiece& piece) {
    return std::visit(overloaded{
                          [](const fn::Zero& f) { return f.size; },
                          [](const fn::Equality& f) { return f.target.size(); },
                          [](const fn::Box& f) { return f.lower.size(); },
                          [](const fn::Linear& f) { return f.cost.size(); },
                          [](const fn::QuadraticDistance& f) { return f.anchor.size(); },
                          [](const fn::Congestion& f) { return f.capacity.size(); },
                      },
                      piece);
}

MarginalFunction::MarginalFunction(FunctionPiece piece) { append(std::move(piece)); }

void MarginalFunction::append(FunctionPiece piece) {
    std::visit(overloaded{
                   [](const fn::Zero& f) { require(f.size >= 0, "zero: negative size"); },
                   [](const fn::Equality& f) {
                       require(all_finite(f.target) && (f.target.array() >= 0.0).all(),
                               "equality: target must be finite and nonnegative");
                   },
                   [](const fn::Box& f) {
                       require(f.lower.size() == f.upper.size(), "box: bound sizes differ");
                       require(all_finite(f.lower) && (f.lower.array() >= 0.0).all(),
                               "box: lower bound must be finite and nonnegative");
                       require(!f.upper.hasNaN() && (f.upper.array() >= f.lower.array()).all(),
                               "box: upper bound below lower bound");
                   },
                   [](const fn::Linear& f) { require(all_finite(f.cost), "linear: cost must be finite"); },
                   [](const fn::QuadraticDistance& f) {
                       require(std::isfinite(f.weight) && f.weight > 0.0, "quadratic: weight must be positive");
                       require(std::isfinite(f.exponent) && f.exponent > 1.0, "quadratic: exponent must exceed 1");
                       require(all_finite(f.anchor), "quadratic: anchor must be finite");
                   },
                   [](const fn::Congestion& f) {
                       require(all_finite(f.capacity) && (f.capacity.array() > 0.0).all(),
                               "congestion: capacity must be positive and finite");
                   },
               },
               piece);
    const Index n = piece_size(piece);
    offsets_.push_back(size_);
    size_ += n;
    pieces_.push_back(std::move(piece));
}

MarginalFunction MarginalFunction::zero(Index size) { return MarginalFunction(fn::Zero{size}); }
MarginalFunction MarginalFunction::equality(Vector target) { return MarginalFunction(fn::Equality{std::move(target)}); }
MarginalFunction MarginalFunction::box(Vector lower, Vector upper) {
    return MarginalFunction(fn::Box{std::move(lower), std::move(upper)});
}
MarginalFunction MarginalFunction::box_upper(Vector upper) {
    Vector lower = Vector::Zero(upper.size());
    return box(std::move(lower), std::move(upper));
}
MarginalFunction MarginalFunction::linear(Vector cost) { return MarginalFunction(fn::Linear{std::move(cost)}); }
MarginalFunction MarginalFunction::quadratic(double weight, Vector anchor, double exponent) {
    return MarginalFunction(fn::QuadraticDistance{weight, std::move(anchor), exponent});
}
MarginalFunction MarginalFunction::congestion(Vector capacity) {
    return MarginalFunction(fn::Congestion{std::move(capacity)});
}

MarginalFunction MarginalFunction::concat(const std::vector<MarginalFunction>& parts) {
    MarginalFunction out;
    for (const auto& p : parts)
        for (const auto& piece : p.pieces_) out.append(piece);
    return out;
}

bool MarginalFunction::is_zero() const {
    return std::all_of(pieces_.begin(), pieces_.end(),
                       [](const FunctionPiece& p) { return std::holds_alternative<fn::Zero>(p); });
}

MarginalFunction MarginalFunction::scaled(double factor) const {
    require(std::isfinite(factor) && factor > 0.0, "scaling factor must be positive");
    MarginalFunction out;
    for (const auto& piece : pieces_) {
        FunctionPiece p = piece;
        std::visit(overloaded{
                       [](fn::Zero&) {}, [](fn::Equality&) {}, [](fn::Box&) {},
                       [&](fn::Linear& f) { f.cost *= factor; },
                       [&](fn::QuadraticDistance& f) { f.weight *= factor; },
                       [](fn::Congestion&) {
                           throw InvalidInput("congestion cost cannot be rescaled within the catalog");
                       },
                   },
                   p);
        out.append(std::move(p));
    }
    return out;
}

bool CompositeFunction::is_zero() const {
    return std::all_of(parts.begin(), parts.end(), [](const MarginalFunction& f) { return f.is_zero(); });
}

double evaluate(const MarginalFunction& f, const Vector& x) {
    require(x.size() == f.size(), "evaluate: argument size mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < f.pieces().size(); ++k) {
        const Index off = f.offsets()[k];
        const Index n = piece_size(f.pieces()[k]);
        const auto xs = x.segment(off, n);
        total += std::visit(
            overloaded{
                [&](const fn::Zero&) { return 0.0; },
                [&](const fn::Equality& g) {
                    for (Index i = 0; i < n; ++i)
                        if (std::abs(xs[i] - g.target[i]) > indicator_tol(g.target[i])) return kInf;
                    return 0.0;
                },
                [&](const fn::Box& g) {
                    for (Index i = 0; i < n; ++i)
                        if (xs[i] < g.lower[i] - indicator_tol(g.lower[i]) ||
                            xs[i] > g.upper[i] + indicator_tol(g.upper[i]))
                            return kInf;
                    return 0.0;
                },
                [&](const fn::Linear& g) { return g.cost.dot(xs); },
                [&](const fn::QuadraticDistance& g) {
                    return g.weight * (xs - g.anchor).cwiseAbs().array().pow(g.exponent).sum();
                },
                [&](const fn::Congestion& g) {
                    double s = 0.0;
                    for (Index i = 0; i < n; ++i) {
                        if (xs[i] < 0.0 || xs[i] >= g.capacity[i]) return kInf;
                        s += xs[i] / (g.capacity[i] - xs[i]);
                    }
                    return s;
                },
            },
            f.pieces()[k]);
        if (total == kInf) return kInf;
    }
    return total;
}

double conjugate(const MarginalFunction& f, const Vector& s) {
    require(s.size() == f.size(), "conjugate: argument size mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < f.pieces().size(); ++k) {
        const Index off = f.offsets()[k];
        const Index n = piece_size(f.pieces()[k]);
        const auto ss = s.segment(off, n);
        total += std::visit(
            overloaded{
                [&](const fn::Zero&) {
                    for (Index i = 0; i < n; ++i)
                        if (!(std::abs(ss[i]) <= indicator_tol(0.0))) return kInf;
                    return 0.0;
                },
                [&](const fn::Equality& g) {
                    double v = 0.0;
                    for (Index i = 0; i < n; ++i) {
                        if (g.target[i] == 0.0) continue;
                        v += ss[i] * g.target[i];
                    }
                    return v;
                },
                [&](const fn::Box& g) {
                    double v = 0.0;
                    for (Index i = 0; i < n; ++i) {
                        if (ss[i] > 0.0) {
                            if (g.upper[i] != 0.0) v += g.upper[i] * ss[i];
                        } else if (ss[i] < 0.0) {
                            if (g.lower[i] != 0.0) v += g.lower[i] * ss[i];
                        }
                    }
                    return v;
                },
                [&](const fn::Linear& g) {
                    for (Index i = 0; i < n; ++i)
                        if (!(std::abs(ss[i] - g.cost[i]) <= indicator_tol(g.cost[i]))) return kInf;
                    return 0.0;
                },
                [&](const fn::QuadraticDistance& g) {
                    if (!ss.allFinite()) return kInf;
                    if (g.exponent == 2.0) return ss.dot(g.anchor) + ss.squaredNorm() / (4.0 * g.weight);
                    const double qq = conjugate_exponent(g.exponent);
                    const double denom = qq * std::pow(g.weight * g.exponent, qq - 1.0);
                    return ss.dot(g.anchor) + ss.cwiseAbs().array().pow(qq).sum() / denom;
                },
                [&](const fn::Congestion& g) {
                    double v = 0.0;
                    for (Index i = 0; i < n; ++i) {
                        const double sb = ss[i] * g.capacity[i];
                        if (sb <= 1.0) continue;
                        if (sb == kInf) return kInf;
                        v += sb - 2.0 * std::sqrt(sb) + 1.0;
                    }
                    return v;
                },
            },
            f.pieces()[k]);
        if (total == kInf) return kInf;
    }
    return total;
}

std::vector<Interval> conjugate_subgradient(const MarginalFunction& f, const Vector& s) {
    require(s.size() == f.size(), "conjugate_subgradient: argument size mismatch");
    std::vector<Interval> out(static_cast<std::size_t>(f.size()));
    const Interval empty{kInf, -kInf};
    for (std::size_t k = 0; k < f.pieces().size(); ++k) {
        const Index off = f.offsets()[k];
        const Index n = piece_size(f.pieces()[k]);
        for (Index i = 0; i < n; ++i) {
            const double si = s[off + i];
            Interval& slot = out[static_cast<std::size_t>(off + i)];
            slot = std::visit(
                overloaded{
                    [&](const fn::Zero&) {
                        return std::abs(si) <= indicator_tol(0.0) ? Interval{-kInf, kInf} : empty;
                    },
                    [&](const fn::Equality& g) { return Interval{g.target[i], g.target[i]}; },
                    [&](const fn::Box& g) {
                        // u one ulp off 1 must still land on the kink
                        if (si > kKinkTol) return g.upper[i] == kInf ? empty : Interval{g.upper[i], g.upper[i]};
                        if (si < -kKinkTol) return Interval{g.lower[i], g.lower[i]};
                        return Interval{g.lower[i], g.upper[i]};
                    },
                    [&](const fn::Linear& g) {
                        return std::abs(si - g.cost[i]) <= indicator_tol(g.cost[i]) ? Interval{-kInf, kInf} : empty;
                    },
                    [&](const fn::QuadraticDistance& g) {
                        if (!std::isfinite(si)) return empty;
                        const double v = power_gradient(g, g.anchor[i], si);
                        return Interval{v, v};
                    },
                    [&](const fn::Congestion& g) {
                        const double beta = g.capacity[i];
                        if (si * beta <= 1.0) return Interval{0.0, 0.0};
                        const double v = si == kInf ? beta : beta - std::sqrt(beta / si);
                        return Interval{v, v};
                    },
                },
                f.pieces()[k]);
        }
    }
    return out;
}

Vector dual_argument(const ScaledVector& u, double eps) {
    Vector s = u.log_values();
    for (Index i = 0; i < s.size(); ++i) s[i] = s[i] == -kInf ? kInf : -eps * s[i];
    return s;
}

ScaledVector solve_inclusion(const MarginalFunction& f, const ScaledVector& w, double eps) {
    require(w.size() == f.size(), "solve_inclusion: weight size mismatch");
    require(std::isfinite(eps) && eps > 0.0, "solve_inclusion: eps must be positive");
    const Vector lw = w.log_values();
    Vector lu(lw.size());
    for (std::size_t k = 0; k < f.pieces().size(); ++k) {
        const Index off = f.offsets()[k];
        solve_piece(f.pieces()[k], lw.data() + off, lu.data() + off, piece_size(f.pieces()[k]), off, eps);
    }
    for (Index i = 0; i < lu.size(); ++i)
        if (std::isnan(lu[i]) || lu[i] == kInf)
            throw NumericalError(entry_note("inclusion produced a non-finite potential", i));
    return from_log(lu);
}

ScaledMatrix solve_inclusion_bimarginal(const MarginalFunction& f, const ScaledMatrix& w, double eps) {
    const ScaledVector u = solve_inclusion(f, ScaledVector(flatten(w.mantissa), w.log_scale), eps);
    return ScaledMatrix(unflatten(u.mantissa, w.mantissa.rows(), w.mantissa.cols()), u.log_scale);
}

double inclusion_residual(const MarginalFunction& f, const ScaledVector& u, const ScaledVector& w, double eps) {
    const Vector s = dual_argument(u, eps);
    const auto sub = conjugate_subgradient(f, s);
    const Vector lu = u.log_values();
    const Vector lw = w.log_values();
    double worst = 0.0;
    for (Index i = 0; i < s.size(); ++i) {
        const double x = (lu[i] == -kInf || lw[i] == -kInf) ? 0.0 : std::exp(lu[i] + lw[i]);
        const Interval& iv = sub[static_cast<std::size_t>(i)];
        if (iv.empty()) return kInf;
        const double gap = std::max({iv.lo - x, x - iv.hi, 0.0});
        worst = std::max(worst, gap / std::max(1.0, std::abs(x)));
    }
    return worst;
}

}  // namespace gtop
