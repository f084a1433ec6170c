#include "gtop/solver.hpp"

#include "gtop/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <variant>

namespace gtop {

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::Converged: return "converged";
        case Termination::MaxSweeps: return "max_sweeps";
        case Termination::Infeasible: return "infeasible";
        case Termination::NumericalFailure: return "numerical_failure";
    }
    return "?";
}

double SolveReport::max_residual() const {
    double m = 0.0;
    for (const auto& r : residuals) m = std::max(m, r.value);
    return m;
}

namespace {

bool has_feasibility_part(const MarginalFunction& f) {
    return std::any_of(f.pieces().begin(), f.pieces().end(), [](const FunctionPiece& p) {
        return std::holds_alternative<fn::Equality>(p) || std::holds_alternative<fn::Box>(p);
    });
}

double max_log_change(const Vector& before, const Vector& after) {
    double m = 0.0;
    for (Index i = 0; i < before.size(); ++i) {
        const double a = before[i];
        const double b = after[i];
        if (a == b) continue;
        m = std::max(m, std::abs(a - b));
    }
    return std::isnan(m) ? kInf : m;
}

template <typename Array>
Vector flat_logs(const Scaled<Array>& a) {
    Array l = a.log_values();
    return Eigen::Map<const Vector>(l.data(), l.size());
}

template <typename Array>
ScaledVector as_flat(const Scaled<Array>& a) {
    return ScaledVector(Eigen::Map<const Vector>(a.mantissa.data(), a.mantissa.size()), a.log_scale);
}

double largest_finite_abs(const Vector& v) {
    double m = 0.0;
    for (Index i = 0; i < v.size(); ++i)
        if (std::isfinite(v[i])) m = std::max(m, std::abs(v[i]));
    return m;
}

std::string part_label(const std::string& block, std::size_t parts, std::size_t k) {
    return parts > 1 ? block + " part " + std::to_string(k) : block;
}

// Single whole-vector equality targets must agree on total mass.
void check_equality_masses(const ProblemSpec& spec) {
    const GraphTopology& g = spec.topology();
    double ref = -1.0;
    std::string ref_block;
    auto visit = [&](const CompositeFunction& f, const std::string& block) {
        for (const auto& part : f.parts) {
            if (part.pieces().size() != 1) continue;
            const auto* eq = std::get_if<fn::Equality>(&part.pieces().front());
            if (!eq) continue;
            const double m = eq->target.sum();
            if (ref < 0.0) {
                ref = m;
                ref_block = block;
            } else if (std::abs(m - ref) > 1e-9 * std::max(1.0, ref)) {
                std::ostringstream os;
                os << "equality targets carry different masses: " << ref_block << " has " << ref << ", " << block
                   << " has " << m;
                throw InvalidInput(os.str());
            }
        }
    };
    for (int t = 0; t < g.node_count(); ++t) visit(spec.node_function(t), g.node_label(t));
    for (int e = 0; e < g.edge_count(); ++e) visit(spec.edge_function(e), g.edge_label(e));
}

}  // namespace

double equality_box_residual(const MarginalFunction& f, const Vector& projection) {
    double worst = 0.0;
    for (std::size_t k = 0; k < f.pieces().size(); ++k) {
        const Index off = f.offsets()[k];
        const Index n = piece_size(f.pieces()[k]);
        const auto p = projection.segment(off, n);
        if (const auto* eq = std::get_if<fn::Equality>(&f.pieces()[k])) {
            worst = std::max(worst, (p - eq->target).lpNorm<1>() / std::max(eq->target.lpNorm<1>(), 1.0));
        } else if (const auto* box = std::get_if<fn::Box>(&f.pieces()[k])) {
            double v = 0.0;
            for (Index i = 0; i < n; ++i) {
                if (p[i] > box->upper[i]) v += p[i] - box->upper[i];
                if (p[i] < box->lower[i]) v += box->lower[i] - p[i];
            }
            worst = std::max(worst, v / std::max(p.lpNorm<1>(), 1.0));
        }
    }
    return worst;
}

std::vector<ConstraintResidual> residuals(const Projector& projector) {
    const ProblemSpec& spec = projector.spec();
    const GraphTopology& g = spec.topology();
    std::vector<ConstraintResidual> out;
    for (int t = 0; t < g.node_count(); ++t) {
        const auto& parts = spec.node_function(t).parts;
        bool any = std::any_of(parts.begin(), parts.end(), has_feasibility_part);
        if (!any) continue;
        const Vector p = projector.marginal(t).value();
        for (std::size_t k = 0; k < parts.size(); ++k)
            if (has_feasibility_part(parts[k]))
                out.push_back({part_label(g.node_label(t), parts.size(), k), equality_box_residual(parts[k], p)});
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        const auto& parts = spec.edge_function(e).parts;
        bool any = std::any_of(parts.begin(), parts.end(), has_feasibility_part);
        if (!any) continue;
        const Vector p = flatten(projector.bimarginal(e).value());
        for (std::size_t k = 0; k < parts.size(); ++k)
            if (has_feasibility_part(parts[k]))
                out.push_back({part_label(g.edge_label(e), parts.size(), k), equality_box_residual(parts[k], p)});
    }
    return out;
}

std::vector<ConstraintResidual> residuals(const DualPotentials& potentials, const ProblemSpec& spec) {
    auto projector = make_projector(spec);
    projector->refresh(potentials);
    return residuals(*projector);
}

class Solver::Updater final : public BlockUpdater {
public:
    Updater(Solver& s, int sweep) : s_(s), sweep_(sweep) {}

    ScaledVector update_node(int node, const ScaledVector& weights) override {
        auto& factors = s_.potentials_.node[static_cast<std::size_t>(node)];
        const auto& parts = s_.spec_->node_function(node).parts;
        auto& conj = s_.node_conj_[static_cast<std::size_t>(node)];
        const std::string label = s_.spec_->topology().node_label(node);
        for (std::size_t k = 0; k < parts.size(); ++k) {
            ScaledVector w = others(factors, k, weights);
            ScaledVector u = solve(parts[k], w, label);
            finish(factors[k], u, w, conj[k], parts[k], label);
        }
        return product(factors);
    }

    ScaledMatrix update_edge(int edge, const ScaledMatrix& weights) override {
        auto& factors = s_.potentials_.edge[static_cast<std::size_t>(edge)];
        const auto& parts = s_.spec_->edge_function(edge).parts;
        auto& conj = s_.edge_conj_[static_cast<std::size_t>(edge)];
        const std::string label = s_.spec_->topology().edge_label(edge);
        const Index rows = weights.mantissa.rows();
        const Index cols = weights.mantissa.cols();
        for (std::size_t k = 0; k < parts.size(); ++k) {
            ScaledMatrix wm = others(factors, k, weights);
            ScaledVector w = as_flat(wm);
            ScaledVector u = solve(parts[k], w, label);
            ScaledMatrix um(unflatten(u.mantissa, rows, cols), u.log_scale);
            finish(factors[k], um, wm, conj[k], parts[k], label);
        }
        return product(factors);
    }

    double change = 0.0;

private:
    template <typename Array>
    static Scaled<Array> others(const std::vector<Scaled<Array>>& factors, std::size_t k, const Scaled<Array>& w) {
        Scaled<Array> out = w;
        for (std::size_t j = 0; j < factors.size(); ++j)
            if (j != k) out = hadamard(out, factors[j]);
        return out;
    }

    template <typename Array>
    static Scaled<Array> product(const std::vector<Scaled<Array>>& factors) {
        Scaled<Array> out = factors.front();
        for (std::size_t j = 1; j < factors.size(); ++j) out = hadamard(out, factors[j]);
        return out;
    }

    ScaledVector solve(const MarginalFunction& f, const ScaledVector& w, const std::string& label) {
        try {
            return solve_inclusion(f, w, s_.spec_->epsilon());
        } catch (const InfeasibleError& e) {
            std::ostringstream os;
            os << label << ", sweep " << sweep_ << ": " << e.what();
            throw InfeasibleError(os.str(), label, sweep_);
        } catch (const NumericalError& e) {
            std::ostringstream os;
            os << label << ", sweep " << sweep_ << ": " << e.what();
            throw NumericalError(os.str());
        }
    }

    template <typename Array>
    void finish(Scaled<Array>& slot, const Scaled<Array>& u, const Scaled<Array>& w, double& conj_slot,
                const MarginalFunction& f, const std::string& label) {
        change = std::max(change, max_log_change(flat_logs(slot), flat_logs(u)));
        slot = u;
        conj_slot = conjugate(f, dual_argument(as_flat(u), s_.spec_->epsilon()));
        if (!s_.config_.verify) return;
        // After an exact block update the total mass is <u, w>.
        const double mass = std::exp(ops_log_dot(u, w));
        const double dual = s_.dual_from(mass);
        const double drop = s_.last_dual_ - dual;
        const double rel = drop / std::max(1.0, std::abs(s_.last_dual_));
        ++s_.report_.updates_checked;
        if (std::isfinite(rel)) s_.report_.worst_dual_drop = std::max(s_.report_.worst_dual_drop, rel);
        if (rel > s_.config_.monotonicity_slack || std::isnan(dual)) {
            ++s_.report_.monotonicity_violations;
            std::ostringstream os;
            os << "dual decreased by " << rel << " (relative) at " << label << ", sweep " << sweep_;
            if (s_.report_.monotonicity_violations <= 5) s_.report_.warnings.push_back(os.str());
        }
        s_.last_dual_ = dual;
    }

    template <typename Array>
    static double ops_log_dot(const Scaled<Array>& a, const Scaled<Array>& b) {
        const double d = a.mantissa.cwiseProduct(b.mantissa).sum();
        return d > 0.0 ? std::log(d) + a.log_scale + b.log_scale : -kInf;
    }

    Solver& s_;
    int sweep_;
};

Solver::Solver(const ProblemSpec& spec, SolverConfig config)
    : Solver(spec, std::move(config), DualPotentials::ones(spec)) {}

Solver::Solver(const ProblemSpec& spec, SolverConfig config, DualPotentials initial)
    : spec_(&spec), config_(std::move(config)), potentials_(std::move(initial)) {
    if (!(config_.feasibility_tol > 0.0) || !(config_.potential_tol > 0.0))
        throw InvalidInput("solver tolerances must be positive");
    if (config_.max_sweeps < 0) throw InvalidInput("max sweeps must be nonnegative");
    check_equality_masses(spec);
    projector_ = make_projector(spec, config_.renormalize_threshold);
    projector_->refresh(potentials_);
    const GraphTopology& g = spec.topology();
    const double eps = spec.epsilon();
    for (int t = 0; t < g.node_count(); ++t) {
        std::vector<double> c;
        const auto& parts = spec.node_function(t).parts;
        for (std::size_t k = 0; k < parts.size(); ++k)
            c.push_back(conjugate(parts[k], dual_argument(potentials_.node[static_cast<std::size_t>(t)][k], eps)));
        node_conj_.push_back(std::move(c));
    }
    for (int e = 0; e < g.edge_count(); ++e) {
        std::vector<double> c;
        const auto& parts = spec.edge_function(e).parts;
        for (std::size_t k = 0; k < parts.size(); ++k)
            c.push_back(conjugate(parts[k], dual_argument(as_flat(potentials_.edge[static_cast<std::size_t>(e)][k]), eps)));
        edge_conj_.push_back(std::move(c));
    }
    last_dual_ = dual();
}

double Solver::dual_from(double mass) const {
    double conj = 0.0;
    for (const auto& v : node_conj_)
        for (double c : v) conj += c;
    for (const auto& v : edge_conj_)
        for (double c : v) conj += c;
    if (conj == kInf) return -kInf;
    return -spec_->epsilon() * mass - conj;
}

double Solver::dual() const { return dual_from(projector_->marginal(0).sum()); }

double Solver::sweep() {
    const int index = report_.sweeps + 1;
    Updater updater(*this, index);
    projector_->sweep(updater);
    report_.sweeps = index;
    last_change_ = updater.change;
    const double d = dual();
    if (std::isnan(d)) throw NumericalError("dual objective became NaN in sweep " + std::to_string(index));
    // Keep the monotonicity reference in step with the freshly projected mass.
    last_dual_ = d;
    if (config_.verify) verify_against_oracle();
    return d;
}

void Solver::verify_against_oracle() {
    const GraphTopology& g = spec_->topology();
    if (!g.within_dense_limit() || g.kind() == TopologyClass::GeneralSmall) return;
    const DenseTensor dense = oracle_dense_tensor(potentials_, *spec_);
    double worst = std::max(report_.oracle_discrepancy, 0.0);
    for (int t = 0; t < g.node_count(); ++t)
        worst = std::max(worst, relative_difference(projector_->marginal(t), oracle_marginal(dense, t)));
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        worst = std::max(worst, relative_difference(projector_->bimarginal(e), oracle_bimarginal(dense, ed.from, ed.to)));
    }
    report_.oracle_discrepancy = worst;
}

SolveReport Solver::run() {
    const auto start = std::chrono::steady_clock::now();
    try {
        while (report_.sweeps < config_.max_sweeps) {
            const double d = sweep();
            const auto res = residuals(*projector_);
            double worst = 0.0;
            for (const auto& r : res) worst = std::max(worst, r.value);
            report_.dual_trace.push_back(d);
            report_.max_residual_trace.push_back(worst);
            if (config_.progress) config_.progress({report_.sweeps, d, worst});
            if (worst <= config_.feasibility_tol && last_change_ <= config_.potential_tol) {
                report_.termination = Termination::Converged;
                break;
            }
        }
        if (report_.termination != Termination::Converged) {
            report_.termination = Termination::MaxSweeps;
            report_.message = "no convergence within " + std::to_string(config_.max_sweeps) + " sweeps";
        }
    } catch (const InfeasibleError& e) {
        report_.termination = Termination::Infeasible;
        report_.message = e.what();
        projector_->refresh(potentials_);
    } catch (const NumericalError& e) {
        report_.termination = Termination::NumericalFailure;
        report_.message = e.what();
        projector_->refresh(potentials_);
    }
    report_.residuals = residuals(*projector_);

    double largest = 0.0;
    for (const auto& factors : potentials_.node)
        for (const auto& u : factors) largest = std::max(largest, largest_finite_abs(flat_logs(u)));
    for (const auto& factors : potentials_.edge)
        for (const auto& u : factors) largest = std::max(largest, largest_finite_abs(flat_logs(u)));
    if (largest > config_.log_potential_bound) {
        std::ostringstream os;
        os << "dual potentials are diverging: max |log u| = " << largest;
        report_.warnings.push_back(os.str());
    }
    report_.rescaling_events = projector_->rescale_events();
    report_.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report_;
}

SolveResult solve(const ProblemSpec& spec, const SolverConfig& config) {
    Solver s(spec, config);
    SolveReport r = s.run();
    return {s.potentials(), std::move(r)};
}

}  // namespace gtop
