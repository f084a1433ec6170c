#include "gtop/io.hpp"

#include "gtop/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace gtop {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// A JSON value together with its location, so every error can name the field.
class Field {
public:
    Field(const json& j, std::string path, const fs::path& base) : j_(&j), path_(std::move(path)), base_(&base) {}

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }
    const fs::path& base() const { return *base_; }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key) && !(*j_)[key].is_null(); }
    Field at(const std::string& key) const {
        if (!j_->is_object()) fail("expected an object");
        if (!j_->contains(key)) fail("missing required field \"" + key + "\"");
        return {(*j_)[key], path_ + "." + key, *base_};
    }
    Field operator[](std::size_t i) const { return {(*j_)[i], path_ + "[" + std::to_string(i) + "]", *base_}; }
    std::size_t length() const {
        if (!j_->is_array()) fail("expected an array");
        return j_->size();
    }

    // Numbers, with null, "inf" and "-inf" standing for infinities.
    double number() const {
        if (j_->is_null()) return kInf;
        if (j_->is_number()) return j_->get<double>();
        if (j_->is_string()) {
            const std::string s = j_->get<std::string>();
            if (s == "inf" || s == "Infinity" || s == "+inf") return kInf;
            if (s == "-inf" || s == "-Infinity") return -kInf;
        }
        fail("expected a number");
    }
    double positive() const {
        const double x = number();
        if (!(x > 0.0) || !std::isfinite(x)) fail("must be a positive finite number");
        return x;
    }
    long integer() const {
        if (!j_->is_number_integer()) fail("expected an integer");
        return j_->get<long>();
    }
    bool boolean() const {
        if (!j_->is_boolean()) fail("expected true or false");
        return j_->get<bool>();
    }
    std::string string() const {
        if (!j_->is_string()) fail("expected a string");
        return j_->get<std::string>();
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
    long integer_or(const std::string& key, long fallback) const { return has(key) ? at(key).integer() : fallback; }
    bool boolean_or(const std::string& key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }

    void allow_only(std::initializer_list<const char*> keys) const {
        if (!j_->is_object()) fail("expected an object");
        for (const auto& item : j_->items()) {
            bool known = false;
            for (const char* k : keys) known = known || item.key() == k;
            if (!known) fail("unknown field \"" + item.key() + "\"");
        }
    }

private:
    const json* j_;
    std::string path_;
    const fs::path* base_;
};

constexpr Index kAny = -1;

// Matrix from inline rows, a flat array (when the shape is known), a scalar
// (broadcast), {"csv": path} or {"random": {seed, low, high}}.
Matrix parse_matrix(const Field& f, Index rows, Index cols) {
    const json& j = f.raw();
    auto check_shape = [&](const Matrix& m) {
        if ((rows != kAny && m.rows() != rows) || (cols != kAny && m.cols() != cols))
            f.fail("expected a " + (rows == kAny ? std::string("?") : std::to_string(rows)) + " x " +
                   (cols == kAny ? std::string("?") : std::to_string(cols)) + " matrix, got " + std::to_string(m.rows()) +
                   " x " + std::to_string(m.cols()));
        return m;
    };
    if (j.is_number() || j.is_string() || j.is_null()) {
        if (rows == kAny || cols == kAny) f.fail("a scalar needs a known shape to broadcast");
        return Matrix::Constant(rows, cols, f.number());
    }
    if (j.is_object()) {
        if (f.has("csv")) {
            f.allow_only({"csv"});
            fs::path p = f.at("csv").string();
            if (p.is_relative()) p = f.base() / p;
            Matrix m;
            try {
                m = read_csv(p);
            } catch (const std::exception& e) {
                f.fail(e.what());
            }
            if (rows != kAny && cols != kAny && m.size() == rows * cols && (m.rows() == 1 || m.cols() == 1))
                return unflatten(flatten(m), rows, cols);
            return check_shape(m);
        }
        if (f.has("random")) {
            f.allow_only({"random", "rows", "cols"});
            const Field r = f.at("random");
            r.allow_only({"seed", "low", "high"});
            const Index nr = f.has("rows") ? f.at("rows").integer() : rows;
            const Index nc = f.has("cols") ? f.at("cols").integer() : cols;
            if (nr == kAny || nc == kAny || nr <= 0 || nc <= 0) f.fail("random matrix needs \"rows\" and \"cols\" here");
            const double lo = r.number_or("low", 0.0);
            const double hi = r.number_or("high", 1.0);
            if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) r.fail("need finite low <= high");
            std::mt19937_64 rng(static_cast<std::uint64_t>(r.integer_or("seed", 0)));
            std::uniform_real_distribution<double> d(lo, hi);
            Matrix m(nr, nc);
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
            return check_shape(m);
        }
        f.fail("expected a matrix, {\"csv\": ...} or {\"random\": ...}");
    }
    if (!j.is_array()) f.fail("expected a matrix");
    const std::size_t n = j.size();
    const bool nested = n > 0 && j[0].is_array();
    if (!nested) {
        if (rows == kAny && cols == kAny) f.fail("expected an array of rows");
        const Index r = rows == kAny ? static_cast<Index>(n) / std::max<Index>(cols, 1) : rows;
        const Index c = cols == kAny ? static_cast<Index>(n) / std::max<Index>(rows, 1) : cols;
        if (static_cast<Index>(n) != r * c) f.fail("expected " + std::to_string(r * c) + " entries, got " + std::to_string(n));
        Matrix m(r, c);
        for (std::size_t i = 0; i < n; ++i) m.data()[i] = f[i].number();
        return m;
    }
    const std::size_t c = j[0].size();
    Matrix m(static_cast<Index>(n), static_cast<Index>(c));
    for (std::size_t i = 0; i < n; ++i) {
        const Field row = f[i];
        if (row.length() != c) row.fail("ragged row: expected " + std::to_string(c) + " entries");
        for (std::size_t k = 0; k < c; ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = row[k].number();
    }
    return check_shape(m);
}

// Vector of known size; matrices are flattened row-major.
Vector parse_vector(const Field& f, Index size) {
    const json& j = f.raw();
    if (j.is_array() && !j.empty() && j[0].is_array()) {
        const Matrix m = parse_matrix(f, kAny, kAny);
        if (m.size() != size) f.fail("expected " + std::to_string(size) + " entries, got " + std::to_string(m.size()));
        return flatten(m);
    }
    return flatten(parse_matrix(f, 1, size)).eval();
}

Vector nonnegative(const Field& f, Vector v, bool allow_inf) {
    for (Index i = 0; i < v.size(); ++i)
        if (!(v[i] >= 0.0) || (!allow_inf && std::isinf(v[i])))
            f.fail("entry " + std::to_string(i) + " must be " + (allow_inf ? "nonnegative" : "finite and nonnegative"));
    return v;
}

MarginalFunction parse_segment_aware(const Field& f, Index size);

MarginalFunction parse_function(const Field& f, Index size) {
    if (!f.raw().is_object()) f.fail("expected a function object with a \"type\"");
    const std::string type = f.at("type").string();
    if (type == "zero") {
        f.allow_only({"type"});
        return MarginalFunction::zero(size);
    }
    if (type == "equality") {
        f.allow_only({"type", "target"});
        return MarginalFunction::equality(nonnegative(f.at("target"), parse_vector(f.at("target"), size), false));
    }
    if (type == "box") {
        f.allow_only({"type", "lower", "upper"});
        Vector lo = f.has("lower") ? nonnegative(f.at("lower"), parse_vector(f.at("lower"), size), false)
                                   : Vector::Zero(size);
        Vector hi = f.has("upper") ? nonnegative(f.at("upper"), parse_vector(f.at("upper"), size), true)
                                   : Vector::Constant(size, kInf);
        for (Index i = 0; i < size; ++i)
            if (lo[i] > hi[i]) f.fail("lower exceeds upper at entry " + std::to_string(i));
        return MarginalFunction::box(std::move(lo), std::move(hi));
    }
    if (type == "linear") {
        f.allow_only({"type", "cost"});
        Vector c = parse_vector(f.at("cost"), size);
        if (!c.allFinite()) f.at("cost").fail("costs must be finite");
        return MarginalFunction::linear(std::move(c));
    }
    if (type == "quadratic") {
        f.allow_only({"type", "weight", "anchor", "exponent"});
        const double w = f.has("weight") ? f.at("weight").positive() : 1.0;
        const double p = f.has("exponent") ? f.at("exponent").number() : 2.0;
        if (!(p > 1.0) || !std::isfinite(p)) f.at("exponent").fail("must be greater than 1");
        Vector a = parse_vector(f.at("anchor"), size);
        if (!a.allFinite()) f.at("anchor").fail("anchor must be finite");
        return MarginalFunction::quadratic(w, std::move(a), p);
    }
    if (type == "congestion") {
        f.allow_only({"type", "capacity"});
        Vector d = parse_vector(f.at("capacity"), size);
        for (Index i = 0; i < size; ++i)
            if (!(d[i] > 0.0) || !std::isfinite(d[i]))
                f.at("capacity").fail("entry " + std::to_string(i) + " must be positive and finite");
        return MarginalFunction::congestion(std::move(d));
    }
    if (type == "segments") {
        f.allow_only({"type", "parts"});
        const Field parts = f.at("parts");
        std::vector<MarginalFunction> pieces;
        Index covered = 0;
        for (std::size_t i = 0; i < parts.length(); ++i) {
            const Field p = parts[i];
            pieces.push_back(parse_segment_aware(p, p.at("size").integer()));
            covered += pieces.back().size();
        }
        if (covered != size) parts.fail("segments cover " + std::to_string(covered) + " of " + std::to_string(size) + " entries");
        return MarginalFunction::concat(pieces);
    }
    f.at("type").fail("unknown function type \"" + type + "\"");
}

// "size" is only meaningful inside segments.
MarginalFunction parse_segment_aware(const Field& f, Index size) {
    if (f.raw().is_object() && f.raw().contains("size")) {
        json copy = f.raw();
        copy.erase("size");
        const Field stripped(copy, f.path(), f.base());
        return parse_function(stripped, size);
    }
    return parse_function(f, size);
}

CompositeFunction parse_composite(const Field& f, Index size) {
    if (f.raw().is_null()) return MarginalFunction::zero(size);
    if (f.raw().is_array()) {
        CompositeFunction c;
        for (std::size_t i = 0; i < f.length(); ++i) c.parts.push_back(parse_function(f[i], size));
        if (c.parts.empty()) c.parts.push_back(MarginalFunction::zero(size));
        return c;
    }
    return parse_function(f, size);
}

GraphTopology parse_topology(const Field& f) {
    f.allow_only({"type", "sizes", "species", "edges"});
    const std::string type = f.at("type").string();
    const Field sf = f.at("sizes");
    std::vector<Index> sizes;
    for (std::size_t i = 0; i < sf.length(); ++i) {
        const long n = sf[i].integer();
        if (n <= 0) sf[i].fail("state count must be positive");
        sizes.push_back(n);
    }
    try {
        if (type == "path") return GraphTopology::path_chain(sizes);
        if (type == "od_cycle") return GraphTopology::path_with_od_cycle(sizes);
        if (type == "hub") {
            const long L = f.at("species").integer();
            if (L <= 0) f.at("species").fail("must be positive");
            return GraphTopology::species_hub(sizes, L);
        }
        if (type == "general") {
            const Field ef = f.at("edges");
            std::vector<Edge> edges;
            for (std::size_t i = 0; i < ef.length(); ++i) {
                const Field e = ef[i];
                if (e.length() != 2) e.fail("an edge is a pair [from, to]");
                edges.push_back({static_cast<int>(e[0].integer()), static_cast<int>(e[1].integer())});
            }
            return GraphTopology::general(sizes, edges);
        }
    } catch (const InvalidInput& e) {
        f.fail(e.what());
    }
    f.at("type").fail("unknown topology \"" + type + "\" (path, od_cycle, hub or general)");
}

ProblemSpec parse_raw(const Field& p, double eps) {
    p.allow_only({"kind", "topology", "costs", "node_functions", "edge_functions"});
    const GraphTopology topo = parse_topology(p.at("topology"));
    const int E = topo.edge_count();
    // Path-only cost lists leave the hub edges or the chord at zero cost.
    const int path_edges = topo.kind() == TopologyClass::SpeciesHub       ? topo.time_nodes() - 1
                           : topo.kind() == TopologyClass::PathWithODCycle ? E - 1
                                                                           : E;
    std::vector<EdgeKernel> kernels;
    const Field costs = p.at("costs");
    const std::size_t nc = costs.length();
    if (nc != static_cast<std::size_t>(E) && nc != static_cast<std::size_t>(path_edges))
        costs.fail("expected " + std::to_string(E) + " cost matrices" +
                   (path_edges != E ? " (or " + std::to_string(path_edges) + " for the path edges only)" : ""));
    for (int e = 0; e < E; ++e) {
        const Index r = topo.size(topo.edge(e).from);
        const Index c = topo.size(topo.edge(e).to);
        if (static_cast<std::size_t>(e) >= nc || costs[static_cast<std::size_t>(e)].raw().is_null()) {
            kernels.push_back(unit_kernel(r, c));
            continue;
        }
        const Field cf = costs[static_cast<std::size_t>(e)];
        try {
            kernels.push_back(build_kernel(parse_matrix(cf, r, c), eps));
        } catch (const InvalidInput& ex) {
            cf.fail(ex.what());
        }
    }
    auto functions = [&](const char* key, int count, auto size_of) {
        std::vector<CompositeFunction> out;
        const bool present = p.has(key);
        if (present && p.at(key).length() != static_cast<std::size_t>(count))
            p.at(key).fail("expected " + std::to_string(count) + " entries");
        for (int i = 0; i < count; ++i)
            out.push_back(present ? parse_composite(p.at(key)[static_cast<std::size_t>(i)], size_of(i))
                                  : CompositeFunction(MarginalFunction::zero(size_of(i))));
        return out;
    };
    auto nodes = functions("node_functions", topo.node_count(), [&](int t) { return topo.size(t); });
    auto edges = functions("edge_functions", E, [&](int e) { return topo.size(topo.edge(e).from) * topo.size(topo.edge(e).to); });
    try {
        return ProblemSpec(topo, std::move(kernels), std::move(nodes), std::move(edges), eps);
    } catch (const InvalidInput& ex) {
        p.fail(ex.what());
    }
}

ProblemSpec parse_flow(const Field& p, double eps, RunConfig& cfg) {
    p.allow_only({"kind", "vertices", "edges", "sources", "sinks", "horizon", "od", "terminal", "edge_cost"});
    FlowNetwork net;
    net.vertex_count = static_cast<int>(p.at("vertices").integer());
    if (net.vertex_count <= 0) p.at("vertices").fail("must be positive");
    auto vertex = [&](const Field& f) {
        const long v = f.integer();
        if (v < 0 || v >= net.vertex_count) f.fail("vertex " + std::to_string(v) + " out of range");
        return static_cast<int>(v);
    };
    const Field ef = p.at("edges");
    for (std::size_t i = 0; i < ef.length(); ++i) {
        const Field e = ef[i];
        e.allow_only({"from", "to", "capacity", "length"});
        FlowEdge edge;
        edge.from = vertex(e.at("from"));
        edge.to = vertex(e.at("to"));
        if (edge.from == edge.to) e.fail("an edge must join two different vertices");
        edge.capacity = e.number_or("capacity", kInf);
        if (!(edge.capacity > 0.0)) e.at("capacity").fail("capacity must be positive");
        edge.length = static_cast<int>(e.integer_or("length", 1));
        if (edge.length != 1) e.at("length").fail("only unit travel times are supported; subdivide longer edges");
        net.edges.push_back(edge);
    }
    for (const char* key : {"sources", "sinks"}) {
        const Field sf = p.at(key);
        auto& dst = std::string(key) == "sources" ? net.sources : net.sinks;
        for (std::size_t i = 0; i < sf.length(); ++i) dst.push_back(vertex(sf[i]));
    }
    net.horizon = static_cast<int>(p.at("horizon").integer());
    try {
        net.validate();
    } catch (const InvalidInput& e) {
        p.fail(e.what());
    }

    const Index n = net.state_count();
    MarginalFunction interior = MarginalFunction::zero(n);
    bool capped = false;
    for (const auto& e : net.edges) capped = capped || std::isfinite(e.capacity);
    if (!p.has("edge_cost") || (p.at("edge_cost").raw().is_string() && p.at("edge_cost").string() == "congestion")) {
        if (capped) {
            for (std::size_t i = 0; i < net.edges.size(); ++i)
                if (!std::isfinite(net.edges[i].capacity))
                    ef[i].fail("congestion cost needs a finite capacity on every edge");
            interior = build_congestion(net);
        }
    } else if (p.at("edge_cost").raw().is_string() && p.at("edge_cost").string() == "none") {
        interior = MarginalFunction::zero(n);
    } else {
        const Field cf = p.at("edge_cost");
        const Index size = cf.raw().is_object() && cf.raw().contains("size") ? cf.at("size").integer() : net.edge_states();
        if (size != n && size != net.edge_states())
            cf.fail("edge cost must cover the " + std::to_string(net.edge_states()) + " edge states or all " + std::to_string(n));
        interior = parse_segment_aware(cf, size);
    }

    const bool has_od = p.has("od");
    if (has_od == p.has("terminal")) p.fail("give exactly one of \"od\" and \"terminal\"");
    FlowProblem fp = [&] {
        try {
            if (has_od) {
                const Field of = p.at("od");
                const Matrix demand = parse_matrix(of, static_cast<Index>(net.sources.size()), static_cast<Index>(net.sinks.size()));
                nonnegative(of, flatten(demand), false);
                return build_flow_problem(net, embed_od(net, demand), interior, eps);
            }
            const Field tf = p.at("terminal");
            tf.allow_only({"first", "last"});
            const Vector first = nonnegative(tf.at("first"), parse_vector(tf.at("first"), n), false);
            const Vector last = nonnegative(tf.at("last"), parse_vector(tf.at("last"), n), false);
            return build_flow_problem(net, first, last, interior, eps);
        } catch (const InvalidInput& e) {
            p.fail(e.what());
        }
    }();
    cfg.flow = net;
    cfg.warnings = fp.warnings;
    return std::move(fp.spec);
}

// Time selectors: a list of indices, "interior", "final" or "all" (1..last).
std::vector<std::size_t> parse_times(const Field& f, int time_points) {
    std::vector<std::size_t> out;
    const auto last = static_cast<std::size_t>(time_points - 1);
    if (f.raw().is_string()) {
        const std::string s = f.string();
        if (s == "interior" || s == "all")
            for (std::size_t j = 1; j < last; ++j) out.push_back(j);
        if (s == "final" || s == "all") out.push_back(last);
        if (out.empty() && s != "interior") f.fail("expected \"interior\", \"final\", \"all\" or a list of times");
        return out;
    }
    for (std::size_t i = 0; i < f.length(); ++i) {
        const long j = f[i].integer();
        if (j < 1 || j > static_cast<long>(last)) f[i].fail("time must be between 1 and " + std::to_string(last));
        out.push_back(static_cast<std::size_t>(j));
    }
    return out;
}

ProblemSpec parse_mfg(const Field& p, double eps) {
    p.allow_only({"kind", "grid", "cost", "cost_multiplier", "time_points", "dt", "initial", "total", "species_functions"});
    MFGSetup s;
    s.epsilon = eps;
    if (p.has("grid") == p.has("cost")) p.fail("give exactly one of \"grid\" and \"cost\"");
    if (p.has("grid")) {
        const Field g = p.at("grid");
        const double mult = p.has("cost_multiplier") ? p.at("cost_multiplier").positive() : 1.0;
        s.cost = build_mfg_cost_matrix(parse_matrix(g, kAny, kAny), mult);
    } else {
        const Field c = p.at("cost");
        const Matrix m = parse_matrix(c, kAny, kAny);
        try {
            s.cost = build_mfg_cost_matrix(m, m.rows());
        } catch (const InvalidInput& e) {
            c.fail(e.what());
        }
        if (p.has("cost_multiplier")) s.cost *= p.at("cost_multiplier").positive();
    }
    const Index n = s.states();
    s.time_points = static_cast<int>(p.at("time_points").integer());
    if (s.time_points < 2) p.at("time_points").fail("need at least two time points");
    if (p.has("dt")) s.dt = p.at("dt").positive();
    const Field init = p.at("initial");
    s.initial = parse_matrix(init, kAny, n);
    for (Index i = 0; i < s.initial.size(); ++i)
        if (!(s.initial.data()[i] >= 0.0) || std::isinf(s.initial.data()[i])) init.fail("densities must be finite and nonnegative");
    const Index L = s.initial.rows();
    const auto T = static_cast<std::size_t>(s.time_points);

    if (p.has("total")) {
        const Field tf = p.at("total");
        s.total.assign(T, CompositeFunction{});
        for (std::size_t i = 0; i < tf.length(); ++i) {
            const Field item = tf[i];
            item.allow_only({"times", "function"});
            const CompositeFunction fn = parse_composite(item.at("function"), n);
            for (std::size_t j : parse_times(item.at("times"), s.time_points))
                for (const auto& part : fn.parts) s.total[j].parts.push_back(part);
        }
    }
    if (p.has("species_functions")) {
        const Field sf = p.at("species_functions");
        s.species.assign(T, std::vector<MarginalFunction>(static_cast<std::size_t>(L), MarginalFunction::zero(n)));
        std::vector<std::vector<bool>> seen(T, std::vector<bool>(static_cast<std::size_t>(L), false));
        for (std::size_t i = 0; i < sf.length(); ++i) {
            const Field item = sf[i];
            item.allow_only({"species", "times", "function"});
            const long l = item.at("species").integer();
            if (l < 0 || l >= L) item.at("species").fail("species index out of range");
            const MarginalFunction fn = parse_function(item.at("function"), n);
            for (std::size_t j : parse_times(item.at("times"), s.time_points)) {
                if (seen[j][static_cast<std::size_t>(l)])
                    item.fail("species " + std::to_string(l) + " already has a functional at time " + std::to_string(j));
                seen[j][static_cast<std::size_t>(l)] = true;
                s.species[j][static_cast<std::size_t>(l)] = fn;
            }
        }
    }
    try {
        return build_mfg_problem(s);
    } catch (const InvalidInput& e) {
        p.fail(e.what());
    }
}

void parse_solver(const Field& f, SolverConfig& c) {
    f.allow_only({"feasibility_tol", "potential_tol", "tol", "max_sweeps", "renormalize_threshold",
                  "log_potential_bound", "verify", "monotonicity_slack"});
    if (f.has("tol")) c.feasibility_tol = c.potential_tol = f.at("tol").positive();
    if (f.has("feasibility_tol")) c.feasibility_tol = f.at("feasibility_tol").positive();
    if (f.has("potential_tol")) c.potential_tol = f.at("potential_tol").positive();
    if (f.has("max_sweeps")) {
        const long n = f.at("max_sweeps").integer();
        if (n <= 0) f.at("max_sweeps").fail("must be positive");
        c.max_sweeps = static_cast<int>(n);
    }
    if (f.has("renormalize_threshold")) {
        const long n = f.at("renormalize_threshold").integer();
        if (n < 8 || n > 900) f.at("renormalize_threshold").fail("must be between 8 and 900");
        c.renormalize_threshold = static_cast<int>(n);
    }
    if (f.has("log_potential_bound")) c.log_potential_bound = f.at("log_potential_bound").positive();
    if (f.has("monotonicity_slack")) c.monotonicity_slack = f.at("monotonicity_slack").positive();
    c.verify = f.boolean_or("verify", c.verify);
}

void parse_output(const Field& f, OutputOptions& o, const fs::path& base) {
    f.allow_only({"directory", "marginals", "bimarginals", "dual_trace", "summary"});
    if (f.has("directory")) {
        fs::path d = f.at("directory").string();
        o.directory = d.is_relative() ? base / d : d;
    }
    o.marginals = f.boolean_or("marginals", o.marginals);
    o.bimarginals = f.boolean_or("bimarginals", o.bimarginals);
    o.dual_trace = f.boolean_or("dual_trace", o.dual_trace);
    o.summary = f.boolean_or("summary", o.summary);
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("$: invalid JSON: ") + e.what());
    }
    const Field root(doc, "$", base_dir);
    root.allow_only({"problem", "epsilon", "solver", "output"});
    RunConfig cfg;
    const double eps = root.at("epsilon").positive();
    const Field p = root.at("problem");
    const std::string kind = p.at("kind").string();
    if (kind == "raw") {
        cfg.kind = ProblemKind::Raw;
        cfg.spec.emplace(parse_raw(p, eps));
    } else if (kind == "flow") {
        cfg.kind = ProblemKind::Flow;
        cfg.spec.emplace(parse_flow(p, eps, cfg));
    } else if (kind == "mfg") {
        cfg.kind = ProblemKind::MFG;
        cfg.spec.emplace(parse_mfg(p, eps));
    } else {
        p.at("kind").fail("unknown problem kind \"" + kind + "\" (raw, flow or mfg)");
    }
    if (root.has("solver")) parse_solver(root.at("solver"), cfg.solver);
    if (root.has("output")) parse_output(root.at("output"), cfg.output, base_dir);
    return cfg;
}

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

void append_row(std::string& s, const double* data, Index n) {
    for (Index i = 0; i < n; ++i) {
        if (i) s += ',';
        s += format_number(data[i]);
    }
    s += '\n';
}

}  // namespace

void write_csv(const fs::path& path, const Matrix& m) {
    std::string s;
    for (Index r = 0; r < m.rows(); ++r) append_row(s, m.row(r).data(), m.cols());
    write_text(path, s);
}

void write_csv_rows(const fs::path& path, const std::vector<Vector>& rows) {
    std::string s;
    for (const auto& v : rows) append_row(s, v.data(), v.size());
    write_text(path, s);
}

Matrix read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            const std::string t = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
            char* end = nullptr;
            const double x = std::strtod(t.c_str(), &end);
            if (t.empty() || *end != '\0')
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": not a number: \"" + t + "\"");
            row.push_back(x);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty CSV");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return m;
}

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_summary(const fs::path& path, const RunConfig& cfg, const SolveReport& r, double dual) {
    json s;
    s["termination"] = termination_name(r.termination);
    s["message"] = r.message;
    s["topology"] = topology_name(cfg.spec->topology().kind());
    s["epsilon"] = cfg.spec->epsilon();
    s["sweeps"] = r.sweeps;
    s["final_dual"] = finite_or_null(dual);
    s["max_residual"] = finite_or_null(r.max_residual());
    json res = json::array();
    for (const auto& c : r.residuals) res.push_back({{"block", c.block}, {"value", finite_or_null(c.value)}});
    s["residuals"] = res;
    s["rescaling_events"] = r.rescaling_events;
    s["wall_time_seconds"] = r.wall_time_seconds;
    json warnings = json::array();
    for (const auto& w : cfg.warnings) warnings.push_back(w);
    for (const auto& w : r.warnings) warnings.push_back(w);
    s["warnings"] = warnings;
    if (cfg.solver.verify) {
        s["verify"] = {{"updates_checked", r.updates_checked},
                       {"monotonicity_violations", r.monotonicity_violations},
                       {"worst_dual_drop", r.worst_dual_drop},
                       {"oracle_discrepancy", r.oracle_discrepancy}};
    }
    write_text(path, s.dump(2) + "\n");
}

bool verify_failed(const SolveReport& r) {
    return r.monotonicity_violations > 0 || r.oracle_discrepancy > 1e-8;
}

}  // namespace

RunOutcome run(const RunConfig& config, std::ostream& log) {
    if (!config.spec) throw ConfigError("$: no problem description");
    const ProblemSpec& spec = *config.spec;
    const GraphTopology& topo = spec.topology();
    RunOutcome out;
    for (const auto& w : config.warnings) log << "warning: " << w << "\n";

    std::optional<Solver> solver;
    double dual = -kInf;
    try {
        solver.emplace(spec, config.solver);
        out.report = solver->run();
        dual = solver->dual();
    } catch (const InvalidInput& e) {
        // Inconsistent equality masses: no plan can exist.
        out.report.termination = Termination::Infeasible;
        out.report.message = e.what();
    }
    const SolveReport& r = out.report;

    fs::create_directories(config.output.directory);
    const fs::path dir = config.output.directory;
    if (solver) {
        auto proj = make_projector(spec, config.solver.renormalize_threshold);
        proj->refresh(solver->potentials());
        const int time_nodes = topo.kind() == TopologyClass::SpeciesHub ? topo.time_nodes() : topo.node_count();
        std::vector<Vector> margs;
        for (int t = 0; t < time_nodes; ++t) margs.push_back(proj->marginal(t).value());
        if (config.output.marginals) write_csv_rows(dir / "marginals.csv", margs);
        if (config.output.bimarginals)
            for (int e = 0; e < topo.edge_count(); ++e) {
                const Edge& ed = topo.edge(e);
                write_csv(dir / ("bimarg_" + std::to_string(ed.from) + "_" + std::to_string(ed.to) + ".csv"),
                          proj->bimarginal(e).value());
            }
        if (config.output.dual_trace) {
            std::string s = "sweep,dual,max_residual\n";
            for (std::size_t k = 0; k < r.dual_trace.size(); ++k)
                s += std::to_string(k + 1) + "," + format_number(r.dual_trace[k]) + "," + format_number(r.max_residual_trace[k]) + "\n";
            write_text(dir / "dual_trace.csv", s);
        }
        if (config.kind == ProblemKind::Flow && config.flow) {
            const Matrix util = flow_utilization(*config.flow, margs);
            std::string s = "time";
            for (Index e = 0; e < config.flow->edge_states(); ++e) s += "," + config.flow->state_label(e);
            s += "\n";
            for (Index t = 0; t < util.rows(); ++t) {
                s += std::to_string(t);
                for (Index e = 0; e < util.cols(); ++e) s += "," + format_number(util(t, e));
                s += "\n";
            }
            write_text(dir / "utilization.csv", s);
        }
        if (config.kind == ProblemKind::MFG) {
            std::string s = "time,species";
            for (Index i = 0; i < topo.size(0); ++i) s += ",x" + std::to_string(i);
            s += "\n";
            for (int t = 0; t < topo.time_nodes(); ++t) {
                const Matrix st = proj->bimarginal(topo.hub_edge(t)).value();
                for (Index l = 0; l < st.rows(); ++l) {
                    s += std::to_string(t) + "," + std::to_string(l);
                    for (Index i = 0; i < st.cols(); ++i) s += "," + format_number(st(l, i));
                    s += "\n";
                }
            }
            write_text(dir / "species_densities.csv", s);
        }
    }
    if (config.output.summary) write_summary(dir / "summary.json", config, r, dual);

    switch (r.termination) {
        case Termination::Converged: out.exit_code = kExitConverged; break;
        case Termination::MaxSweeps: out.exit_code = kExitMaxSweeps; break;
        case Termination::Infeasible:
        case Termination::NumericalFailure: out.exit_code = kExitInfeasible; break;
    }
    if (config.solver.verify && verify_failed(r)) out.exit_code = kExitVerifyFailed;
    return out;
}

int configure_threads() {
#ifdef GTOP_HAVE_OPENMP
    if (const char* env = std::getenv("GTOP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) Eigen::setNbThreads(n);
    }
    return Eigen::nbThreads();
#else
    return 1;
#endif
}

}  // namespace gtop
