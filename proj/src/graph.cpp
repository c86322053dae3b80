#include "plume/graph.hpp"

#include <cmath>
#include <cstring>

#ifdef PLUME_PROFILE_OPS
#include <chrono>
#include <cstdio>
#endif

namespace plume::ad {

namespace {

bool broadcastable(const Shape& big, const Shape& small) {
    return (small.rows == big.rows || small.rows == 1) &&
           (small.cols == big.cols || small.cols == 1);
}

std::string shape_str(const Shape& s) {
    return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    const_values_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id, const char* ctx) const {
    if (id < 0 || id >= size())
        throw GraphError(std::string(ctx) + ": node id " + std::to_string(id) +
                         " out of range");
}

Shape Graph::broadcast_shape(int a, int b, const char* ctx) const {
    const Shape& sa = nodes_[a].shape;
    const Shape& sb = nodes_[b].shape;
    Shape out{std::max(sa.rows, sb.rows), std::max(sa.cols, sb.cols)};
    if (!broadcastable(out, sa) || !broadcastable(out, sb))
        throw GraphError(std::string(ctx) + " node " + std::to_string(size()) +
                         ": incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
    return out;
}

int Graph::constant(Matrix value, std::string name) {
    Node n;
    n.op = Op::Constant;
    n.shape = {value.rows, value.cols};
    n.name = std::move(name);
    n.zero = true;
    for (double v : value.data)
        if (v != 0.0) {
            n.zero = false;
            break;
        }
    int id = push(std::move(n));
    const_values_[id] = std::move(value);
    return id;
}

int Graph::zeros(int rows, int cols) {
    for (int i = 0; i < size(); ++i) {
        const Node& n = nodes_[i];
        if (n.op == Op::Constant && n.zero && n.shape.rows == rows && n.shape.cols == cols)
            return i;
    }
    return constant(Matrix(rows, cols));
}

int Graph::parameter(std::string name, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw GraphError("parameter " + name + ": empty shape");
    Node n;
    n.op = Op::Parameter;
    n.shape = {rows, cols};
    n.name = std::move(name);
    return push(std::move(n));
}

int Graph::input(std::string name, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw GraphError("input " + name + ": empty shape");
    Node n;
    n.op = Op::Input;
    n.shape = {rows, cols};
    n.name = std::move(name);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    check_id(a, "add");
    check_id(b, "add");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.shape = broadcast_shape(a, b, "add");
    n.zero = nodes_[a].zero && nodes_[b].zero;
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    check_id(a, "sub");
    check_id(b, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.shape = broadcast_shape(a, b, "sub");
    n.zero = nodes_[a].zero && nodes_[b].zero;
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    check_id(a, "mul");
    check_id(b, "mul");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.shape = broadcast_shape(a, b, "mul");
    n.zero = nodes_[a].zero || nodes_[b].zero;
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Shape& sa = nodes_[a].shape;
    const Shape& sb = nodes_[b].shape;
    if (sa.cols != sb.rows)
        throw GraphError("matmul node " + std::to_string(size()) + ": inner dims differ, " +
                         shape_str(sa) + " * " + shape_str(sb));
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.shape = {sa.rows, sb.cols};
    n.zero = nodes_[a].zero || nodes_[b].zero;
    return push(std::move(n));
}

int Graph::unary(Unary fn, int a) {
    check_id(a, "unary");
    Node n;
    n.op = Op::Unary;
    n.fn = fn;
    n.a = a;
    n.shape = nodes_[a].shape;
    // f(0)=0 for every member of the vocabulary except exp and cos
    n.zero = nodes_[a].zero && fn != Unary::Exp && fn != Unary::Cos;
    return push(std::move(n));
}

int Graph::mean(int a) {
    check_id(a, "mean");
    Node n;
    n.op = Op::Mean;
    n.a = a;
    n.shape = {1, 1};
    n.zero = nodes_[a].zero;
    return push(std::move(n));
}

int Graph::sum(int a) {
    check_id(a, "sum");
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.shape = {1, 1};
    n.zero = nodes_[a].zero;
    return push(std::move(n));
}

int Graph::scale(int a, double factor) {
    check_id(a, "scale");
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.factor = factor;
    n.shape = nodes_[a].shape;
    n.zero = nodes_[a].zero || factor == 0.0;
    return push(std::move(n));
}

Graph Graph::build(const std::vector<NodeSpec>& specs) {
    Graph g;
    for (size_t i = 0; i < specs.size(); ++i) {
        const NodeSpec& s = specs[i];
        for (int arg : s.args) {
            if (arg < 0 || arg >= static_cast<int>(i))
                throw GraphError("node " + std::to_string(i) +
                                 ": argument " + std::to_string(arg) +
                                 " does not precede it (cycle or forward reference)");
        }
        auto want_args = [&](size_t n) {
            if (s.args.size() != n)
                throw GraphError("node " + std::to_string(i) + ": expected " +
                                 std::to_string(n) + " args, got " +
                                 std::to_string(s.args.size()));
        };
        switch (s.op) {
            case Op::Constant:
                want_args(0);
                g.constant(Matrix(s.shape.rows, s.shape.cols), s.name);
                break;
            case Op::Parameter:
                want_args(0);
                g.parameter(s.name, s.shape.rows, s.shape.cols);
                break;
            case Op::Input:
                want_args(0);
                g.input(s.name, s.shape.rows, s.shape.cols);
                break;
            case Op::Add:
                want_args(2);
                g.add(s.args[0], s.args[1]);
                break;
            case Op::Sub:
                want_args(2);
                g.sub(s.args[0], s.args[1]);
                break;
            case Op::Mul:
                want_args(2);
                g.mul(s.args[0], s.args[1]);
                break;
            case Op::MatMul:
                want_args(2);
                g.matmul(s.args[0], s.args[1]);
                break;
            case Op::Unary:
                want_args(1);
                g.unary(s.fn, s.args[0]);
                break;
            case Op::Mean:
                want_args(1);
                g.mean(s.args[0]);
                break;
            case Op::Sum:
                want_args(1);
                g.sum(s.args[0]);
                break;
            case Op::Scale:
                want_args(1);
                g.scale(s.args[0], s.factor);
                break;
        }
    }
    return g;
}

const Matrix& Graph::constant_value(int id) const {
    check_id(id, "constant_value");
    if (nodes_[id].op != Op::Constant) throw GraphError("node is not a constant");
    return const_values_[id];
}

void Graph::mark_output(int id) {
    check_id(id, "mark_output");
    outputs_.push_back(id);
}

std::vector<int> Graph::parameter_nodes() const {
    std::vector<int> ids;
    for (int i = 0; i < size(); ++i)
        if (nodes_[i].op == Op::Parameter) ids.push_back(i);
    return ids;
}

bool Graph::depends_on_input(int id, int input_node) const {
    std::vector<char> mark(nodes_.size(), 0);
    mark[input_node] = 1;
    for (int i = input_node + 1; i <= id; ++i) {
        const Node& n = nodes_[i];
        if ((n.a >= 0 && mark[n.a]) || (n.b >= 0 && mark[n.b])) mark[i] = 1;
    }
    return mark[id] != 0;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session::Session(const Graph& g) : g_(&g) {
    values_.reserve(g.size());
    adjoints_.resize(g.size());
    bound_.assign(g.size(), 0);
    reachable_.assign(g.size(), 0);
    for (int i = 0; i < g.size(); ++i) {
        const Node& n = g.node(i);
        values_.emplace_back(n.shape.rows, n.shape.cols);
        if (n.op == Op::Constant) {
            values_[i] = g.constant_value(i);
            bound_[i] = 1;
        }
    }
}

void Session::bind(int node, Matrix value) {
    const Node& n = g_->node(node);
    if (n.op != Op::Input && n.op != Op::Parameter && n.op != Op::Constant)
        throw GraphError("bind: node " + std::to_string(node) + " is not bindable");
    if (value.rows != n.shape.rows || value.cols != n.shape.cols)
        throw GraphError("bind: shape mismatch for node " + std::to_string(node));
    values_[node] = std::move(value);
    bound_[node] = 1;
    forward_done_ = false;
}

void Session::bind_flat(int node, const double* flat) {
    const Node& n = g_->node(node);
    std::memcpy(values_[node].data.data(), flat, n.shape.count() * sizeof(double));
    bound_[node] = 1;
    forward_done_ = false;
}

namespace {

// branch-free finiteness probe: the absolute sum is finite iff every entry is
bool all_finite(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data) acc += std::fabs(v);
    return std::isfinite(acc);
}

double apply_unary(Unary fn, double x) {
    switch (fn) {
        case Unary::Tanh: return std::tanh(x);
        case Unary::TanhShrink: return x - std::tanh(x);
        case Unary::Sin: return std::sin(x);
        case Unary::Cos: return std::cos(x);
        case Unary::Exp: return std::exp(x);
        case Unary::Square: return x * x;
    }
    return 0.0;
}

// y' as a function of input x and output y
double unary_grad(Unary fn, double x, double y) {
    switch (fn) {
        case Unary::Tanh: return 1.0 - y * y;
        case Unary::TanhShrink: {
            double t = std::tanh(x);
            return t * t;
        }
        case Unary::Sin: return std::cos(x);
        case Unary::Cos: return -std::sin(x);
        case Unary::Exp: return y;
        case Unary::Square: return 2.0 * x;
    }
    return 0.0;
}

// Elementwise visit of out = f(a, b) with row/col broadcasting of a and b.
template <typename F>
void broadcast_apply(Matrix& out, const Matrix& a, const Matrix& b, F&& f) {
    const bool plain = a.rows == out.rows && a.cols == out.cols && b.rows == out.rows &&
                       b.cols == out.cols;
    if (plain) {
        const size_t n = out.size();
        for (size_t i = 0; i < n; ++i) out.data[i] = f(a.data[i], b.data[i]);
        return;
    }
    for (int r = 0; r < out.rows; ++r) {
        const int ra = a.rows == 1 ? 0 : r;
        const int rb = b.rows == 1 ? 0 : r;
        for (int c = 0; c < out.cols; ++c) {
            const int ca = a.cols == 1 ? 0 : c;
            const int cb = b.cols == 1 ? 0 : c;
            out.at(r, c) = f(a.at(ra, ca), b.at(rb, cb));
        }
    }
}

// acc += reduce(g) where g has the output shape and acc the (possibly
// broadcast) operand shape; broadcast dimensions are summed.
void reduce_accumulate(Matrix& acc, const Matrix& g) {
    if (acc.rows == g.rows && acc.cols == g.cols) {
        const size_t n = g.size();
        for (size_t i = 0; i < n; ++i) acc.data[i] += g.data[i];
        return;
    }
    for (int r = 0; r < g.rows; ++r) {
        const int ra = acc.rows == 1 ? 0 : r;
        for (int c = 0; c < g.cols; ++c) {
            const int ca = acc.cols == 1 ? 0 : c;
            acc.at(ra, ca) += g.at(r, c);
        }
    }
}

}  // namespace

#ifdef PLUME_PROFILE_OPS
namespace {
struct OpTimer {
    double acc[16] = {0};
    long count = 0;
    ~OpTimer() {
        const char* names[] = {"Constant", "Parameter", "Input", "Add", "Sub", "Mul",
                               "MatMul", "Unary", "Mean", "Sum", "Scale"};
        std::fprintf(stderr, "op timing over %ld sweeps:\n", count);
        for (int i = 0; i < 11; ++i)
            std::fprintf(stderr, "  %-10s %8.1f ms total\n", names[i], 1e3 * acc[i]);
    }
};
OpTimer g_fwd_timer, g_bwd_timer;
}  // namespace
#define PLUME_OP_T0 auto _t0 = std::chrono::steady_clock::now();
#define PLUME_OP_T1(timer, op)                                                        \
    (timer).acc[static_cast<int>(op)] +=                                              \
        std::chrono::duration<double>(std::chrono::steady_clock::now() - _t0).count();
#else
#define PLUME_OP_T0
#define PLUME_OP_T1(timer, op)
#endif

DivergenceInfo Session::forward() {
    const Graph& g = *g_;
#ifdef PLUME_PROFILE_OPS
    ++g_fwd_timer.count;
#endif
    for (int i = 0; i < g.size(); ++i) {
        const Node& n = g.node(i);
        Matrix& out = values_[i];
        PLUME_OP_T0
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::Parameter:
            case Op::Input:
                if (!bound_[i])
                    throw GraphError("forward: unbound " +
                                     std::string(n.op == Op::Input ? "input" : "parameter") +
                                     " node " + std::to_string(i) + " (" + n.name + ")");
                break;
            case Op::Add:
                broadcast_apply(out, values_[n.a], values_[n.b],
                                [](double x, double y) { return x + y; });
                break;
            case Op::Sub:
                broadcast_apply(out, values_[n.a], values_[n.b],
                                [](double x, double y) { return x - y; });
                break;
            case Op::Mul:
                broadcast_apply(out, values_[n.a], values_[n.b],
                                [](double x, double y) { return x * y; });
                break;
            case Op::MatMul:
                gemm(false, false, 1.0, values_[n.a], values_[n.b], 0.0, out);
                break;
            case Op::Unary: {
                const Matrix& x = values_[n.a];
                const size_t cnt = x.size();
                for (size_t j = 0; j < cnt; ++j) out.data[j] = apply_unary(n.fn, x.data[j]);
                break;
            }
            case Op::Mean: {
                const Matrix& x = values_[n.a];
                double s = 0.0;
                for (double v : x.data) s += v;
                out.data[0] = s / static_cast<double>(x.size());
                break;
            }
            case Op::Sum: {
                const Matrix& x = values_[n.a];
                double s = 0.0;
                for (double v : x.data) s += v;
                out.data[0] = s;
                break;
            }
            case Op::Scale: {
                const Matrix& x = values_[n.a];
                const size_t cnt = x.size();
                for (size_t j = 0; j < cnt; ++j) out.data[j] = n.factor * x.data[j];
                break;
            }
        }
        PLUME_OP_T1(g_fwd_timer, n.op)
        if (n.op != Op::Constant && !all_finite(out)) {
            forward_done_ = false;
            return {true, i};
        }
    }
    forward_done_ = true;
    return {};
}

DivergenceInfo Session::backward(int seed) {
    const Graph& g = *g_;
    if (!forward_done_) throw GraphError("backward: forward has not been run");
    const Node& seed_node = g.node(seed);
    if (seed_node.shape.rows != 1 || seed_node.shape.cols != 1)
        throw GraphError("backward: seed node " + std::to_string(seed) + " is not scalar");

    // Restrict the sweep to ancestors of the seed; everything else keeps a
    // zero adjoint, as required for parameters the loss does not touch.
    std::fill(reachable_.begin(), reachable_.end(), 0);
    reachable_[seed] = 1;
    for (int i = seed; i >= 0; --i) {
        if (!reachable_[i]) continue;
        const Node& n = g.node(i);
        if (n.a >= 0) reachable_[n.a] = 1;
        if (n.b >= 0) reachable_[n.b] = 1;
    }

    for (int i = 0; i < g.size(); ++i) {
        Matrix& adj = adjoints_[i];
        if (adj.rows == 0) adj = Matrix(g.node(i).shape.rows, g.node(i).shape.cols);
        adj.fill(0.0);
    }
    adjoints_[seed].data[0] = 1.0;

    if (scratch_.empty()) scratch_.resize(g.size());
    for (int i = seed; i >= 0; --i) {
        if (!reachable_[i]) continue;
        const Node& n = g.node(i);
        // adjoints accumulate only from later nodes, so this one is final now
        if (!all_finite(adjoints_[i])) return {true, i};
        const Matrix& gout = adjoints_[i];
        Matrix& scratch = scratch_[i];
        if ((n.op == Op::Sub || n.op == Op::Mul) && scratch.rows == 0)
            scratch = Matrix(n.shape.rows, n.shape.cols);
        PLUME_OP_T0
        switch (n.op) {
            case Op::Constant:
            case Op::Parameter:
            case Op::Input:
                break;
            case Op::Add:
                reduce_accumulate(adjoints_[n.a], gout);
                reduce_accumulate(adjoints_[n.b], gout);
                break;
            case Op::Sub: {
                reduce_accumulate(adjoints_[n.a], gout);
                for (size_t j = 0; j < gout.size(); ++j) scratch.data[j] = -gout.data[j];
                reduce_accumulate(adjoints_[n.b], scratch);
                break;
            }
            case Op::Mul: {
                broadcast_apply(scratch, gout, values_[n.b],
                                [](double x, double y) { return x * y; });
                reduce_accumulate(adjoints_[n.a], scratch);
                broadcast_apply(scratch, gout, values_[n.a],
                                [](double x, double y) { return x * y; });
                reduce_accumulate(adjoints_[n.b], scratch);
                break;
            }
            case Op::MatMul:
                // dA += G * B^T ; dB += A^T * G
                gemm(false, true, 1.0, gout, values_[n.b], 1.0, adjoints_[n.a]);
                gemm(true, false, 1.0, values_[n.a], gout, 1.0, adjoints_[n.b]);
                break;
            case Op::Unary: {
                const Matrix& x = values_[n.a];
                const Matrix& y = values_[i];
                Matrix& acc = adjoints_[n.a];
                const size_t cnt = x.size();
                for (size_t j = 0; j < cnt; ++j)
                    acc.data[j] += gout.data[j] * unary_grad(n.fn, x.data[j], y.data[j]);
                break;
            }
            case Op::Mean: {
                const double w = gout.data[0] / static_cast<double>(values_[n.a].size());
                Matrix& acc = adjoints_[n.a];
                for (auto& v : acc.data) v += w;
                break;
            }
            case Op::Sum: {
                const double w = gout.data[0];
                Matrix& acc = adjoints_[n.a];
                for (auto& v : acc.data) v += w;
                break;
            }
            case Op::Scale: {
                Matrix& acc = adjoints_[n.a];
                const size_t cnt = acc.size();
                for (size_t j = 0; j < cnt; ++j) acc.data[j] += n.factor * gout.data[j];
                break;
            }
        }
        PLUME_OP_T1(g_bwd_timer, n.op)
    }
    return {};
}

ForwardResult forward(const Graph& g, const std::vector<std::pair<int, Matrix>>& inputs) {
    Session s(g);
    for (const auto& [id, v] : inputs) s.bind(id, v);
    DivergenceInfo d = s.forward();
    ValueTable vt;
    vt.reserve(g.size());
    for (int i = 0; i < g.size(); ++i) vt.push_back(s.value(i));
    return {std::move(vt), d};
}

GradientTable backward(const Graph& g, int seed,
                       const std::vector<std::pair<int, Matrix>>& inputs) {
    Session s(g);
    for (const auto& [id, v] : inputs) s.bind(id, v);
    DivergenceInfo d = s.forward();
    if (d.diverged)
        throw GraphError("backward: forward diverged at node " + std::to_string(d.node));
    s.backward(seed);
    GradientTable table;
    for (int id : g.parameter_nodes())
        table.push_back({id, g.node(id).name, s.adjoint(id)});
    return table;
}

// ---------------------------------------------------------------------------
// Tangent transform
// ---------------------------------------------------------------------------

TangentMap tangent(Graph& g, int wrt, std::span<const double> direction,
                   std::vector<int> targets) {
    const Node& in = g.node(wrt);
    if (in.op != Op::Input)
        throw GraphError("tangent: node " + std::to_string(wrt) + " is not an input");
    if (static_cast<int>(direction.size()) != in.shape.rows)
        throw GraphError("tangent: direction has " + std::to_string(direction.size()) +
                         " entries, input has " + std::to_string(in.shape.rows) + " rows");
    if (targets.empty()) targets = g.outputs();
    if (targets.empty()) throw GraphError("tangent: no targets and no marked outputs");

    const int base_size = g.size();

    // Ancestor set of the targets: only these need tangent nodes.
    std::vector<char> needed(base_size, 0);
    for (int t : targets) {
        if (t < 0 || t >= base_size) throw GraphError("tangent: target out of range");
        needed[t] = 1;
    }
    for (int i = base_size - 1; i >= 0; --i) {
        if (!needed[i]) continue;
        const Node& n = g.node(i);
        if (n.a >= 0) needed[n.a] = 1;
        if (n.b >= 0) needed[n.b] = 1;
    }

    // Direction matrix: every column of the seed equals `direction`.
    Matrix dir(in.shape.rows, in.shape.cols);
    for (int r = 0; r < dir.rows; ++r)
        for (int c = 0; c < dir.cols; ++c) dir.at(r, c) = direction[r];

    TangentMap map;
    map.dot.assign(base_size, -1);

    auto is_zero = [&](int id) { return id < 0 || g.node(id).zero; };
    // dot id of an operand, or -1 when identically zero
    auto dot_of = [&](int id) {
        int d = map.dot[id];
        return (d >= 0 && !g.node(d).zero) ? d : -1;
    };

    for (int i = 0; i < base_size; ++i) {
        if (!needed[i]) continue;
        const Node& n = g.node(i);
        int d = -1;
        switch (n.op) {
            case Op::Constant:
            case Op::Parameter:
                d = g.zeros(n.shape.rows, n.shape.cols);
                break;
            case Op::Input:
                d = (i == wrt) ? g.constant(dir) : g.zeros(n.shape.rows, n.shape.cols);
                break;
            case Op::Add: {
                int da = dot_of(n.a), db = dot_of(n.b);
                if (da < 0 && db < 0) d = g.zeros(n.shape.rows, n.shape.cols);
                else if (da < 0) d = db;
                else if (db < 0) d = da;
                else d = g.add(da, db);
                break;
            }
            case Op::Sub: {
                int da = dot_of(n.a), db = dot_of(n.b);
                if (da < 0 && db < 0) d = g.zeros(n.shape.rows, n.shape.cols);
                else if (db < 0) d = da;
                else if (da < 0) d = g.scale(db, -1.0);
                else d = g.sub(da, db);
                break;
            }
            case Op::Mul: {
                int da = dot_of(n.a), db = dot_of(n.b);
                int lhs = da >= 0 && !is_zero(n.b) ? g.mul(da, n.b) : -1;
                int rhs = db >= 0 && !is_zero(n.a) ? g.mul(n.a, db) : -1;
                if (lhs < 0 && rhs < 0) d = g.zeros(n.shape.rows, n.shape.cols);
                else if (lhs < 0) d = rhs;
                else if (rhs < 0) d = lhs;
                else d = g.add(lhs, rhs);
                break;
            }
            case Op::MatMul: {
                int da = dot_of(n.a), db = dot_of(n.b);
                int lhs = da >= 0 && !is_zero(n.b) ? g.matmul(da, n.b) : -1;
                int rhs = db >= 0 && !is_zero(n.a) ? g.matmul(n.a, db) : -1;
                if (lhs < 0 && rhs < 0) d = g.zeros(n.shape.rows, n.shape.cols);
                else if (lhs < 0) d = rhs;
                else if (rhs < 0) d = lhs;
                else d = g.add(lhs, rhs);
                break;
            }
            case Op::Unary: {
                int dx = dot_of(n.a);
                if (dx < 0) {
                    d = g.zeros(n.shape.rows, n.shape.cols);
                    break;
                }
                switch (n.fn) {
                    case Unary::Tanh: {
                        // 1 - tanh(x)^2, reusing this node's value
                        int one = g.constant(Matrix::filled(n.shape.rows, n.shape.cols, 1.0));
                        d = g.mul(dx, g.sub(one, g.unary(Unary::Square, i)));
                        break;
                    }
                    case Unary::TanhShrink: {
                        int t = g.unary(Unary::Tanh, n.a);
                        d = g.mul(dx, g.unary(Unary::Square, t));
                        break;
                    }
                    case Unary::Sin:
                        d = g.mul(dx, g.unary(Unary::Cos, n.a));
                        break;
                    case Unary::Cos:
                        d = g.mul(dx, g.scale(g.unary(Unary::Sin, n.a), -1.0));
                        break;
                    case Unary::Exp:
                        d = g.mul(dx, i);
                        break;
                    case Unary::Square:
                        d = g.mul(dx, g.scale(n.a, 2.0));
                        break;
                }
                break;
            }
            case Op::Mean: {
                int dx = dot_of(n.a);
                d = dx < 0 ? g.zeros(1, 1) : g.mean(dx);
                break;
            }
            case Op::Sum: {
                int dx = dot_of(n.a);
                d = dx < 0 ? g.zeros(1, 1) : g.sum(dx);
                break;
            }
            case Op::Scale: {
                int dx = dot_of(n.a);
                d = dx < 0 ? g.zeros(n.shape.rows, n.shape.cols) : g.scale(dx, n.factor);
                break;
            }
        }
        map.dot[i] = d;
    }
    map.dot.resize(g.size(), -1);
    return map;
}

// ---------------------------------------------------------------------------
// Finite-difference audit
// ---------------------------------------------------------------------------

FdCheckReport finite_diff_check(const Graph& g, int loss,
                                const std::vector<std::pair<int, Matrix>>& bindings,
                                double step) {
    const Node& ln = g.node(loss);
    if (ln.shape.rows != 1 || ln.shape.cols != 1)
        throw GraphError("finite_diff_check: loss node is not scalar");

    Session s(g);
    for (const auto& [id, v] : bindings) s.bind(id, v);
    if (s.forward().diverged) throw GraphError("finite_diff_check: forward diverged");
    s.backward(loss);

    std::vector<Matrix> analytic;
    std::vector<int> params = g.parameter_nodes();
    analytic.reserve(params.size());
    for (int id : params) analytic.push_back(s.adjoint(id));

    // Rebind perturbed copies; denominator floors the relative deviation so
    // near-zero gradients are judged on an absolute scale.
    FdCheckReport report;
    std::vector<std::pair<int, Matrix>> work = bindings;
    auto find_binding = [&](int id) -> Matrix* {
        for (auto& [bid, m] : work)
            if (bid == id) return &m;
        return nullptr;
    };

    for (size_t p = 0; p < params.size(); ++p) {
        int id = params[p];
        Matrix* bound = find_binding(id);
        if (!bound) throw GraphError("finite_diff_check: parameter " + g.node(id).name +
                                     " has no binding");
        FdCheckEntry entry{g.node(id).name.empty() ? std::to_string(id) : g.node(id).name,
                           0.0};
        for (size_t j = 0; j < bound->size(); ++j) {
            const double orig = bound->data[j];
            bound->data[j] = orig + step;
            Session sp(g);
            for (const auto& [bid, m] : work) sp.bind(bid, m);
            if (sp.forward().diverged) throw GraphError("finite_diff_check: diverged");
            const double fp = sp.value(loss).data[0];
            bound->data[j] = orig - step;
            Session sm(g);
            for (const auto& [bid, m] : work) sm.bind(bid, m);
            if (sm.forward().diverged) throw GraphError("finite_diff_check: diverged");
            const double fm = sm.value(loss).data[0];
            bound->data[j] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = analytic[p].data[j];
            const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-2);
            entry.max_rel_dev = std::max(entry.max_rel_dev, rel);
        }
        report.max_rel_dev = std::max(report.max_rel_dev, entry.max_rel_dev);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace plume::ad
