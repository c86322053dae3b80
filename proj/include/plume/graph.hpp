#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "plume/matrix.hpp"

namespace plume::ad {

// Reverse-mode computation graph over dense matrices, with a forward-mode
// tangent transform that extends a graph by nodes computing directional
// input derivatives. Tangent extensions are built from the same primitive
// ops, so backward() differentiates through them with respect to parameters,
// and the transform can be applied to its own result for second derivatives.

enum class Op {
    Constant,
    Parameter,
    Input,
    Add,
    Sub,
    Mul,
    MatMul,
    Unary,
    Mean,
    Sum,
    Scale,
};

enum class Unary { Tanh, TanhShrink, Sin, Cos, Exp, Square };

struct Shape {
    int rows = 0;
    int cols = 0;
    bool operator==(const Shape&) const = default;
    size_t count() const { return static_cast<size_t>(rows) * cols; }
};

struct Node {
    Op op = Op::Constant;
    Unary fn = Unary::Tanh;  // Unary nodes only
    int a = -1;
    int b = -1;
    Shape shape;
    double factor = 1.0;  // Scale nodes only
    std::string name;     // parameters/inputs, empty elsewhere
    bool zero = false;    // statically known all-zero (enables tangent pruning)
};

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Declarative node spec for build(); `args` must reference earlier entries.
struct NodeSpec {
    Op op;
    Unary fn = Unary::Tanh;
    std::vector<int> args;
    Shape shape;           // Constant/Parameter/Input only
    double factor = 1.0;   // Scale only
    std::string name;
};

class Graph {
public:
    // Builder interface. Every method validates shapes and throws GraphError
    // with the offending node named on mismatch.
    int constant(Matrix value, std::string name = {});
    int zeros(int rows, int cols);  // deduplicated all-zero constant
    int parameter(std::string name, int rows, int cols);
    int input(std::string name, int rows, int cols);
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int matmul(int a, int b);
    int unary(Unary fn, int a);
    int mean(int a);
    int sum(int a);
    int scale(int a, double factor);

    // Validated construction from a flat op-spec list. Rejects forward or
    // out-of-range references (cycles) and arity/shape violations.
    static Graph build(const std::vector<NodeSpec>& specs);

    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const Matrix& constant_value(int id) const;

    void mark_output(int id);
    const std::vector<int>& outputs() const { return outputs_; }
    std::vector<int> parameter_nodes() const;

    // Topological-order indices are the ids themselves (append-only builder).
    bool depends_on_input(int id, int input_node) const;

private:
    int push(Node n);
    void check_id(int id, const char* ctx) const;
    Shape broadcast_shape(int a, int b, const char* ctx) const;

    std::vector<Node> nodes_;
    std::vector<Matrix> const_values_;  // parallel to nodes_, empty unless Constant
    std::vector<int> outputs_;
};

struct DivergenceInfo {
    bool diverged = false;
    int node = -1;  // first offending node
};

// Holds per-node values and adjoints for one graph. Buffers are allocated
// once and reused across repeated forward/backward sweeps.
class Session {
public:
    explicit Session(const Graph& g);

    void bind(int node, Matrix value);
    void bind_flat(int node, const double* flat);  // copy shape.count() doubles

    // Evaluates every node in topological order. Returns divergence info if a
    // non-finite value appears; evaluation stops at the first offending node.
    DivergenceInfo forward();

    // Reverse sweep seeding d(seed)/d(seed)=1. Requires a scalar seed node and
    // a completed forward pass (throws GraphError otherwise).
    DivergenceInfo backward(int seed);

    const Matrix& value(int node) const { return values_[static_cast<size_t>(node)]; }
    const Matrix& adjoint(int node) const { return adjoints_[static_cast<size_t>(node)]; }
    const Graph& graph() const { return *g_; }

private:
    const Graph* g_;
    std::vector<Matrix> values_;
    std::vector<Matrix> adjoints_;
    std::vector<Matrix> scratch_;  // per-node backward workspace
    std::vector<char> bound_;
    std::vector<char> reachable_;  // ancestors of last backward seed
    bool forward_done_ = false;
};

// Spec-shaped convenience wrappers around Session.
using ValueTable = std::vector<Matrix>;

struct GradientEntry {
    int node;
    std::string name;
    Matrix grad;
};
using GradientTable = std::vector<GradientEntry>;

struct ForwardResult {
    ValueTable values;
    DivergenceInfo divergence;
};

ForwardResult forward(const Graph& g, const std::vector<std::pair<int, Matrix>>& inputs);
GradientTable backward(const Graph& g, int seed,
                       const std::vector<std::pair<int, Matrix>>& inputs);

// Extends `g` in place with nodes for the directional derivative of each
// target (default: g's outputs) with respect to input node `wrt`, along
// `direction` (one entry per input row, broadcast across columns).
// Returns the original-node -> tangent-node map (-1 where no tangent exists,
// i.e. the node does not depend on `wrt`).
struct TangentMap {
    std::vector<int> dot;
    int of(int node) const { return dot[static_cast<size_t>(node)]; }
};
TangentMap tangent(Graph& g, int wrt, std::span<const double> direction,
                   std::vector<int> targets = {});

// Central finite-difference audit of backward() over every parameter entry.
struct FdCheckEntry {
    std::string param;
    double max_rel_dev = 0.0;
};
struct FdCheckReport {
    double max_rel_dev = 0.0;
    std::vector<FdCheckEntry> entries;
    bool pass(double tol) const { return max_rel_dev < tol; }
};
FdCheckReport finite_diff_check(const Graph& g, int loss,
                                const std::vector<std::pair<int, Matrix>>& bindings,
                                double step = 1e-4);

}  // namespace plume::ad
