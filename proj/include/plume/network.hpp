#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plume/graph.hpp"
#include "plume/matrix.hpp"

namespace plume::net {

enum class BlockKind { Plain, Resnet };
enum class OutputHeads { COnly, FoPinn };

// tanhshrink activation throughout; sin input mapping optional.
struct ArchitectureSpec {
    int input_dim = 3;  // (x, y, t)
    int hidden_width = 64;
    int depth = 4;  // plain: hidden layers; resnet: residual blocks after the entry layer
    BlockKind block = BlockKind::Resnet;
    bool sin_input_layer = false;
    OutputHeads heads = OutputHeads::COnly;

    int output_count() const { return heads == OutputHeads::FoPinn ? 4 : 1; }
    void validate() const;  // throws std::invalid_argument
    bool operator==(const ArchitectureSpec&) const = default;
};

struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
};

struct NetworkState {
    ArchitectureSpec arch;
    uint64_t seed = 0;
    std::vector<Matrix> params;  // ordered as layout()

    // Glorot-uniform weights, zero biases; sin-layer W standard normal, b zero.
    static NetworkState init(const ArchitectureSpec& spec, uint64_t seed);

    std::vector<TensorSpec> layout() const;
    size_t parameter_count() const;
    void to_flat(std::vector<double>& out) const;
    void from_flat(const double* flat);
};

// Node handles into a graph holding one trunk evaluation.
struct TrunkRefs {
    int input = -1;
    int c = -1;                       // 1xN
    int gx = -1, gy = -1, gt = -1;    // FO auxiliary heads, -1 for c_only
    int out_nodes[4] = {-1, -1, -1, -1};
};

struct NetworkGraph {
    ad::Graph graph;
    std::vector<int> param_nodes;  // aligned with NetworkState::layout()
    TrunkRefs refs;
};

// Creates parameter nodes for `spec` in layout order.
std::vector<int> make_param_nodes(ad::Graph& g, const ArchitectureSpec& spec);

// Appends one trunk evaluation on an existing input node, reusing param nodes.
TrunkRefs append_trunk(ad::Graph& g, const ArchitectureSpec& spec,
                       const std::vector<int>& param_nodes, int input_node);

// Fresh graph with a single trunk over an n_points batch.
NetworkGraph build_graph(const NetworkState& state, int n_points);

// Plain (non-graph) evaluation. points is input_dim x N; result output_count x N.
Matrix evaluate(const NetworkState& state, const Matrix& points);

// gamma(x) = sin(2*pi*(W x + b)); points input_dim x N, W features x input_dim.
Matrix sin_input_map(const Matrix& points, const Matrix& W, const Matrix& b);

// h' = h + tanhshrink(W h + b)
Matrix resnet_block(const Matrix& h, const Matrix& W, const Matrix& b);

struct DerivativeSet {
    Matrix cx, cy, ct;    // order >= 1
    Matrix cxx, cyy;      // order == 2
};

// First or second input derivatives of the c head at the given points,
// computed by tangent propagation on the network graph.
DerivativeSet input_derivatives(const NetworkState& state, const Matrix& points, int order);

void save_checkpoint(const NetworkState& state, const std::string& path);
NetworkState load_checkpoint(const std::string& path);

}  // namespace plume::net
