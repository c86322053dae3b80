#include "plume/network.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace plume::net {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const char* head_names[4] = {"c", "gx", "gy", "gt"};

}  // namespace

void ArchitectureSpec::validate() const {
    if (input_dim < 1) throw std::invalid_argument("architecture: input_dim must be >= 1");
    if (hidden_width < 1)
        throw std::invalid_argument("architecture: hidden_width must be >= 1");
    if (depth < 1) throw std::invalid_argument("architecture: depth must be >= 1");
}

std::vector<TensorSpec> NetworkState::layout() const {
    const ArchitectureSpec& a = arch;
    std::vector<TensorSpec> out;
    const int w = a.hidden_width;
    int feat = a.input_dim;
    if (a.sin_input_layer) {
        out.push_back({"sin.W", w, a.input_dim});
        out.push_back({"sin.b", w, 1});
        feat = w;
    }
    if (a.block == BlockKind::Resnet) {
        out.push_back({"entry.W", w, feat});
        out.push_back({"entry.b", w, 1});
        for (int i = 0; i < a.depth; ++i) {
            out.push_back({"block" + std::to_string(i) + ".W", w, w});
            out.push_back({"block" + std::to_string(i) + ".b", w, 1});
        }
    } else {
        for (int i = 0; i < a.depth; ++i) {
            out.push_back({"layer" + std::to_string(i) + ".W", w, i == 0 ? feat : w});
            out.push_back({"layer" + std::to_string(i) + ".b", w, 1});
        }
    }
    for (int h = 0; h < a.output_count(); ++h) {
        out.push_back({std::string("head.") + head_names[h] + ".W", 1, w});
        out.push_back({std::string("head.") + head_names[h] + ".b", 1, 1});
    }
    return out;
}

size_t NetworkState::parameter_count() const {
    size_t n = 0;
    for (const auto& t : layout()) n += static_cast<size_t>(t.rows) * t.cols;
    return n;
}

NetworkState NetworkState::init(const ArchitectureSpec& spec, uint64_t seed) {
    spec.validate();
    NetworkState s;
    s.arch = spec;
    s.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const TensorSpec& t : s.layout()) {
        Matrix m(t.rows, t.cols);
        const bool is_bias = t.cols == 1 && t.rows >= 1 && t.name.ends_with(".b");
        if (is_bias) {
            // biases stay zero
        } else if (t.name.starts_with("sin.")) {
            for (auto& v : m.data) v = normal(rng);
        } else {
            const double bound = std::sqrt(6.0 / (t.rows + t.cols));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : m.data) v = u(rng);
        }
        s.params.push_back(std::move(m));
    }
    return s;
}

void NetworkState::to_flat(std::vector<double>& out) const {
    out.clear();
    out.reserve(parameter_count());
    for (const Matrix& m : params) out.insert(out.end(), m.data.begin(), m.data.end());
}

void NetworkState::from_flat(const double* flat) {
    size_t off = 0;
    for (Matrix& m : params) {
        std::copy(flat + off, flat + off + m.size(), m.data.begin());
        off += m.size();
    }
}

std::vector<int> make_param_nodes(ad::Graph& g, const ArchitectureSpec& spec) {
    NetworkState tmp;
    tmp.arch = spec;
    std::vector<int> nodes;
    for (const TensorSpec& t : tmp.layout()) nodes.push_back(g.parameter(t.name, t.rows, t.cols));
    return nodes;
}

TrunkRefs append_trunk(ad::Graph& g, const ArchitectureSpec& spec,
                       const std::vector<int>& param_nodes, int input_node) {
    TrunkRefs refs;
    refs.input = input_node;
    size_t p = 0;
    auto next = [&]() { return param_nodes[p++]; };
    // tanhshrink lowered to x - tanh(x) so tangent extensions and backward
    // sweeps reuse the tanh values instead of re-evaluating libm tanh
    auto act = [&](int x) { return g.sub(x, g.unary(ad::Unary::Tanh, x)); };
    int h = input_node;
    if (spec.sin_input_layer) {
        int W = next(), b = next();
        h = g.unary(ad::Unary::Sin, g.scale(g.add(g.matmul(W, h), b), kTwoPi));
    }
    if (spec.block == BlockKind::Resnet) {
        int W = next(), b = next();
        h = g.add(g.matmul(W, h), b);  // linear entry; blocks carry the activations
        for (int i = 0; i < spec.depth; ++i) {
            int Wi = next(), bi = next();
            h = g.add(h, act(g.add(g.matmul(Wi, h), bi)));
        }
    } else {
        for (int i = 0; i < spec.depth; ++i) {
            int Wi = next(), bi = next();
            h = act(g.add(g.matmul(Wi, h), bi));
        }
    }
    for (int k = 0; k < spec.output_count(); ++k) {
        int W = next(), b = next();
        refs.out_nodes[k] = g.add(g.matmul(W, h), b);
    }
    refs.c = refs.out_nodes[0];
    if (spec.heads == OutputHeads::FoPinn) {
        refs.gx = refs.out_nodes[1];
        refs.gy = refs.out_nodes[2];
        refs.gt = refs.out_nodes[3];
    }
    return refs;
}

NetworkGraph build_graph(const NetworkState& state, int n_points) {
    state.arch.validate();
    NetworkGraph ng;
    ng.param_nodes = make_param_nodes(ng.graph, state.arch);
    int input = ng.graph.input("points", state.arch.input_dim, n_points);
    ng.refs = append_trunk(ng.graph, state.arch, ng.param_nodes, input);
    ng.graph.mark_output(ng.refs.c);
    return ng;
}

namespace {

ad::Session bound_session(const NetworkGraph& ng, const NetworkState& state,
                          const Matrix& points) {
    if (points.rows != state.arch.input_dim)
        throw std::invalid_argument("evaluate: points must be input_dim x N");
    ad::Session s(ng.graph);
    for (size_t i = 0; i < ng.param_nodes.size(); ++i)
        s.bind(ng.param_nodes[i], state.params[i]);
    s.bind(ng.refs.input, points);
    return s;
}

}  // namespace

Matrix evaluate(const NetworkState& state, const Matrix& points) {
    NetworkGraph ng = build_graph(state, points.cols);
    ad::Session s = bound_session(ng, state, points);
    if (s.forward().diverged)
        throw std::runtime_error("evaluate: non-finite network output");
    const int out_count = state.arch.output_count();
    Matrix out(out_count, points.cols);
    for (int k = 0; k < out_count; ++k) {
        const Matrix& row = s.value(ng.refs.out_nodes[k]);
        for (int c = 0; c < points.cols; ++c) out.at(k, c) = row.at(0, c);
    }
    return out;
}

Matrix sin_input_map(const Matrix& points, const Matrix& W, const Matrix& b) {
    if (W.cols != points.rows || b.rows != W.rows || b.cols != 1)
        throw std::invalid_argument("sin_input_map: shape mismatch");
    Matrix out(W.rows, points.cols);
    gemm(false, false, 1.0, W, points, 0.0, out);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = std::sin(kTwoPi * (out.at(r, c) + b.at(r, 0)));
    return out;
}

Matrix resnet_block(const Matrix& h, const Matrix& W, const Matrix& b) {
    if (W.cols != h.rows || W.rows != h.rows)
        throw std::invalid_argument("resnet_block: width mismatch");
    Matrix lin(h.rows, h.cols);
    gemm(false, false, 1.0, W, h, 0.0, lin);
    Matrix out = h;
    for (int r = 0; r < h.rows; ++r)
        for (int c = 0; c < h.cols; ++c) {
            const double z = lin.at(r, c) + b.at(r, 0);
            out.at(r, c) += z - std::tanh(z);
        }
    return out;
}

DerivativeSet input_derivatives(const NetworkState& state, const Matrix& points, int order) {
    if (order != 1 && order != 2)
        throw std::invalid_argument("input_derivatives: order must be 1 or 2");
    NetworkGraph ng = build_graph(state, points.cols);
    ad::Graph& g = ng.graph;
    const int c = ng.refs.c;
    const std::vector<double> ex = {1, 0, 0}, ey = {0, 1, 0}, et = {0, 0, 1};

    ad::TangentMap tx = ad::tangent(g, ng.refs.input, ex, {c});
    ad::TangentMap ty = ad::tangent(g, ng.refs.input, ey, {c});
    ad::TangentMap tt = ad::tangent(g, ng.refs.input, et, {c});
    int cx = tx.of(c), cy = ty.of(c), ct = tt.of(c);
    int cxx = -1, cyy = -1;
    if (order == 2) {
        cxx = ad::tangent(g, ng.refs.input, ex, {cx}).of(cx);
        cyy = ad::tangent(g, ng.refs.input, ey, {cy}).of(cy);
    }

    ad::Session s = bound_session(ng, state, points);
    if (s.forward().diverged)
        throw std::runtime_error("input_derivatives: non-finite value");
    DerivativeSet d;
    d.cx = s.value(cx);
    d.cy = s.value(cy);
    d.ct = s.value(ct);
    if (order == 2) {
        d.cxx = s.value(cxx);
        d.cyy = s.value(cyy);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Checkpoint container, format "plume-checkpoint v1" (see docs/FORMATS.md).
// Doubles are written with shortest round-trip formatting, so a save/load
// cycle reproduces parameters bit-exactly.
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_double(const std::string& s, const char* ctx) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error(std::string("checkpoint: bad number in ") + ctx);
    return v;
}

}  // namespace

void save_checkpoint(const NetworkState& state, const std::string& path) {
    std::ostringstream os;
    os << "plume-checkpoint v1\n";
    os << "seed " << state.seed << "\n";
    const ArchitectureSpec& a = state.arch;
    os << "input_dim " << a.input_dim << "\n";
    os << "hidden_width " << a.hidden_width << "\n";
    os << "depth " << a.depth << "\n";
    os << "block " << (a.block == BlockKind::Resnet ? "resnet" : "plain") << "\n";
    os << "activation tanhshrink\n";
    os << "sin_input " << (a.sin_input_layer ? 1 : 0) << "\n";
    os << "heads " << (a.heads == OutputHeads::FoPinn ? "fo_pinn" : "c_only") << "\n";
    auto spec = state.layout();
    os << "tensors " << spec.size() << "\n";
    for (size_t i = 0; i < spec.size(); ++i) {
        os << "tensor " << spec[i].name << " " << spec[i].rows << " " << spec[i].cols << "\n";
        for (double v : state.params[i].data) os << fmt_double(v) << "\n";
    }
    os << "end\n";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f << os.str();
}

NetworkState load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string line, word;

    auto expect_kv = [&](const char* key) {
        if (!std::getline(f, line)) throw std::runtime_error("checkpoint: truncated file");
        std::istringstream is(line);
        std::string k;
        is >> k >> word;
        if (k != key) throw std::runtime_error(std::string("checkpoint: expected ") + key);
        return word;
    };

    if (!std::getline(f, line) || line != "plume-checkpoint v1")
        throw std::runtime_error("checkpoint: bad magic line");
    NetworkState s;
    s.seed = std::stoull(expect_kv("seed"));
    s.arch.input_dim = std::stoi(expect_kv("input_dim"));
    s.arch.hidden_width = std::stoi(expect_kv("hidden_width"));
    s.arch.depth = std::stoi(expect_kv("depth"));
    s.arch.block = expect_kv("block") == "resnet" ? BlockKind::Resnet : BlockKind::Plain;
    expect_kv("activation");
    s.arch.sin_input_layer = expect_kv("sin_input") == "1";
    s.arch.heads = expect_kv("heads") == "fo_pinn" ? OutputHeads::FoPinn : OutputHeads::COnly;
    const size_t n_tensors = std::stoul(expect_kv("tensors"));
    auto spec = s.layout();
    if (spec.size() != n_tensors)
        throw std::runtime_error("checkpoint: tensor count does not match architecture");
    for (const TensorSpec& t : spec) {
        if (!std::getline(f, line)) throw std::runtime_error("checkpoint: truncated tensors");
        std::istringstream is(line);
        std::string tag, name;
        int rows, cols;
        is >> tag >> name >> rows >> cols;
        if (tag != "tensor" || name != t.name || rows != t.rows || cols != t.cols)
            throw std::runtime_error("checkpoint: tensor header mismatch at " + t.name);
        Matrix m(rows, cols);
        for (auto& v : m.data) {
            if (!std::getline(f, line)) throw std::runtime_error("checkpoint: truncated data");
            v = parse_double(line, t.name.c_str());
        }
        s.params.push_back(std::move(m));
    }
    if (!std::getline(f, line) || line != "end")
        throw std::runtime_error("checkpoint: missing end marker");
    return s;
}

}  // namespace plume::net
