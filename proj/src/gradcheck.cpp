#include "plume/gradcheck.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "plume/graph.hpp"
#include "plume/scenarios.hpp"
#include "plume/training.hpp"

namespace plume::gradcheck {

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (auto& v : m.data) v = d(rng);
    return m;
}

// one primitive op wrapped into a scalar loss, audited at random points
double check_primitive(const std::string& op, uint64_t seed) {
    std::mt19937_64 rng(seed);
    ad::Graph g;
    int w = g.parameter("w", 3, 4);
    int b = g.parameter("b", 3, 1);
    int x = g.input("x", 4, 5);
    int base = g.matmul(w, x);
    int node;
    if (op == "add") node = g.add(base, b);
    else if (op == "sub") node = g.sub(base, b);
    else if (op == "mul") node = g.mul(base, g.add(base, b));
    else if (op == "matmul") node = base;
    else if (op == "tanh") node = g.unary(ad::Unary::Tanh, base);
    else if (op == "tanhshrink") node = g.unary(ad::Unary::TanhShrink, base);
    else if (op == "sin") node = g.unary(ad::Unary::Sin, base);
    else if (op == "cos") node = g.unary(ad::Unary::Cos, base);
    else if (op == "exp") node = g.unary(ad::Unary::Exp, g.scale(base, 0.5));
    else if (op == "square") node = g.unary(ad::Unary::Square, base);
    else if (op == "scale") node = g.scale(base, -1.7);
    else if (op == "sum") node = g.unary(ad::Unary::Tanh, g.scale(base, 1.0));
    else node = base;

    int loss = op == "sum" ? g.sum(node) : g.mean(g.unary(ad::Unary::Square, node));
    std::vector<std::pair<int, Matrix>> bind = {
        {w, random_matrix(3, 4, rng)},
        {b, random_matrix(3, 1, rng)},
        {x, random_matrix(4, 5, rng)},
    };
    return ad::finite_diff_check(g, loss, bind).max_rel_dev;
}

double check_network(int index, uint64_t seed) {
    std::mt19937_64 rng(seed + index);
    net::ArchitectureSpec arch;
    arch.hidden_width = 6 + static_cast<int>(rng() % 4);
    arch.depth = 2;
    arch.block = (index % 2 == 0) ? net::BlockKind::Resnet : net::BlockKind::Plain;
    arch.sin_input_layer = (index % 3 == 0);
    arch.heads = (index % 4 < 2) ? net::OutputHeads::COnly : net::OutputHeads::FoPinn;

    phys::Scenario sc = scen::get_scenario(index % 2 == 0 ? "S1" : "S2");
    sc.scales = phys::default_scales(sc, 0.5);

    train::TrainConfig cfg;
    cfg.weights.pde = 1;
    cfg.weights.bc = (index % 3 == 1) ? 1000 : 0;
    if (arch.heads == net::OutputHeads::FoPinn) cfg.weights.fo = 2;
    cfg.adam_epochs = 0;
    cfg.lbfgs_epochs = 0;
    cfg.n_collocation = 18;
    cfg.n_boundary = cfg.weights.bc > 0 ? 12 : 0;
    cfg.collocation_seed = seed + 17 * index;
    cfg.train_source = (index % 2 == 1);
    cfg.source_init = train::SourceInit::Fixed;

    ObservationSet obs;
    const bool with_data = (index % 5 == 0);
    if (with_data) {
        cfg.weights.data = 10000;
        std::uniform_real_distribution<double> d(1.0, 9.0);
        for (int i = 0; i < 10; ++i)
            obs.samples.push_back({d(rng), d(rng), sc.single_instant() ? sc.t_end : d(rng) / 3,
                                   0.1 * d(rng)});
    }

    net::NetworkState state = net::NetworkState::init(arch, seed + 1000 + index);
    train::Trainer t(state, sc, with_data ? &obs : nullptr, cfg);
    // heavily weighted data terms (1e4) drown per-coordinate differences in
    // cancellation noise; the directional probe stays conditioned
    if (with_data) return t.directional_fd_check(8, 1e-5, seed + 31 * index);
    return t.finite_diff_check().max_rel_dev;
}

}  // namespace

Report run_gradcheck(uint64_t seed, int n_networks, double tolerance) {
    Report report;
    report.tolerance = tolerance;
    const char* ops[] = {"add", "sub", "mul", "matmul", "tanh", "tanhshrink",
                         "sin", "cos", "exp", "square", "scale", "sum"};
    for (const char* op : ops) {
        Entry e;
        e.name = std::string("op.") + op;
        for (uint64_t s = 0; s < 100; ++s)
            e.max_rel_dev = std::max(e.max_rel_dev, check_primitive(op, seed + s));
        e.pass = e.max_rel_dev < tolerance;
        report.entries.push_back(e);
    }
    for (int i = 0; i < n_networks; ++i) {
        Entry e;
        e.name = "network." + std::to_string(i);
        e.max_rel_dev = check_network(i, seed);
        e.pass = e.max_rel_dev < tolerance;
        report.entries.push_back(e);
    }
    for (const Entry& e : report.entries) {
        report.max_rel_dev = std::max(report.max_rel_dev, e.max_rel_dev);
        report.pass = report.pass && e.pass;
    }
    return report;
}

std::string format_report(const Report& r) {
    std::ostringstream os;
    os << "gradient check vs central finite differences (tolerance "
       << r.tolerance << " relative)\n";
    for (const Entry& e : r.entries) {
        os << "  " << (e.pass ? "ok   " : "FAIL ") << e.name << "  max_rel_dev="
           << e.max_rel_dev << "\n";
    }
    os << (r.pass ? "PASS" : "FAIL") << "  overall max_rel_dev=" << r.max_rel_dev << "\n";
    return os.str();
}

}  // namespace plume::gradcheck
