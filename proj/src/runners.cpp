#include "plume/runners.hpp"

#include <cmath>
#include <stdexcept>

namespace plume::run {

ForwardConfig ForwardConfig::defaults() {
    ForwardConfig cfg;
    cfg.arch.input_dim = 3;
    cfg.arch.hidden_width = 64;
    cfg.arch.depth = 4;
    cfg.arch.block = net::BlockKind::Resnet;
    cfg.arch.sin_input_layer = true;
    cfg.arch.heads = net::OutputHeads::FoPinn;
    cfg.train.weights.pde = 1;
    cfg.train.weights.bc = 1000;  // prioritizes initial and boundary conditions
    cfg.train.weights.fo = 1;
    cfg.train.weights.data = 0;
    cfg.train.adam_epochs = 1500;
    cfg.train.lbfgs_epochs = 500;
    cfg.train.n_collocation = 2000;
    cfg.train.n_boundary = 600;
    cfg.train.train_source = false;
    return cfg;
}

Matrix predict_field(const net::NetworkState& network,
                     const phys::CharacteristicScales& scales,
                     const ref::FieldSeries& grid_ref, double t) {
    const phys::Nondimensionalizer nd(scales);
    const int nx = grid_ref.nx, ny = grid_ref.ny;
    Matrix pts(3, nx * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int col = j * nx + i;
            pts.at(0, col) = nd.x_star(grid_ref.node_x(i));
            pts.at(1, col) = nd.x_star(grid_ref.node_y(j));
            pts.at(2, col) = nd.t_star(t);
        }
    Matrix out = net::evaluate(network, pts);
    Matrix field(ny, nx);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) field.at(j, i) = nd.c_phys(out.at(0, j * nx + i));
    return field;
}

ForwardResult run_forward(const phys::Scenario& scenario, const ForwardConfig& cfg,
                          uint64_t seed) {
    phys::Scenario sc = scenario;
    sc.t_start = 0;  // the release starts the transient; train over [0, t_end]
    sc.validate();

    std::vector<double> times;
    const int n = std::max(cfg.n_snapshots, 2);
    for (int i = 0; i < n; ++i) times.push_back(sc.t_end * i / (n - 1));

    ForwardResult result;
    result.reference = ref::solve_forward(sc, cfg.grid, times);

    sc.scales = phys::default_scales(sc, std::max(result.reference.max_abs(), 1e-12));
    result.scales = sc.scales;

    result.network = net::NetworkState::init(cfg.arch, seed);
    train::TrainConfig tc = cfg.train;
    tc.train_source = false;
    tc.collocation_seed = seed * 2654435761u + 5;
    result.report = train::train(result.network, sc, nullptr, tc);

    const phys::Nondimensionalizer nd(sc.scales);
    result.success = true;
    for (size_t s = 0; s < result.reference.snaps.size(); ++s) {
        const ref::FieldSnapshot& snap = result.reference.snaps[s];
        Matrix pred = predict_field(result.network, sc.scales, result.reference, snap.t);
        SnapshotComparison cmp;
        cmp.t = snap.t;
        cmp.mse_phys = ref::field_mse(pred, snap.c);
        cmp.mae_phys = ref::field_mae(pred, snap.c);
        cmp.mse_star = cmp.mse_phys / (sc.scales.C * sc.scales.C);
        cmp.mae_star = cmp.mae_phys / sc.scales.C;
        if (!(cmp.mse_star < cfg.success_mse)) result.success = false;
        result.snapshots.push_back(cmp);
        result.predicted.push_back(std::move(pred));
    }
    if (result.report.diverged) result.success = false;
    return result;
}

}  // namespace plume::run
