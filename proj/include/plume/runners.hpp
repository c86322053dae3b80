#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plume/network.hpp"
#include "plume/physics.hpp"
#include "plume/refsolver.hpp"
#include "plume/scenarios.hpp"
#include "plume/training.hpp"

namespace plume::run {

// Forward experiment: train a PINN on the transient problem (window [0,
// t_end], initial release at t=0), solve the same scenario with the
// reference solver, and compare fields snapshot by snapshot.
struct ForwardConfig {
    net::ArchitectureSpec arch;
    train::TrainConfig train;
    ref::GridSpec grid;
    int n_snapshots = 5;
    double success_mse = 1e-3;  // nondimensional, per snapshot

    static ForwardConfig defaults();  // the "S1-small" preset
};

struct SnapshotComparison {
    double t = 0;
    double mse_star = 0, mae_star = 0;  // nondimensional units
    double mse_phys = 0, mae_phys = 0;
};

struct ForwardResult {
    std::vector<SnapshotComparison> snapshots;
    bool success = false;  // every snapshot under success_mse
    train::TrainReport report;
    phys::CharacteristicScales scales;
    net::NetworkState network;
    ref::FieldSeries reference;
    std::vector<Matrix> predicted;  // physical units, one field per snapshot
};

ForwardResult run_forward(const phys::Scenario& scenario, const ForwardConfig& cfg,
                          uint64_t seed);

// Evaluates the trained network over the reference grid at time t (physical
// units in, physical units out).
Matrix predict_field(const net::NetworkState& network,
                     const phys::CharacteristicScales& scales,
                     const ref::FieldSeries& grid_ref, double t);

}  // namespace plume::run
