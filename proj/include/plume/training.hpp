#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plume/data.hpp"
#include "plume/graph.hpp"
#include "plume/network.hpp"
#include "plume/physics.hpp"

namespace plume::train {

struct LossWeights {
    double pde = 1.0, data = 0.0, bc = 0.0, fo = 0.0;
    void validate() const;  // at least one weight > 0, none negative
};

struct Point3 {
    double x = 0, y = 0, t = 0;
};

struct CollocationSet {
    std::vector<Point3> interior;  // PDE residual points
    std::vector<Point3> boundary;  // spatial boundary over the window
    std::vector<Point3> initial;   // interior points at t = 0
    uint64_t seed = 0;
};

// Uniform i.i.d. samples over domain x window, fixed for a whole run. For a
// single-instant scenario every point sits at t_end and no initial-time
// points are drawn. n_boundary splits evenly between the spatial boundary
// and the initial slice (all spatial when single-instant).
CollocationSet sample_collocation(const phys::Scenario& sc, int n_interior, int n_boundary,
                                  uint64_t seed);

struct LossBreakdown {
    double pde = 0, data = 0, bc = 0, fo = 0, total = 0;
    int epoch = 0;
    char phase = 'i';  // 'i' initial, 'a' adam, 'l' lbfgs
};

// total = ((w.pde*pde + w.data*data) + w.bc*bc) + w.fo*fo, exactly this
// association order.
LossBreakdown total_loss(double pde, double data, double bc, double fo,
                         const LossWeights& w);

// Startup heuristic: per-term weights rounded to powers of ten so every
// weighted term lands within one decade of the weighted PDE term. Zero terms
// keep their current weight.
LossWeights propose_weights(const LossBreakdown& initial_parts, const LossWeights& current);

struct AdamParams {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

// Standard bias-corrected Adam update.
void adam_step(std::vector<double>& w, const std::vector<double>& grad, AdamState& state,
               const AdamParams& p);

struct LbfgsParams {
    int history = 10;
    double c1 = 1e-4, c2 = 0.9;  // strong Wolfe
    int max_line_evals = 25;
    double max_step = 1e3;
    double grad_tol = 0.0;  // 0 = never converge on gradient norm
};

struct LineSearchRecord {
    int iteration = 0;
    double step = 0;
    double f_before = 0, f_after = 0;
    double slope0 = 0;  // directional derivative at step 0
    bool wolfe_ok = false;
};

enum class StepStatus { Ok, Converged, LineSearchFailed, Diverged };

// Limited-memory BFGS with two-loop recursion and a strong-Wolfe line search.
// A non-finite loss or gradient during the search restores the last finite
// iterate and reports Diverged.
class Lbfgs {
public:
    // fn(w, f, g) -> false when f or g is non-finite at w
    using LossFn =
        std::function<bool(const std::vector<double>&, double&, std::vector<double>&)>;

    Lbfgs(LbfgsParams params, size_t n);

    // w/f/g hold a consistent evaluation on entry and on (successful) exit.
    StepStatus step(const LossFn& fn, std::vector<double>& w, double& f,
                    std::vector<double>& g);

    const std::vector<LineSearchRecord>& line_search_log() const { return log_; }

private:
    LbfgsParams p_;
    size_t n_;
    int iter_ = 0;
    std::vector<std::vector<double>> s_, y_;
    std::vector<double> rho_;
    std::vector<LineSearchRecord> log_;
};

struct DivergenceEvent {
    char phase = '?';
    int epoch = -1;
    std::string detail;
};

struct TrainReport {
    std::vector<LossBreakdown> history;  // entry 0 = initial loss, then one per epoch
    std::vector<std::vector<double>> source_trajectory;  // physical x,y per source per entry
    double adam_seconds = 0, lbfgs_seconds = 0;
    std::vector<DivergenceEvent> divergences;
    std::vector<LineSearchRecord> line_search_log;
    std::optional<LossWeights> weight_proposal;
    bool diverged = false;

    bool complete(int adam_epochs, int lbfgs_epochs) const {
        return !diverged &&
               history.size() == static_cast<size_t>(adam_epochs + lbfgs_epochs) + 1;
    }
};

enum class SourceInit { Fixed, Midpoint, RandomInterior };

struct TrainConfig {
    LossWeights weights;
    int adam_epochs = 1000;
    int lbfgs_epochs = 500;
    AdamParams adam;
    LbfgsParams lbfgs;
    int n_collocation = 2000;
    int n_boundary = 500;
    uint64_t collocation_seed = 7771;
    uint64_t source_init_seed = 4242;
    SourceInit source_init = SourceInit::Fixed;  // Fixed keeps the scenario's centers
    bool train_source = false;
    bool auto_weights = false;
};

// Owns the assembled loss graph for one (network, scenario, data) triple.
// The scenario must carry valid characteristic scales; all internal math runs
// in nondimensional variables and the trajectory is reported redimensioned.
class Trainer {
public:
    Trainer(net::NetworkState& state, const phys::Scenario& scenario,
            const ObservationSet* observations, const TrainConfig& cfg);
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    TrainReport run();

    LossBreakdown eval_initial();  // loss at the current parameters
    std::vector<std::pair<double, double>> source_estimate() const;  // physical units
    size_t parameter_count() const;

    // Central finite-difference audit of the full assembled loss gradient
    // (network weights and any trainable source parameters). The default step
    // balances truncation against cancellation for weighted losses up to ~1e3.
    ad::FdCheckReport finite_diff_check(double step = 3e-5) const;

    // Directional central-difference audit: compares g.u against
    // (f(w+hu) - f(w-hu))/2h over random unit directions. Stays conditioned
    // for heavily weighted losses where per-coordinate differences drown in
    // cancellation noise.
    double directional_fd_check(int n_directions, double step, uint64_t seed) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

TrainReport train(net::NetworkState& state, const phys::Scenario& scenario,
                  const ObservationSet* observations, const TrainConfig& cfg);

// Spec-shaped single-term evaluators over nondimensional inputs; these build
// a fresh graph per call and exist for tests and diagnostics. `star` is a
// nondimensionalized scenario (k field = 1/Pe).
double pde_loss(const net::NetworkState& state, const CollocationSet& colloc_star,
                const phys::Scenario& star);
double data_loss(const net::NetworkState& state, const ObservationSet& obs_star);
double bc_ic_loss(const net::NetworkState& state, const CollocationSet& colloc_star);
double fo_compat_loss(const net::NetworkState& state, const CollocationSet& colloc_star,
                      bool steady = false);

}  // namespace plume::train
