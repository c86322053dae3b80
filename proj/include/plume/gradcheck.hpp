#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace plume::gradcheck {

struct Entry {
    std::string name;
    double max_rel_dev = 0;
    bool pass = false;
};

struct Report {
    std::vector<Entry> entries;
    double max_rel_dev = 0;
    double tolerance = 1e-5;
    bool pass = true;
};

// Finite-difference audit of every graph primitive (randomized points, many
// seeds) plus `n_networks` full assembled losses spanning both head kinds,
// both block kinds, the sin input layer, nested second-derivative tangents,
// and trainable source coordinates.
Report run_gradcheck(uint64_t seed, int n_networks = 20, double tolerance = 1e-5);

std::string format_report(const Report& r);

}  // namespace plume::gradcheck
