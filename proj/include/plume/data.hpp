#pragma once

#include <string>
#include <vector>

namespace plume {

struct Observation {
    double x = 0, y = 0, t = 0;
    double c = 0;
};

enum class Provenance { Synthetic, Ingested };

struct ObservationSet {
    std::vector<Observation> samples;
    Provenance provenance = Provenance::Synthetic;

    size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double max_abs_concentration() const {
        double m = 0;
        for (const Observation& o : samples) m = std::max(m, o.c < 0 ? -o.c : o.c);
        return m;
    }
};

}  // namespace plume
