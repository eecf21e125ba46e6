#pragma once

#include <cstddef>
#include <stdexcept>

namespace mmfbsde::core {

// Uniform time grid t_n = t0 + n·dt, n = 0..steps. dt is computed once.
struct HorizonGrid {
    double t0 = 0.0;
    double horizon = 0.0;  // T
    std::size_t steps = 0;
    double dt = 0.0;

    static HorizonGrid make(double t0, double horizon, std::size_t steps) {
        if (!(horizon > t0)) throw std::invalid_argument("grid: horizon must exceed t0");
        HorizonGrid g{t0, horizon, steps, 0.0};
        if (steps > 0) g.dt = (horizon - t0) / static_cast<double>(steps);
        return g;
    }

    double time(std::size_t n) const { return t0 + static_cast<double>(n) * dt; }
};

}  // namespace mmfbsde::core
