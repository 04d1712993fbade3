#pragma once

#include <string>
#include <vector>

#include "mixopt/types.hpp"

namespace mixopt::regret {

// |loss_t - f*| per iteration with running sums and averages.
struct RegretTrace {
    std::vector<double> per_step;
    std::vector<double> cumulative;
    std::vector<double> average;
    double f_star = 0.0;
};

RegretTrace compute_trace(const std::vector<Observation>& history, double f_star);

// A_{c,k} = c^2 (1 - e^{-c} - c/2)^{k-1} / (1 - e^{-c})^k for c in (0, 1].
double bound_constant(double c, std::size_t k);

// 6 (delta^{1/4} + sqrt(k)) / (delta^{1/4} k) + 2 A_{c,k}
//   + sqrt(2 A_{c,k}) / delta^{1/4}
double average_regret_bound(double c, std::size_t k, double delta);

// t,loss,per_step,cumulative,average rows for plotting
std::string trace_csv(const std::vector<Observation>& history, const RegretTrace& trace);

}  // namespace mixopt::regret
