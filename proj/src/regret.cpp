#include "mixopt/regret.hpp"

#include <cmath>
#include <sstream>

#include "mixopt/error.hpp"

namespace mixopt::regret {

RegretTrace compute_trace(const std::vector<Observation>& history, double f_star) {
    if (!std::isfinite(f_star)) {
        throw Error(ErrorKind::UnknownOptimum, "regret needs a finite true optimum");
    }
    if (history.empty()) {
        throw Error(ErrorKind::ConfigInvalid, "regret needs at least one observation");
    }
    RegretTrace trace;
    trace.f_star = f_star;
    trace.per_step.reserve(history.size());
    trace.cumulative.reserve(history.size());
    trace.average.reserve(history.size());
    double running = 0.0;
    for (std::size_t t = 0; t < history.size(); ++t) {
        const double step = std::abs(history[t].loss - f_star);
        running += step;
        trace.per_step.push_back(step);
        trace.cumulative.push_back(running);
        trace.average.push_back(running / static_cast<double>(t + 1));
    }
    return trace;
}

double bound_constant(double c, std::size_t k) {
    if (!std::isfinite(c) || c <= 0.0 || c > 1.0) {
        throw Error(ErrorKind::DomainError, "cutoff must lie in (0, 1]");
    }
    if (k < 1) {
        throw Error(ErrorKind::DomainError, "sampling size must be at least 1");
    }
    const double mass = -std::expm1(-c);  // 1 - e^{-c}
    const double mid = 1.0 - std::exp(-c) - 0.5 * c;
    return c * c * std::pow(mid, static_cast<double>(k - 1)) /
           std::pow(mass, static_cast<double>(k));
}

double average_regret_bound(double c, std::size_t k, double delta) {
    if (!std::isfinite(delta) || delta <= 0.0 || delta > 1.0) {
        throw Error(ErrorKind::DomainError, "delta must lie in (0, 1]");
    }
    const double a = bound_constant(c, k);
    const double quartic = std::pow(delta, 0.25);
    const double kd = static_cast<double>(k);
    return 6.0 * (quartic + std::sqrt(kd)) / (quartic * kd) + 2.0 * a +
           std::sqrt(2.0 * a) / quartic;
}

std::string trace_csv(const std::vector<Observation>& history, const RegretTrace& trace) {
    if (history.size() != trace.per_step.size()) {
        throw Error(ErrorKind::DimensionMismatch, "trace does not match the history length");
    }
    std::ostringstream out;
    out.precision(17);
    out << "t,loss,per_step,cumulative,average\n";
    for (std::size_t t = 0; t < history.size(); ++t) {
        out << history[t].iteration << "," << history[t].loss << "," << trace.per_step[t] << ","
            << trace.cumulative[t] << "," << trace.average[t] << "\n";
    }
    return out.str();
}

}  // namespace mixopt::regret
