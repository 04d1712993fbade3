#include "mixopt/truncexp.hpp"

#include <algorithm>
#include <cmath>

#include "mixopt/error.hpp"
#include "mixopt/rng.hpp"

namespace mixopt::truncexp {

void TruncExpParams::validate() const {
    if (!std::isfinite(rate) || rate <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "truncated-exponential rate must be positive");
    }
    if (!std::isfinite(cutoff) || cutoff <= 0.0) {
        throw Error(ErrorKind::ConfigInvalid, "truncated-exponential cutoff must be positive");
    }
    if (k < 1) {
        throw Error(ErrorKind::ConfigInvalid, "draw count must be at least one");
    }
}

double inverse_cdf(double u, double rate, double cutoff) {
    TruncExpParams{rate, cutoff, 1}.validate();
    if (!std::isfinite(u) || u < 0.0 || u > 1.0) {
        throw Error(ErrorKind::DomainError, "quantile argument must lie in [0, 1]");
    }
    const double mass = 1.0 - std::exp(-rate * cutoff);
    const double x = -std::log1p(-u * mass) / rate;
    return std::clamp(x, 0.0, cutoff);
}

double order_stat_pdf(double u, const TruncExpParams& p) {
    p.validate();
    if (!(u >= 0.0 && u <= p.cutoff)) {
        return 0.0;
    }
    const double mass = 1.0 - std::exp(-p.rate * p.cutoff);
    const double eu = std::exp(-p.rate * u);
    const double ec = std::exp(-p.rate * p.cutoff);
    const double head = p.rate * static_cast<double>(p.k) * eu / mass;
    const double tail = std::pow((eu - ec) / mass, static_cast<double>(p.k - 1));
    return head * tail;
}

double order_stat_cdf(double u, const TruncExpParams& p) {
    p.validate();
    if (!(u > 0.0)) {
        return 0.0;
    }
    if (u >= p.cutoff) {
        return 1.0;
    }
    const double mass = 1.0 - std::exp(-p.rate * p.cutoff);
    const double single = -std::expm1(-p.rate * u) / mass;
    return 1.0 - std::pow(1.0 - single, static_cast<double>(p.k));
}

double order_stat_quantile(double q, const TruncExpParams& p) {
    p.validate();
    if (!std::isfinite(q) || q < 0.0 || q > 1.0) {
        throw Error(ErrorKind::DomainError, "quantile argument must lie in [0, 1]");
    }
    double lo = 0.0;
    double hi = p.cutoff;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (order_stat_cdf(mid, p) < q) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double sample_order_stat(const TruncExpParams& p, std::uint64_t rng_seed) {
    p.validate();
    rng::Stream stream(rng_seed);
    double best = p.cutoff;
    for (std::size_t i = 0; i < p.k; ++i) {
        best = std::min(best, inverse_cdf(stream.uniform(), p.rate, p.cutoff));
    }
    return best;
}

}  // namespace mixopt::truncexp
