#include <cmath>
#include <stdexcept>
#include <string>

#include "flowlab/aug/transforms.hpp"

namespace flowlab::aug {

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t * M_SQRT1_2); }

}  // namespace

std::vector<double> sample_trunc_gaussian(double mu, double sigma, double b, std::size_t n,
                                          Rng& rng) {
    if (sigma <= 0.0) throw std::invalid_argument("trunc gaussian: sigma must be > 0");
    if (b <= 0.0) throw std::invalid_argument("trunc gaussian: bound must be > 0");

    const double accept = normal_cdf((b - mu) / sigma) - normal_cdf((-b - mu) / sigma);
    if (!(accept >= 1e-6))
        throw std::invalid_argument(
            "trunc gaussian: interval [-" + std::to_string(b) + ", " + std::to_string(b) +
            "] holds " + std::to_string(accept) + " of the mass; sampling would not terminate");

    std::vector<double> out;
    out.reserve(n);
    while (out.size() < n) {
        const double v = mu + sigma * rng.normal();
        if (v >= -b && v <= b) out.push_back(v);
    }
    return out;
}

double flip_weight(double m, double tr) { return m < tr ? 1.0 - m : m; }

}  // namespace flowlab::aug
