#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qnoise {

enum class Spacing
{
    linear,
    // rho = sinh(u) with u uniform: linear within a linewidth of resonance,
    // logarithmic in |rho| far from it, symmetric about zero.
    log_symmetric,
};

inline const char* to_string(Spacing spacing)
{
    return spacing == Spacing::linear ? "linear" : "log-symmetric";
}

inline std::vector<double> make_grid(double min, double max, std::size_t count, Spacing spacing = Spacing::linear)
{
    detail::require(count >= 2, "grid count must be >= 2");
    detail::require(std::isfinite(min) && std::isfinite(max) && min < max, "grid requires min < max");
    std::vector<double> grid(count);
    const double last = static_cast<double>(count - 1);
    if (spacing == Spacing::linear) {
        for (std::size_t i = 0; i < count; ++i)
            grid[i] = min + (max - min) * static_cast<double>(i) / last;
    } else {
        const double u0 = std::asinh(min);
        const double u1 = std::asinh(max);
        for (std::size_t i = 0; i < count; ++i)
            grid[i] = std::sinh(u0 + (u1 - u0) * static_cast<double>(i) / last);
    }
    grid.front() = min;
    grid.back() = max;
    return grid;
}

inline std::vector<double> make_log_grid(double min, double max, std::size_t count)
{
    detail::require(min > 0.0, "log grid requires min > 0");
    auto exponents = make_grid(std::log10(min), std::log10(max), count);
    for (double& e : exponents)
        e = std::pow(10.0, e);
    exponents.front() = min;
    exponents.back() = max;
    return exponents;
}

// Bins around a strictly increasing grid: bin i spans the midpoints to its
// neighbours; the end bins extend half a spacing outward.
class FrequencyBins
{
public:
    explicit FrequencyBins(std::span<const double> centres) : centres_(centres.begin(), centres.end())
    {
        detail::require(centres_.size() >= 2, "binning requires at least two grid points");
        for (std::size_t i = 1; i < centres_.size(); ++i)
            detail::require(centres_[i] > centres_[i - 1], "grid must be strictly increasing");
        edges_.resize(centres_.size() + 1);
        for (std::size_t i = 1; i < centres_.size(); ++i)
            edges_[i] = 0.5 * (centres_[i - 1] + centres_[i]);
        edges_.front() = centres_.front() - 0.5 * (centres_[1] - centres_[0]);
        const std::size_t n = centres_.size();
        edges_.back() = centres_[n - 1] + 0.5 * (centres_[n - 1] - centres_[n - 2]);
    }

    std::size_t size() const { return centres_.size(); }
    double centre(std::size_t i) const { return centres_[i]; }
    double width(std::size_t i) const { return edges_[i + 1] - edges_[i]; }
    double lower_edge() const { return edges_.front(); }
    double upper_edge() const { return edges_.back(); }

    // Index of the half-open bin [lo, hi) containing x.
    std::size_t locate(double x) const
    {
        if (!(x >= edges_.front() && x < edges_.back()))
            throw DomainError(DomainFault::out_of_range,
                              "frequency " + std::to_string(x) + " lies outside the evaluation grid [" +
                                  std::to_string(edges_.front()) + ", " + std::to_string(edges_.back()) + ")");
        auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        return static_cast<std::size_t>(it - edges_.begin()) - 1;
    }

private:
    std::vector<double> centres_;
    std::vector<double> edges_;
};

} // namespace qnoise
