#pragma once
#include "dataiq/dynamics.hpp"
#include "dataiq/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace dataiq {

/// Linear-interpolation percentile with inclusive endpoints: sort ascending,
/// r = q/100 (n-1), interpolate between the floor(r) and ceil(r) order statistics.
template <class Derived>
double percentile(const Eigen::DenseBase<Derived>& values, double q)
{
    if (values.size() == 0) throw ValidationError("percentile of an empty sequence");
    if (!(q >= 0.0 && q <= 100.0)) throw ValidationError("percentile rank must lie in [0,100]");
    std::vector<double> sorted(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < values.size(); ++i) sorted[static_cast<std::size_t>(i)] = static_cast<double>(values(i));
    std::sort(sorted.begin(), sorted.end());
    const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    if (lo == hi) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline constexpr double kDefaultConfidenceUpper = 0.75;
inline constexpr double kDefaultConfidenceLower = 0.25;
inline constexpr double kDefaultAleatoricPercentile = 50.0;

struct GroupAssignment {
    std::vector<Group> groups;
    double c_up = kDefaultConfidenceUpper;
    double c_low = kDefaultConfidenceLower;
    double aleatoric_cutoff = 0.0;
    double aleatoric_percentile = kDefaultAleatoricPercentile;

    Index size() const noexcept { return static_cast<Index>(groups.size()); }
    /// Indices whose label equals `g`, ascending.
    std::vector<Index> members(Group g) const;
};

struct StratifyOptions {
    double c_up = kDefaultConfidenceUpper;
    double c_low = kDefaultConfidenceLower;
    double aleatoric_percentile = kDefaultAleatoricPercentile;
};

/**
 * Easy      if pbar >= c_up  and v_al < cutoff
 * Hard      if pbar <= c_low and v_al < cutoff
 * Ambiguous otherwise
 *
 * where cutoff is the `aleatoric_percentile`-th percentile of the v_al column.
 */
GroupAssignment assign_groups(const Vector& confidence, const Vector& aleatoric, const StratifyOptions& opts = {});
GroupAssignment assign_groups(const MetricsTable& m, const StratifyOptions& opts = {});

struct ThresholdSweep {
    std::vector<double> grid;
    // (easy, ambiguous, hard) fractions per grid point.
    std::vector<std::array<double, 3>> proportions;
    double selected = 0.25;
    bool plateau_found = false;
    std::vector<std::string> warnings;
};

struct SweepOptions {
    double grid_step = 0.01;
    int window = 3;
    double epsilon = 0.005;
    double aleatoric_percentile = kDefaultAleatoricPercentile;
};

/// Sweeps t over {0, step, ..., 0.5} with c_up = 1 - t and c_low = t and
/// picks the first point of the trailing plateau of the Ambiguous proportion.
ThresholdSweep select_threshold(const MetricsTable& m, const SweepOptions& opts = {});

/// The plateau rule on its own. Returns the selected grid index, or -1 when no
/// trailing plateau of at least `window` stable steps exists.
Index knee_index(const std::vector<double>& ambiguous, int window, double epsilon);

/// Fraction of examples whose labels agree.
double group_overlap(const GroupAssignment& a, const GroupAssignment& b);

} // namespace dataiq
