#include "dataiq/stratify.hpp"

namespace dataiq {

std::vector<Index> GroupAssignment::members(Group g) const
{
    std::vector<Index> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] == g) out.push_back(static_cast<Index>(i));
    }
    return out;
}

GroupAssignment assign_groups(const Vector& confidence, const Vector& aleatoric, const StratifyOptions& opts)
{
    if (!(opts.c_low >= 0.0 && opts.c_low < opts.c_up && opts.c_up <= 1.0))
        throw ValidationError("confidence thresholds must satisfy 0 <= c_low < c_up <= 1");
    if (confidence.size() != aleatoric.size()) throw ValidationError("confidence and aleatoric columns differ in length");
    GroupAssignment g;
    g.c_up = opts.c_up;
    g.c_low = opts.c_low;
    g.aleatoric_percentile = opts.aleatoric_percentile;
    g.aleatoric_cutoff = percentile(aleatoric, opts.aleatoric_percentile);
    g.groups.resize(static_cast<std::size_t>(confidence.size()));
    for (Index i = 0; i < confidence.size(); ++i) {
        const bool certain = aleatoric[i] < g.aleatoric_cutoff;
        Group label = Group::Ambiguous;
        if (certain && confidence[i] >= opts.c_up) label = Group::Easy;
        else if (certain && confidence[i] <= opts.c_low) label = Group::Hard;
        g.groups[static_cast<std::size_t>(i)] = label;
    }
    return g;
}

GroupAssignment assign_groups(const MetricsTable& m, const StratifyOptions& opts)
{
    return assign_groups(m.confidence, m.aleatoric, opts);
}

Index knee_index(const std::vector<double>& ambiguous, int window, double epsilon)
{
    if (window < 2) throw ValidationError("plateau window must be at least 2");
    const auto n = static_cast<Index>(ambiguous.size());
    if (n == 0) return -1;
    // change[i] is the step into grid point i; the first point has no predecessor.
    Index last_rise = -1;
    for (Index i = 1; i < n; ++i) {
        if (std::abs(ambiguous[static_cast<std::size_t>(i)] - ambiguous[static_cast<std::size_t>(i - 1)]) >= epsilon)
            last_rise = i;
    }
    if (last_rise < 0) return 0;
    const Index start = last_rise + 1;
    if (start + window - 1 >= n) return -1;
    return start;
}

ThresholdSweep select_threshold(const MetricsTable& m, const SweepOptions& opts)
{
    if (!(opts.grid_step > 0.0 && opts.grid_step < 0.5)) throw ValidationError("grid step must lie in (0, 0.5)");
    if (opts.window < 2) throw ValidationError("plateau window must be at least 2");
    ThresholdSweep sweep;
    const auto steps = static_cast<Index>(std::floor(0.5 / opts.grid_step + 1e-9));
    const double cutoff = percentile(m.aleatoric, opts.aleatoric_percentile);
    const auto n = static_cast<double>(m.size());
    std::vector<double> ambiguous;
    for (Index s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) * opts.grid_step;
        sweep.grid.push_back(t);
        Index easy = 0, hard = 0;
        for (Index i = 0; i < m.size(); ++i) {
            if (!(m.aleatoric[i] < cutoff)) continue;
            if (m.confidence[i] >= 1.0 - t) ++easy;
            else if (m.confidence[i] <= t) ++hard;
        }
        const double pe = static_cast<double>(easy) / n;
        const double ph = static_cast<double>(hard) / n;
        const double pa = static_cast<double>(m.size() - easy - hard) / n;
        sweep.proportions.push_back({pe, pa, ph});
        ambiguous.push_back(pa);
    }
    const Index knee = knee_index(ambiguous, opts.window, opts.epsilon);
    if (knee >= 0) {
        sweep.selected = sweep.grid[static_cast<std::size_t>(knee)];
        sweep.plateau_found = true;
    } else {
        sweep.selected = 0.25;
        sweep.warnings.push_back("no trailing plateau in the ambiguous-proportion sweep; using threshold 0.25");
    }
    return sweep;
}

double group_overlap(const GroupAssignment& a, const GroupAssignment& b)
{
    if (a.groups.size() != b.groups.size()) throw ValidationError("group assignments differ in length");
    if (a.groups.empty()) throw ValidationError("group assignments are empty");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.groups.size(); ++i) agree += a.groups[i] == b.groups[i];
    return static_cast<double>(agree) / static_cast<double>(a.groups.size());
}

} // namespace dataiq
