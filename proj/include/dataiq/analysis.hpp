#pragma once
#include "dataiq/stratify.hpp"
#include "dataiq/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace dataiq {

/// 1-based ranks with tied values sharing the average of their positions.
template <class Derived>
Vector average_ranks(const Eigen::DenseBase<Derived>& values)
{
    const Index n = values.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
    Vector ranks(n);
    for (Index i = 0; i < n;) {
        Index j = i;
        while (j + 1 < n && values(order[static_cast<std::size_t>(j + 1)]) == values(order[static_cast<std::size_t>(i)])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index t = i; t <= j; ++t) ranks[order[static_cast<std::size_t>(t)]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Pearson correlation; throws NumericError when either side is constant.
template <class DerivedA, class DerivedB>
double pearson(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b)
{
    if (a.size() != b.size()) throw ValidationError("correlation inputs differ in length");
    if (a.size() < 2) throw ValidationError("correlation needs at least 2 observations");
    const Vector x = a.derived().template cast<double>();
    const Vector y = b.derived().template cast<double>();
    const Vector dx = x.array() - x.mean();
    const Vector dy = y.array() - y.mean();
    const double sxx = dx.squaredNorm();
    const double syy = dy.squaredNorm();
    if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation is undefined for a constant input");
    return std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation: Pearson correlation of average-tie ranks.
template <class DerivedA, class DerivedB>
double spearman(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b)
{
    if (a.size() != b.size() || a.size() == 0) throw ValidationError("spearman inputs must be non-empty and equal length");
    return pearson(average_ranks(a), average_ranks(b));
}

struct RobustnessSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation over unordered pairs
    Matrix matrix;        // M x M, unit diagonal
};

RobustnessSummary robustness_matrix(const std::vector<Vector>& columns);

/// (easy, ambiguous, hard) fractions.
std::array<double, 3> subgroup_proportions(const GroupAssignment& g);

struct RankedDataset {
    std::string name;
    double easy_fraction = 0.0;
    int rank = 0;  // 1 = most Easy examples
};

/// Descending by Easy fraction; equal fractions ordered by name.
std::vector<RankedDataset> rank_datasets(const std::vector<std::pair<std::string, double>>& entries);

// ---------------------------------------------------------------------------
// Clustering

inline constexpr double kVarianceFloor = 1e-6;

struct GaussianMixture {
    Vector weights;      // k
    Matrix means;        // k x p
    Matrix variances;    // k x p, diagonal covariances
    double log_likelihood = 0.0;
    std::vector<double> log_likelihood_trace;  // one entry per EM iteration
    int iterations = 0;

    Index n_components() const noexcept { return weights.size(); }
    /// n x k posterior component probabilities.
    Matrix responsibilities(const Matrix& points) const;
    IntVector predict(const Matrix& points) const;
};

struct GmmOptions {
    int max_iter = 200;
    double tol = 1e-6;
};

/// EM for a diagonal-covariance mixture with k-means++-style seeding.
GaussianMixture fit_gmm(const Matrix& points, int k, std::uint64_t seed, const GmmOptions& opts = {});

/// Mean silhouette (b - a) / max(a, b) over all points; singleton-cluster points score 0.
double silhouette(const Matrix& points, const IntVector& labels);

/// Davies-Bouldin index; NumericError if two centroids coincide (distance < 1e-12).
double davies_bouldin(const Matrix& points, const IntVector& labels);

struct ClusteringResult {
    int best_k = 0;
    IntVector labels;
    double silhouette = 0.0;
    std::optional<double> davies_bouldin;  // unset when centroids are degenerate
    bool weak = false;                     // silhouette < 0.3
};

/// Fits a GMM for every k in [k_min, k_max] and keeps the highest silhouette (smallest k on ties).
ClusteringResult cluster_points(const Matrix& points, int k_min, int k_max, std::uint64_t seed);

struct SubgroupClustering {
    Group group = Group::Easy;
    std::vector<Index> members;
    ClusteringResult result;
};

struct SubgroupClusteringReport {
    std::vector<SubgroupClustering> subgroups;
    std::vector<std::string> warnings;
};

SubgroupClusteringReport cluster_subgroups(const Matrix& features, const GroupAssignment& groups, int k_min,
                                           int k_max, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Deferral

struct DeferralCurve {
    std::vector<double> thresholds;
    std::vector<double> accuracy;
    std::vector<Index> kept;
};

std::vector<double> default_deferral_grid();

/// For each tau keeps the ceil(tau |subset|) least uncertain subset members
/// (ties by lower index) and reports their accuracy.
DeferralCurve deferral_curve(const Vector& uncertainty, const IntVector& correct, const std::vector<Index>& subset,
                             const std::vector<double>& thresholds = default_deferral_grid());

} // namespace dataiq
