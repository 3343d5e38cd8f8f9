#include "dataiq/analysis.hpp"
#include "dataiq/rng.hpp"

#include <map>
#include <numbers>

namespace dataiq {

RobustnessSummary robustness_matrix(const std::vector<Vector>& columns)
{
    const auto m = static_cast<Index>(columns.size());
    if (m < 2) throw ValidationError("robustness needs at least 2 metric columns");
    for (const auto& c : columns) {
        if (c.size() != columns.front().size()) throw ValidationError("metric columns differ in length");
    }
    RobustnessSummary out;
    out.matrix = Matrix::Identity(m, m);
    std::vector<double> pairs;
    for (Index i = 0; i < m; ++i) {
        for (Index j = i + 1; j < m; ++j) {
            const double rho = spearman(columns[static_cast<std::size_t>(i)], columns[static_cast<std::size_t>(j)]);
            out.matrix(i, j) = out.matrix(j, i) = rho;
            pairs.push_back(rho);
        }
    }
    const auto count = static_cast<double>(pairs.size());
    out.mean = std::accumulate(pairs.begin(), pairs.end(), 0.0) / count;
    double ss = 0.0;
    for (double r : pairs) ss += (r - out.mean) * (r - out.mean);
    out.stddev = std::sqrt(ss / count);
    return out;
}

std::array<double, 3> subgroup_proportions(const GroupAssignment& g)
{
    if (g.groups.empty()) throw ValidationError("empty group assignment");
    std::array<Index, 3> counts{0, 0, 0};
    for (Group x : g.groups) ++counts[static_cast<std::size_t>(x)];
    const auto n = static_cast<double>(g.groups.size());
    // Hard takes the remainder so the triple sums to exactly 1.
    const double easy = static_cast<double>(counts[0]) / n;
    const double amb = static_cast<double>(counts[1]) / n;
    const double hard = counts[2] == 0 ? 0.0 : 1.0 - easy - amb;
    return {easy, amb, hard};
}

std::vector<RankedDataset> rank_datasets(const std::vector<std::pair<std::string, double>>& entries)
{
    if (entries.size() < 2) throw ValidationError("ranking needs at least 2 datasets");
    std::vector<RankedDataset> out;
    for (const auto& [name, easy] : entries) out.push_back({name, easy, 0});
    std::sort(out.begin(), out.end(), [](const RankedDataset& a, const RankedDataset& b) {
        if (a.easy_fraction != b.easy_fraction) return a.easy_fraction > b.easy_fraction;
        return a.name < b.name;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

namespace {

// n x k matrix of log(w_k) + log N(x_i | mu_k, diag var_k).
Matrix weighted_log_densities(const GaussianMixture& gm, const Matrix& x)
{
    const Index n = x.rows();
    const Index k = gm.n_components();
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    Matrix out(n, k);
    for (Index c = 0; c < k; ++c) {
        const auto var = gm.variances.row(c).array();
        const double log_norm = -0.5 * (var.log().sum() + static_cast<double>(x.cols()) * log_2pi);
        const double log_w = std::log(gm.weights[c]);
        for (Index i = 0; i < n; ++i) {
            const double maha = ((x.row(i) - gm.means.row(c)).array().square() / var).sum();
            out(i, c) = log_w + log_norm - 0.5 * maha;
        }
    }
    return out;
}

// Row-normalizes log densities in place into responsibilities; returns total log-likelihood.
double normalize_rows(Matrix& logd)
{
    double total = 0.0;
    for (Index i = 0; i < logd.rows(); ++i) {
        const double top = logd.row(i).maxCoeff();
        const double lse = top + std::log((logd.row(i).array() - top).exp().sum());
        logd.row(i) = (logd.row(i).array() - lse).exp();
        total += lse;
    }
    return total;
}

} // namespace

Matrix GaussianMixture::responsibilities(const Matrix& points) const
{
    Matrix r = weighted_log_densities(*this, points);
    normalize_rows(r);
    return r;
}

IntVector GaussianMixture::predict(const Matrix& points) const
{
    const Matrix logd = weighted_log_densities(*this, points);
    IntVector out(points.rows());
    for (Index i = 0; i < points.rows(); ++i) {
        Index best = 0;
        for (Index c = 1; c < logd.cols(); ++c) {
            if (logd(i, c) > logd(i, best)) best = c;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

GaussianMixture fit_gmm(const Matrix& points, int k, std::uint64_t seed, const GmmOptions& opts)
{
    const Index n = points.rows();
    const Index p = points.cols();
    if (k < 1) throw ValidationError("GMM needs at least one component");
    if (n < k) throw ValidationError("GMM needs at least as many points as components");
    if (!points.allFinite()) throw ValidationError("GMM input contains non-finite values");

    Rng rng(seed);
    GaussianMixture gm;
    gm.weights = Vector::Constant(k, 1.0 / k);
    gm.means.resize(k, p);

    // k-means++ seeding.
    std::uniform_int_distribution<Index> first(0, n - 1);
    gm.means.row(0) = points.row(first(rng));
    Vector dist2 = (points.rowwise() - gm.means.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = dist2.sum();
        Index chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (chosen = 0; chosen < n - 1; ++chosen) {
                target -= dist2[chosen];
                if (target < 0.0) break;
            }
        } else {
            chosen = first(rng);
        }
        gm.means.row(c) = points.row(chosen);
        dist2 = dist2.cwiseMin((points.rowwise() - gm.means.row(c)).rowwise().squaredNorm());
    }
    const Eigen::RowVectorXd mean = points.colwise().mean();
    const Eigen::RowVectorXd global_var =
        ((points.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n)).cwiseMax(kVarianceFloor);
    gm.variances = global_var.replicate(k, 1);

    double previous = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iter; ++it) {
        Matrix resp = weighted_log_densities(gm, points);
        const double ll = normalize_rows(resp);
        gm.log_likelihood = ll;
        gm.log_likelihood_trace.push_back(ll);
        gm.iterations = it;
        if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood became non-finite");
        if (it > 0 && (ll - previous) / static_cast<double>(n) < opts.tol) break;
        previous = ll;

        // M-step
        const Vector nk = resp.colwise().sum().transpose();
        for (Index c = 0; c < k; ++c) {
            if (nk[c] < 1e-12) continue;  // empty component keeps its parameters
            gm.means.row(c) = (resp.col(c).transpose() * points) / nk[c];
            const Eigen::RowVectorXd var =
                (resp.col(c).transpose() * (points.rowwise() - gm.means.row(c)).array().square().matrix()) / nk[c];
            gm.variances.row(c) = var.cwiseMax(kVarianceFloor);
        }
        gm.weights = nk.cwiseMax(1e-12);
        gm.weights /= gm.weights.sum();
        gm.iterations = it + 1;
    }
    return gm;
}

// ---------------------------------------------------------------------------
// Cluster quality

namespace {

std::map<int, std::vector<Index>> clusters_of(const IntVector& labels)
{
    std::map<int, std::vector<Index>> out;
    for (Index i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
}

} // namespace

double silhouette(const Matrix& points, const IntVector& labels)
{
    if (points.rows() != labels.size()) throw ValidationError("silhouette: label count mismatch");
    const auto clusters = clusters_of(labels);
    if (clusters.size() < 2) throw ValidationError("silhouette needs at least 2 clusters");
    const Index n = points.rows();
    std::map<int, std::size_t> slot;
    for (const auto& [label, members] : clusters) slot.emplace(label, slot.size());

    double total = 0.0;
    std::vector<double> sums(clusters.size());
    for (Index i = 0; i < n; ++i) {
        std::fill(sums.begin(), sums.end(), 0.0);
        for (Index j = 0; j < n; ++j) {
            if (j != i) sums[slot[labels[j]]] += (points.row(i) - points.row(j)).norm();
        }
        const auto& own = clusters.at(labels[i]);
        if (own.size() == 1) continue;  // singleton scores 0
        const double a = sums[slot[labels[i]]] / static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            if (label != labels[i]) b = std::min(b, sums[slot[label]] / static_cast<double>(members.size()));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

double davies_bouldin(const Matrix& points, const IntVector& labels)
{
    if (points.rows() != labels.size()) throw ValidationError("davies_bouldin: label count mismatch");
    const auto clusters = clusters_of(labels);
    if (clusters.size() < 2) throw ValidationError("Davies-Bouldin needs at least 2 clusters");
    std::vector<Eigen::RowVectorXd> centroids;
    std::vector<double> scatter;
    for (const auto& [label, members] : clusters) {
        Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(points.cols());
        for (Index i : members) c += points.row(i);
        c /= static_cast<double>(members.size());
        double s = 0.0;
        for (Index i : members) s += (points.row(i) - c).norm();
        centroids.push_back(c);
        scatter.push_back(s / static_cast<double>(members.size()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < centroids.size(); ++j) {
            if (i == j) continue;
            const double d = (centroids[i] - centroids[j]).norm();
            if (d < 1e-12) throw NumericError("Davies-Bouldin is degenerate: two cluster centroids coincide");
            worst = std::max(worst, (scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    return total / static_cast<double>(centroids.size());
}

ClusteringResult cluster_points(const Matrix& points, int k_min, int k_max, std::uint64_t seed)
{
    if (k_min < 2 || k_max < k_min) throw ValidationError("cluster search needs 2 <= k_min <= k_max");
    const int upper = static_cast<int>(std::min<Index>(k_max, points.rows() - 1));
    ClusteringResult best;
    best.silhouette = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= upper; ++k) {
        const auto gm = fit_gmm(points, k, derive_seed(seed, static_cast<std::uint64_t>(k)));
        const IntVector labels = gm.predict(points);
        if (clusters_of(labels).size() < 2) continue;
        const double s = silhouette(points, labels);
        if (s > best.silhouette) {
            best.best_k = k;
            best.labels = labels;
            best.silhouette = s;
        }
    }
    if (best.best_k == 0) throw NumericError("no candidate k produced at least 2 non-empty clusters");
    try {
        best.davies_bouldin = davies_bouldin(points, best.labels);
    } catch (const NumericError&) {
        best.davies_bouldin.reset();
    }
    best.weak = best.silhouette < 0.3;
    return best;
}

SubgroupClusteringReport cluster_subgroups(const Matrix& features, const GroupAssignment& groups, int k_min,
                                           int k_max, std::uint64_t seed)
{
    if (features.rows() != groups.size()) throw ValidationError("features and groups differ in length");
    SubgroupClusteringReport report;
    for (Group g : {Group::Easy, Group::Ambiguous, Group::Hard}) {
        const auto members = groups.members(g);
        if (static_cast<Index>(members.size()) < 2 * static_cast<Index>(k_min)) {
            report.warnings.push_back(std::string(to_string(g)) + " subgroup has " + std::to_string(members.size()) +
                                      " examples; skipped clustering");
            continue;
        }
        Matrix sub(static_cast<Index>(members.size()), features.cols());
        for (std::size_t i = 0; i < members.size(); ++i) sub.row(static_cast<Index>(i)) = features.row(members[i]);
        SubgroupClustering entry;
        entry.group = g;
        entry.members = members;
        entry.result = cluster_points(sub, k_min, k_max, derive_seed(seed, static_cast<std::uint64_t>(g) + 100));
        report.subgroups.push_back(std::move(entry));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Deferral

std::vector<double> default_deferral_grid()
{
    std::vector<double> grid;
    for (int i = 1; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
    return grid;
}

DeferralCurve deferral_curve(const Vector& uncertainty, const IntVector& correct, const std::vector<Index>& subset,
                             const std::vector<double>& thresholds)
{
    if (subset.empty()) throw ValidationError("deferral subset is empty");
    if (uncertainty.size() != correct.size()) throw ValidationError("uncertainty and correctness differ in length");
    for (Index i : subset) {
        if (i < 0 || i >= uncertainty.size()) throw ValidationError("deferral subset index out of range");
        if (!std::isfinite(uncertainty[i])) throw ValidationError("deferral uncertainty must be finite");
    }
    std::vector<Index> order(subset);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return uncertainty[a] < uncertainty[b] || (uncertainty[a] == uncertainty[b] && a < b);
    });
    DeferralCurve curve;
    const auto n = static_cast<double>(order.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const double tau = thresholds[t];
        if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("deferral thresholds must lie in (0,1]");
        if (t > 0 && !(tau > thresholds[t - 1])) throw ValidationError("deferral thresholds must be increasing");
        // Guard against tau*n landing a hair above an integer.
        const auto keep = std::max<Index>(1, static_cast<Index>(std::ceil(tau * n - 1e-9)));
        Index hits = 0;
        for (Index i = 0; i < keep; ++i) hits += correct[order[static_cast<std::size_t>(i)]] != 0;
        curve.thresholds.push_back(tau);
        curve.accuracy.push_back(static_cast<double>(hits) / static_cast<double>(keep));
        curve.kept.push_back(keep);
    }
    return curve;
}

} // namespace dataiq
