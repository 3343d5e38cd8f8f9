#include "dataiq/inference.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dataiq {

std::string_view to_string(EmbedKind k)
{
    switch (k) {
    case EmbedKind::standardize: return "standardize";
    case EmbedKind::pca: return "pca";
    case EmbedKind::identity: return "identity";
    }
    return "standardize";
}

EmbedKind embed_kind_from_string(std::string_view s)
{
    if (s == "standardize") return EmbedKind::standardize;
    if (s == "pca") return EmbedKind::pca;
    if (s == "identity") return EmbedKind::identity;
    throw ValidationError("unknown embedding kind '" + std::string(s) + "'");
}

std::string_view to_string(TestGroup g)
{
    return g == TestGroup::Ambiguous ? "Ambiguous" : "Other";
}

Index Embedder::output_dim() const noexcept
{
    if (kind == EmbedKind::pca) return components.rows();
    return static_cast<Index>(kept.size());
}

Matrix Embedder::input_loadings() const
{
    Matrix out = Matrix::Zero(components.rows(), n_inputs);
    for (std::size_t j = 0; j < kept.size(); ++j) out.col(kept[j]) = components.col(static_cast<Index>(j));
    return out;
}

Matrix Embedder::transform(const Matrix& x) const
{
    if (x.cols() != n_inputs)
        throw ValidationError("embedder expects " + std::to_string(n_inputs) + " features, got " +
                              std::to_string(x.cols()));
    if (!x.allFinite()) throw ValidationError("non-finite feature value in embedding input");
    if (kind == EmbedKind::identity) return x;
    Matrix z(x.rows(), static_cast<Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const auto c = static_cast<Index>(j);
        z.col(c) = (x.col(kept[j]).array() - mean[c]) / scale[c];
    }
    if (kind == EmbedKind::standardize) return z;
    return z * components.transpose();
}

Embedder identity_embedder(Index dim)
{
    if (dim < 1) throw ValidationError("embedding dimension must be positive");
    Embedder e;
    e.kind = EmbedKind::identity;
    e.n_inputs = dim;
    e.kept.resize(static_cast<std::size_t>(dim));
    std::iota(e.kept.begin(), e.kept.end(), Index{0});
    return e;
}

Embedder fit_embedder(const Matrix& features, EmbedKind kind, Index n_components)
{
    const Index n = features.rows();
    if (n < 2) throw ValidationError("embedding needs at least 2 rows");
    if (!features.allFinite()) throw ValidationError("non-finite feature value in embedding input");
    if (kind == EmbedKind::identity) return identity_embedder(features.cols());

    Embedder e;
    e.kind = kind;
    e.n_inputs = features.cols();
    std::vector<double> means, scales;
    for (Index j = 0; j < features.cols(); ++j) {
        const double mu = features.col(j).mean();
        const double sd = std::sqrt((features.col(j).array() - mu).square().mean());
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
            e.warnings.push_back("dropped constant feature " + std::to_string(j));
            continue;
        }
        e.kept.push_back(j);
        means.push_back(mu);
        scales.push_back(sd);
    }
    if (e.kept.empty()) throw ValidationError("every feature is constant; nothing to embed");
    e.mean = Eigen::Map<const Vector>(means.data(), static_cast<Index>(means.size()));
    e.scale = Eigen::Map<const Vector>(scales.data(), static_cast<Index>(scales.size()));
    if (kind == EmbedKind::standardize) return e;

    const auto p = static_cast<Index>(e.kept.size());
    if (n_components < 1 || n_components > std::min(n, p))
        throw ValidationError("pca components must lie in [1, " + std::to_string(std::min(n, p)) + "]");

    Matrix z(n, p);
    for (Index c = 0; c < p; ++c) z.col(c) = (features.col(e.kept[static_cast<std::size_t>(c)]).array() - e.mean[c]) / e.scale[c];
    const Matrix cov = (z.transpose() * z) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");

    const Vector values = eig.eigenvalues().cwiseMax(0.0);
    const double total = values.sum();
    e.components.resize(n_components, p);
    e.explained_variance_ratio.resize(n_components);
    for (Index k = 0; k < n_components; ++k) {
        const Index src = p - 1 - k;
        Vector v = eig.eigenvectors().col(src);
        Index big = 0;
        v.cwiseAbs().maxCoeff(&big);
        if (v[big] < 0) v = -v;
        e.components.row(k) = v.transpose();
        e.explained_variance_ratio[k] = values[src] / total;
    }
    return e;
}

void GroupIndex::validate() const
{
    if (static_cast<Index>(is_ambiguous.size()) != points.rows())
        throw InvariantError("index flags do not match the number of points");
    if (k_nn < 1 || k_nn > points.rows())
        throw ValidationError("k_nn must lie in [1, " + std::to_string(points.rows()) + "]");
}

GroupIndex build_index(const Embedder& emb, const Matrix& train_features, const GroupAssignment& groups, int k_nn)
{
    if (groups.size() != train_features.rows())
        throw ValidationError("group assignment length differs from the number of training rows");
    GroupIndex idx;
    idx.embedder = emb;
    idx.points = emb.transform(train_features);
    idx.k_nn = k_nn;
    idx.is_ambiguous.reserve(groups.groups.size());
    for (Group g : groups.groups) idx.is_ambiguous.push_back(g == Group::Ambiguous);
    idx.validate();
    return idx;
}

namespace {

TestGroup vote(const GroupIndex& idx, const Eigen::Ref<const Eigen::RowVectorXd>& h)
{
    const Vector dist = (idx.points.rowwise() - h).rowwise().squaredNorm();
    std::vector<Index> order(static_cast<std::size_t>(idx.size()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto k = static_cast<std::ptrdiff_t>(idx.k_nn);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    });
    int amb = 0;
    for (std::ptrdiff_t i = 0; i < k; ++i) amb += idx.is_ambiguous[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    return 2 * amb > idx.k_nn ? TestGroup::Ambiguous : TestGroup::Other;
}

} // namespace

TestGroup assign_test_group(const GroupIndex& idx, const Vector& x)
{
    const Matrix h = idx.embedder.transform(x.transpose());
    return vote(idx, h.row(0));
}

std::vector<TestGroup> assign_test_groups(const GroupIndex& idx, const Matrix& x)
{
    const Matrix h = idx.embedder.transform(x);
    std::vector<TestGroup> out;
    out.reserve(static_cast<std::size_t>(h.rows()));
    for (Index i = 0; i < h.rows(); ++i) out.push_back(vote(idx, h.row(i)));
    return out;
}

} // namespace dataiq
