#pragma once
#include "dataiq/stratify.hpp"
#include "dataiq/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace dataiq {

// identity passes caller-supplied embeddings through unchanged.
enum class EmbedKind { standardize, pca, identity };

std::string_view to_string(EmbedKind k);
EmbedKind embed_kind_from_string(std::string_view s);

/// Feature map h: z-scores the non-constant input columns and, for pca,
/// projects them onto the leading principal directions.
struct Embedder {
    EmbedKind kind = EmbedKind::standardize;
    Index n_inputs = 0;
    std::vector<Index> kept;      // input columns that carry variance
    Vector mean;                  // over kept columns
    Vector scale;                 // population standard deviations, > 0
    Matrix components;            // pca: k x kept.size(), orthonormal rows
    Vector explained_variance_ratio;
    std::vector<std::string> warnings;

    Index output_dim() const noexcept;
    /// pca loadings expanded to all input columns (zeros on dropped ones).
    Matrix input_loadings() const;
    Matrix transform(const Matrix& x) const;
};

Embedder fit_embedder(const Matrix& features, EmbedKind kind, Index n_components = 2);
/// Pass-through embedder for points that are already embedded.
Embedder identity_embedder(Index dim);

enum class TestGroup { Ambiguous, Other };

std::string_view to_string(TestGroup g);

/// Embedded training points with their Ambiguous flags. Immutable after build.
struct GroupIndex {
    Embedder embedder;
    Matrix points;                  // N x output_dim
    std::vector<bool> is_ambiguous;
    int k_nn = 5;

    Index size() const noexcept { return points.rows(); }
    void validate() const;
};

GroupIndex build_index(const Embedder& emb, const Matrix& train_features, const GroupAssignment& groups, int k_nn = 5);

/// k_nn nearest training points (Euclidean in embedding space, ties by lower
/// index); Ambiguous only on a strict majority.
TestGroup assign_test_group(const GroupIndex& idx, const Vector& x);
std::vector<TestGroup> assign_test_groups(const GroupIndex& idx, const Matrix& x);

} // namespace dataiq
