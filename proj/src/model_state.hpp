#pragma once
#include "dataiq/rng.hpp"
#include "dataiq/trainers.hpp"

#include <vector>

namespace dataiq::detail {

Matrix softmax_rows(const Matrix& logits);
/// Per-row cross-entropy -log softmax(z)_y, computed through log-sum-exp.
Vector cross_entropy_rows(const Matrix& logits, const IntVector& labels);

// ---------------------------------------------------------------------------
// Feed-forward networks. Softmax regression is the zero-hidden-layer case with
// the class-0 logit pinned to zero (K-1 free weight rows).

struct Layer {
    Matrix weight;  // out x in
    Vector bias;
};

struct ForwardCache {
    std::vector<Matrix> inputs;       // input of each layer
    std::vector<Matrix> preacts;      // pre-activation of each layer
    Matrix logits;
};

struct Network {
    std::vector<Layer> layers;
    bool baseline_class = false;
    int n_classes = 0;

    static Network build(const ModelSpec& spec, Index n_features, int n_classes, Rng* init_rng);

    Matrix logits(const Matrix& x) const;
    ForwardCache forward(const Matrix& x) const;
    /// Gradient of sum_i coef_i * CE_i given a cache from forward().
    std::vector<Layer> backward(const ForwardCache& cache, const Matrix& probs, const IntVector& labels,
                                const Vector& coef) const;
    void apply_update(const std::vector<Layer>& grad, double lr);

    Index n_parameters() const;
    Vector flatten() const;
    static Vector flatten(const std::vector<Layer>& layers);
    Network with_parameters(const Vector& params) const;
    bool all_finite() const;
};

// ---------------------------------------------------------------------------
// Boosted trees

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;
    double predict(const double* row) const;
};

struct TreeParams {
    int max_depth = 3;
    double l2 = 1.0;
    double min_hessian = 1e-6;
};

/// Second-order regression tree on (gradient, hessian) pairs; leaves hold -G/(H + l2).
RegressionTree fit_tree(const Matrix& x, const Vector& grad, const Vector& hess, const TreeParams& params);

struct Ensemble {
    Vector base;                                    // initial score per class
    std::vector<std::vector<RegressionTree>> rounds; // rounds[r][k]
    double shrinkage = 0.1;

    /// Additive scores after the first `n_rounds` rounds.
    Matrix scores(const Matrix& x, Index n_rounds) const;
};

struct ModelState {
    Index n_features = 0;
    int n_classes = 0;
    std::vector<Network> snapshots;       // parametric kinds
    Ensemble ensemble;                    // gbdt
    std::vector<Index> checkpoint_rounds; // gbdt: rounds completed at each checkpoint
};

} // namespace dataiq::detail
