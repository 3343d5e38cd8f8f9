#pragma once
#include "dataiq/data.hpp"
#include "dataiq/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dataiq {

enum class ModelKind { softmax_regression, mlp, gbdt };

std::string_view to_string(ModelKind k);
/// Accepts "logistic"/"softmax_regression", "mlp" and "gbdt".
ModelKind model_kind_from_string(std::string_view s);

struct ModelSpec {
    ModelKind kind = ModelKind::softmax_regression;
    std::vector<int> hidden_sizes;  // mlp only; ReLU activations
    int max_depth = 3;              // gbdt only
    int n_rounds = 50;              // gbdt only
    double shrinkage = 0.1;         // gbdt only

    void validate() const;
    std::string describe() const;

    static ModelSpec logistic() { return {}; }
    static ModelSpec mlp(std::vector<int> hidden) { return {ModelKind::mlp, std::move(hidden)}; }
    static ModelSpec gbdt(int rounds, int depth, double shrinkage)
    {
        return {ModelKind::gbdt, {}, depth, rounds, shrinkage};
    }
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int epochs = 20;
    double learning_rate = 0.1;
    int batch_size = 64;
    // Optimizer steps (boosting rounds for gbdt) between checkpoints; unset
    // means one checkpoint per epoch (per round for gbdt).
    std::optional<int> checkpoint_interval;
    // Checkpoints without validation log-loss improvement before stopping; 0 disables.
    int early_stopping_patience = 0;

    void validate() const;
};

namespace detail {
struct ModelState;
}

/// A staged predictor: one parameter snapshot per checkpoint. Immutable.
class TrainedModel {
public:
    TrainedModel(ModelSpec spec, std::shared_ptr<const detail::ModelState> state);

    const ModelSpec& spec() const noexcept { return spec_; }
    Index n_checkpoints() const noexcept;
    Index n_features() const noexcept;
    int n_classes() const noexcept;

    /// Class probabilities at checkpoint e (1-based) for each row of x.
    Matrix staged_predict(const Matrix& x, Index e) const;
    Vector staged_predict_row(const Vector& x, Index e) const;
    /// Raw scores (pre-softmax) at checkpoint e.
    Matrix staged_logits(const Matrix& x, Index e) const;
    /// Final model, i.e. checkpoint n_checkpoints().
    Matrix predict(const Matrix& x) const;
    IntVector predict_labels(const Matrix& x) const;

    /// Flattened parameters at checkpoint e (parametric models only).
    Vector parameters(Index e) const;
    /// Parametric models with explicit per-checkpoint parameter vectors.
    static TrainedModel from_parameters(const ModelSpec& spec, Index n_features, int n_classes,
                                        const std::vector<Vector>& checkpoints);
    /// Cross-entropy of one example under an arbitrary flattened parameter vector.
    double example_loss(const Vector& params, const Vector& x, int y) const;
    /// Gradient of the per-example cross-entropy wrt all parameters at checkpoint e.
    Vector example_gradient(const Vector& x, int y, Index e) const;

    const detail::ModelState& state() const { return *state_; }

private:
    void check_checkpoint(Index e) const;
    ModelSpec spec_;
    std::shared_ptr<const detail::ModelState> state_;
};

struct TrainRun {
    TrainedModel model;
    DynamicsLog dynamics;           // over the split's training rows
    std::vector<double> step_losses; // objective value of every optimizer step (boosting: training log-loss per round)
};

TrainRun train_with_checkpoints(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                const TrainConfig& cfg);

/// Weighted ERM: each training example's loss is scaled by its weight.
TrainRun train_weighted(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                        const Vector& train_weights);

/// Minimizes the largest per-group mean loss in every mini-batch; the
/// gradient flows only through the currently worst group. `groups` is aligned
/// with split.train_idx. Groups missing from a batch get one member resampled in.
TrainRun train_group_dro(const Dataset& ds, const DatasetSplit& split, const std::vector<int>& groups,
                         const ModelSpec& spec, const TrainConfig& cfg);

struct JttRun {
    TrainRun stage_one;
    TrainRun stage_two;
    std::vector<Index> error_set;  // dataset row indices misclassified after stage one
};

/// Just-train-twice: stage-one ERM errors are upweighted by `lambda_up` in stage two.
JttRun train_jtt(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                 double lambda_up);

/// Euclidean norm of the per-example loss gradient wrt all parameters at checkpoint e.
double grand_score(const TrainedModel& model, const Dataset& ds, Index example, Index e);

double accuracy(const TrainedModel& model, const Dataset& ds, const std::vector<Index>& rows);
double log_loss(const Matrix& probs, const IntVector& labels);

} // namespace dataiq
