#pragma once
#include "dataiq/data.hpp"
#include "dataiq/types.hpp"

#include <optional>
#include <vector>

namespace dataiq {

template <class Scalar>
struct Decomposition {
    Scalar confidence;  // mean true-class probability over checkpoints
    Scalar aleatoric;   // mean of p(1-p)
    Scalar epistemic;   // population variance of p
};

/**
 * Splits the variance of the "prediction is correct" indicator over a
 * trajectory of true-class probabilities p_1..p_E into its epistemic and
 * aleatoric parts:
 *
 *      v_ep = 1/E sum (p_e - pbar)^2,     v_al = 1/E sum p_e (1 - p_e)
 *
 * and v_al + v_ep = pbar (1 - pbar) exactly up to rounding. Summation is in
 * checkpoint order, so the result does not depend on how callers schedule rows.
 */
template <class Derived>
Decomposition<typename Derived::Scalar> decompose(const Eigen::DenseBase<Derived>& p)
{
    using Scalar = typename Derived::Scalar;
    const auto e = static_cast<Scalar>(p.size());
    const Scalar mean = p.sum() / e;
    const Scalar epistemic = (p.derived().array() - mean).square().sum() / e;
    const Scalar aleatoric = (p.derived().array() * (Scalar(1) - p.derived().array())).sum() / e;
    return {mean, aleatoric, epistemic};
}

/// Area under the margin: mean over checkpoints (rows of `logits`, E x K) of
/// z_y - max_{i != y} z_i.
template <class Derived>
typename Derived::Scalar aum_score(const Eigen::MatrixBase<Derived>& logits, int y)
{
    using Scalar = typename Derived::Scalar;
    const Index k = logits.cols();
    if (k < 2) throw ValidationError("AUM needs at least 2 classes");
    if (y < 0 || y >= k) throw ValidationError("AUM label out of range");
    if (logits.rows() < 1) throw ValidationError("AUM needs logits for at least one checkpoint");
    Scalar total = 0;
    for (Index e = 0; e < logits.rows(); ++e) {
        Scalar other = -std::numeric_limits<Scalar>::infinity();
        for (Index i = 0; i < k; ++i) {
            if (i != y) other = std::max(other, logits(e, i));
        }
        total += logits(e, y) - other;
    }
    return total / static_cast<Scalar>(logits.rows());
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
Index argmax_lowest(const Eigen::DenseBase<Derived>& row)
{
    Index best = 0;
    for (Index i = 1; i < row.size(); ++i) {
        if (row(i) > row(best)) best = i;
    }
    return best;
}

/// Number of checkpoints (rows of `probs`, E x K) whose argmax differs from y.
template <class Derived>
int error_count(const Eigen::MatrixBase<Derived>& probs, int y)
{
    int errors = 0;
    for (Index e = 0; e < probs.rows(); ++e) {
        if (argmax_lowest(probs.row(e)) != y) ++errors;
    }
    return errors;
}

/// Per-example training-dynamics metrics. Rows follow the producing log.
struct MetricsTable {
    std::vector<Index> example_ids;
    IntVector labels;
    Vector confidence;
    Vector aleatoric;
    Vector epistemic;
    std::optional<Vector> aum;
    std::optional<Vector> grand_norm;
    std::optional<IntVector> error_count;
    // 1 when the last checkpoint predicts the true class.
    std::optional<IntVector> correct;

    Index size() const noexcept { return confidence.size(); }

    /// Checks shapes, bounds and the per-row identity v_al + v_ep = pbar(1 - pbar).
    void validate() const;
};

MetricsTable compute_metrics(const DynamicsLog& log);

/// Per-example (p_e) trajectory of example `row` in `log`.
Vector trajectory(const DynamicsLog& log, Index row);

} // namespace dataiq
