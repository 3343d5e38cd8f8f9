#include "dataiq/dynamics.hpp"

#include <cmath>

namespace dataiq {

void MetricsTable::validate() const
{
    const Index n = confidence.size();
    if (aleatoric.size() != n || epistemic.size() != n || labels.size() != n ||
        static_cast<Index>(example_ids.size()) != n)
        throw InvariantError("metrics table columns have different lengths");
    for (const auto* col : {&aum, &grand_norm}) {
        if (*col && (*col)->size() != n) throw InvariantError("metrics table columns have different lengths");
    }
    if (error_count && error_count->size() != n) throw InvariantError("metrics table columns have different lengths");
    if (correct && correct->size() != n) throw InvariantError("metrics table columns have different lengths");
    for (Index i = 0; i < n; ++i) {
        const double c = confidence[i];
        const double al = aleatoric[i];
        const double ep = epistemic[i];
        if (!(c >= 0.0 && c <= 1.0)) throw InvariantError("confidence outside [0,1] at row " + std::to_string(i));
        if (!(al >= 0.0 && al <= 0.25 + 1e-12) || !(ep >= 0.0 && ep <= 0.25 + 1e-12))
            throw InvariantError("uncertainty outside [0,0.25] at row " + std::to_string(i));
        if (std::abs(al + ep - c * (1.0 - c)) > 1e-9)
            throw InvariantError("v_al + v_ep != pbar(1-pbar) at row " + std::to_string(i));
    }
}

Vector trajectory(const DynamicsLog& log, Index row)
{
    Vector p(log.n_checkpoints());
    const int y = log.labels[row];
    for (Index e = 0; e < log.n_checkpoints(); ++e) p[e] = log.probs[static_cast<std::size_t>(e)](row, y);
    return p;
}

MetricsTable compute_metrics(const DynamicsLog& log)
{
    log.validate();
    const Index n = log.n_examples();
    const Index e_count = log.n_checkpoints();
    const Index k = log.n_classes();

    MetricsTable m;
    m.example_ids = log.example_ids;
    m.labels = log.labels;
    m.confidence.resize(n);
    m.aleatoric.resize(n);
    m.epistemic.resize(n);
    m.error_count.emplace(n);
    m.correct.emplace(n);
    if (log.logits) m.aum.emplace(n);

    Matrix rows(e_count, k);
    for (Index i = 0; i < n; ++i) {
        const int y = log.labels[i];
        for (Index e = 0; e < e_count; ++e) rows.row(e) = log.probs[static_cast<std::size_t>(e)].row(i);
        const auto d = decompose(rows.col(y));
        // Clamp rounding noise at the [0, 1/4] boundaries without touching the identity's scale.
        m.confidence[i] = d.confidence;
        m.aleatoric[i] = std::max(0.0, d.aleatoric);
        m.epistemic[i] = std::max(0.0, d.epistemic);
        (*m.error_count)[i] = error_count(rows, y);
        (*m.correct)[i] = argmax_lowest(rows.row(e_count - 1)) == y ? 1 : 0;
        if (log.logits) {
            for (Index e = 0; e < e_count; ++e) rows.row(e) = (*log.logits)[static_cast<std::size_t>(e)].row(i);
            (*m.aum)[i] = aum_score(rows, y);
        }
    }
    m.validate();
    return m;
}

} // namespace dataiq
