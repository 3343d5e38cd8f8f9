#include "model_state.hpp"

#include <algorithm>
#include <numeric>

namespace dataiq::detail {

double RegressionTree::predict(const double* row) const
{
    int node = 0;
    while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(node)];
        node = row[n.feature] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const Vector& g, const Vector& h, const TreeParams& p)
        : x_(x), g_(g), h_(h), params_(p) {}

    RegressionTree run()
    {
        std::vector<Index> rows(static_cast<std::size_t>(x_.rows()));
        std::iota(rows.begin(), rows.end(), Index{0});
        build(rows, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        double gain = 1e-12;
        int feature = -1;
        double threshold = 0.0;
    };

    int build(const std::vector<Index>& rows, int depth)
    {
        double grad_sum = 0.0, hess_sum = 0.0;
        for (Index r : rows) {
            grad_sum += g_[r];
            hess_sum += h_[r];
        }
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({-1, 0.0, -1, -1, -grad_sum / (hess_sum + params_.l2)});
        if (depth >= params_.max_depth || rows.size() < 2) return id;

        const double parent_score = grad_sum * grad_sum / (hess_sum + params_.l2);
        Split best;
        std::vector<Index> order(rows);
        for (Index f = 0; f < x_.cols(); ++f) {
            std::sort(order.begin(), order.end(), [&](Index a, Index b) {
                const double xa = x_(a, f), xb = x_(b, f);
                return xa < xb || (xa == xb && a < b);
            });
            double gl = 0.0, hl = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                gl += g_[order[i]];
                hl += h_[order[i]];
                const double lo = x_(order[i], f), hi = x_(order[i + 1], f);
                if (lo == hi) continue;
                const double hr = hess_sum - hl;
                if (hl < params_.min_hessian || hr < params_.min_hessian) continue;
                const double gr = grad_sum - gl;
                const double gain = gl * gl / (hl + params_.l2) + gr * gr / (hr + params_.l2) - parent_score;
                if (gain > best.gain) {
                    double thr = lo + (hi - lo) / 2.0;
                    if (!(thr > lo)) thr = hi;
                    best = {gain, static_cast<int>(f), thr};
                }
            }
        }
        if (best.feature < 0) return id;

        std::vector<Index> left, right;
        for (Index r : rows) (x_(r, best.feature) < best.threshold ? left : right).push_back(r);
        const int l = build(left, depth + 1);
        const int rgt = build(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = rgt;
        return id;
    }

    const Matrix& x_;
    const Vector& g_;
    const Vector& h_;
    TreeParams params_;
    RegressionTree tree_;
};

} // namespace

RegressionTree fit_tree(const Matrix& x, const Vector& grad, const Vector& hess, const TreeParams& params)
{
    return TreeBuilder(x, grad, hess, params).run();
}

Matrix Ensemble::scores(const Matrix& x, Index n_rounds) const
{
    Matrix f = base.transpose().replicate(x.rows(), 1);
    for (Index r = 0; r < n_rounds; ++r) {
        const auto& trees = rounds[static_cast<std::size_t>(r)];
        for (std::size_t k = 0; k < trees.size(); ++k) {
            for (Index i = 0; i < x.rows(); ++i) f(i, static_cast<Index>(k)) += shrinkage * trees[k].predict(x.row(i).data());
        }
    }
    return f;
}

} // namespace dataiq::detail
