#include "model_state.hpp"

#include <cmath>

namespace dataiq::detail {

Matrix softmax_rows(const Matrix& logits)
{
    Matrix p(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - top).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Vector cross_entropy_rows(const Matrix& logits, const IntVector& labels)
{
    Vector out(logits.rows());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
        out[i] = lse - logits(i, labels[i]);
    }
    return out;
}

Network Network::build(const ModelSpec& spec, Index n_features, int n_classes, Rng* init_rng)
{
    Network net;
    net.n_classes = n_classes;
    std::vector<Index> widths{n_features};
    if (spec.kind == ModelKind::softmax_regression) {
        net.baseline_class = true;
        widths.push_back(n_classes - 1);
    } else {
        for (int h : spec.hidden_sizes) widths.push_back(h);
        widths.push_back(n_classes);
    }
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer{Matrix::Zero(widths[l + 1], widths[l]), Vector::Zero(widths[l + 1])};
        if (spec.kind == ModelKind::mlp && init_rng) {
            const double bound = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (Index r = 0; r < layer.weight.rows(); ++r)
                for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(*init_rng);
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

ForwardCache Network::forward(const Matrix& x) const
{
    ForwardCache cache;
    Matrix a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        Matrix z = a * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        cache.inputs.push_back(std::move(a));
        if (l + 1 < layers.size()) {
            a = z.cwiseMax(0.0);
        } else {
            a = z;
        }
        cache.preacts.push_back(std::move(z));
    }
    if (baseline_class) {
        cache.logits.resize(a.rows(), n_classes);
        cache.logits.col(0).setZero();
        cache.logits.rightCols(n_classes - 1) = a;
    } else {
        cache.logits = std::move(a);
    }
    return cache;
}

Matrix Network::logits(const Matrix& x) const
{
    return forward(x).logits;
}

std::vector<Layer> Network::backward(const ForwardCache& cache, const Matrix& probs, const IntVector& labels,
                                     const Vector& coef) const
{
    Matrix delta = probs;
    for (Index i = 0; i < delta.rows(); ++i) {
        delta(i, labels[i]) -= 1.0;
        delta.row(i) *= coef[i];
    }
    if (baseline_class) delta = Matrix(delta.rightCols(n_classes - 1));

    std::vector<Layer> grad(layers.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
        grad[l].weight = delta.transpose() * cache.inputs[l];
        grad[l].bias = delta.colwise().sum().transpose();
        if (l == 0) break;
        Matrix back = delta * layers[l].weight;
        const auto& z = cache.preacts[l - 1];
        delta = (z.array() > 0.0).select(back, 0.0);
    }
    return grad;
}

void Network::apply_update(const std::vector<Layer>& grad, double lr)
{
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight -= lr * grad[l].weight;
        layers[l].bias -= lr * grad[l].bias;
    }
}

Index Network::n_parameters() const
{
    Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

Vector Network::flatten(const std::vector<Layer>& layers)
{
    Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    Vector out(n);
    Index pos = 0;
    for (const auto& l : layers) {
        out.segment(pos, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
        pos += l.weight.size();
        out.segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    }
    return out;
}

Vector Network::flatten() const
{
    return flatten(layers);
}

Network Network::with_parameters(const Vector& params) const
{
    if (params.size() != n_parameters()) throw ValidationError("parameter vector has the wrong length");
    Network out = *this;
    Index pos = 0;
    for (auto& l : out.layers) {
        l.weight.reshaped<Eigen::RowMajor>() = params.segment(pos, l.weight.size());
        pos += l.weight.size();
        l.bias = params.segment(pos, l.bias.size());
        pos += l.bias.size();
    }
    return out;
}

bool Network::all_finite() const
{
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

} // namespace dataiq::detail
