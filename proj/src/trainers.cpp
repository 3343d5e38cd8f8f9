#include "dataiq/trainers.hpp"
#include "dataiq/dynamics.hpp"
#include "model_state.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dataiq {

using detail::Ensemble;
using detail::ModelState;
using detail::Network;

std::string_view to_string(ModelKind k)
{
    switch (k) {
        case ModelKind::softmax_regression: return "logistic";
        case ModelKind::mlp: return "mlp";
        case ModelKind::gbdt: return "gbdt";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view s)
{
    if (s == "logistic" || s == "softmax_regression") return ModelKind::softmax_regression;
    if (s == "mlp") return ModelKind::mlp;
    if (s == "gbdt") return ModelKind::gbdt;
    throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

void ModelSpec::validate() const
{
    switch (kind) {
        case ModelKind::softmax_regression: break;
        case ModelKind::mlp:
            if (hidden_sizes.empty()) throw ValidationError("mlp needs at least one hidden layer");
            for (int h : hidden_sizes) {
                if (h < 1) throw ValidationError("mlp hidden sizes must be positive");
            }
            break;
        case ModelKind::gbdt:
            if (n_rounds < 2) throw ValidationError("gbdt needs at least 2 rounds");
            if (max_depth < 1) throw ValidationError("gbdt max_depth must be at least 1");
            if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ValidationError("gbdt shrinkage must lie in [0,1]");
            break;
    }
}

std::string ModelSpec::describe() const
{
    std::ostringstream ss;
    ss << to_string(kind);
    if (kind == ModelKind::mlp) {
        ss << "[";
        for (std::size_t i = 0; i < hidden_sizes.size(); ++i) ss << (i ? "," : "") << hidden_sizes[i];
        ss << "]";
    } else if (kind == ModelKind::gbdt) {
        ss << "(rounds=" << n_rounds << ",depth=" << max_depth << ",shrinkage=" << shrinkage << ")";
    }
    return ss.str();
}

void TrainConfig::validate() const
{
    if (epochs < 2) throw ValidationError("epochs must be at least 2");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be positive");
    if (checkpoint_interval && *checkpoint_interval < 1) throw ValidationError("checkpoint interval must be at least 1");
    if (early_stopping_patience < 0) throw ValidationError("early stopping patience must be non-negative");
}

// ---------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(ModelSpec spec, std::shared_ptr<const ModelState> state)
    : spec_(std::move(spec)), state_(std::move(state))
{
}

Index TrainedModel::n_checkpoints() const noexcept
{
    return spec_.kind == ModelKind::gbdt ? static_cast<Index>(state_->checkpoint_rounds.size())
                                         : static_cast<Index>(state_->snapshots.size());
}

Index TrainedModel::n_features() const noexcept { return state_->n_features; }
int TrainedModel::n_classes() const noexcept { return state_->n_classes; }

void TrainedModel::check_checkpoint(Index e) const
{
    if (e < 1 || e > n_checkpoints())
        throw ValidationError("checkpoint " + std::to_string(e) + " out of range [1, " + std::to_string(n_checkpoints()) + "]");
}

Matrix TrainedModel::staged_logits(const Matrix& x, Index e) const
{
    check_checkpoint(e);
    if (x.cols() != n_features()) throw ValidationError("feature count mismatch");
    if (spec_.kind == ModelKind::gbdt)
        return state_->ensemble.scores(x, state_->checkpoint_rounds[static_cast<std::size_t>(e - 1)]);
    return state_->snapshots[static_cast<std::size_t>(e - 1)].logits(x);
}

Matrix TrainedModel::staged_predict(const Matrix& x, Index e) const
{
    return detail::softmax_rows(staged_logits(x, e));
}

Vector TrainedModel::staged_predict_row(const Vector& x, Index e) const
{
    Matrix row = x.transpose();
    return staged_predict(row, e).row(0).transpose();
}

Matrix TrainedModel::predict(const Matrix& x) const
{
    return staged_predict(x, n_checkpoints());
}

IntVector TrainedModel::predict_labels(const Matrix& x) const
{
    const Matrix p = predict(x);
    IntVector out(p.rows());
    for (Index i = 0; i < p.rows(); ++i) out[i] = static_cast<int>(argmax_lowest(p.row(i)));
    return out;
}

Vector TrainedModel::parameters(Index e) const
{
    if (spec_.kind == ModelKind::gbdt) throw ValidationError("gbdt models have no flat parameter vector");
    check_checkpoint(e);
    return state_->snapshots[static_cast<std::size_t>(e - 1)].flatten();
}

TrainedModel TrainedModel::from_parameters(const ModelSpec& spec, Index n_features, int n_classes,
                                           const std::vector<Vector>& checkpoints)
{
    spec.validate();
    if (spec.kind == ModelKind::gbdt) throw ValidationError("from_parameters supports parametric models only");
    if (checkpoints.empty()) throw ValidationError("need at least one checkpoint");
    auto state = std::make_shared<ModelState>();
    state->n_features = n_features;
    state->n_classes = n_classes;
    const Network shape = Network::build(spec, n_features, n_classes, nullptr);
    for (const auto& p : checkpoints) state->snapshots.push_back(shape.with_parameters(p));
    return TrainedModel(spec, std::move(state));
}

double TrainedModel::example_loss(const Vector& params, const Vector& x, int y) const
{
    if (spec_.kind == ModelKind::gbdt) throw ValidationError("gbdt models have no flat parameter vector");
    const Network net = state_->snapshots.front().with_parameters(params);
    Matrix row = x.transpose();
    IntVector label(1);
    label[0] = y;
    return detail::cross_entropy_rows(net.logits(row), label)[0];
}

Vector TrainedModel::example_gradient(const Vector& x, int y, Index e) const
{
    if (spec_.kind == ModelKind::gbdt) throw ValidationError("per-example gradients are undefined for gbdt models");
    check_checkpoint(e);
    if (x.size() != n_features()) throw ValidationError("feature count mismatch");
    if (y < 0 || y >= n_classes()) throw ValidationError("label out of range");
    const auto& net = state_->snapshots[static_cast<std::size_t>(e - 1)];
    Matrix row = x.transpose();
    const auto cache = net.forward(row);
    IntVector label(1);
    label[0] = y;
    const Vector coef = Vector::Ones(1);
    return Network::flatten(net.backward(cache, detail::softmax_rows(cache.logits), label, coef));
}

// ---------------------------------------------------------------------------
// Training

double log_loss(const Matrix& probs, const IntVector& labels)
{
    double total = 0.0;
    for (Index i = 0; i < probs.rows(); ++i) total -= std::log(std::max(probs(i, labels[i]), 1e-300));
    return total / static_cast<double>(std::max<Index>(probs.rows(), 1));
}

double accuracy(const TrainedModel& model, const Dataset& ds, const std::vector<Index>& rows)
{
    if (rows.empty()) throw ValidationError("accuracy over an empty row set");
    const Dataset sub = ds.subset(rows);
    const IntVector pred = model.predict_labels(sub.features);
    return static_cast<double>((pred.array() == sub.labels.array()).count()) / static_cast<double>(rows.size());
}

namespace {

struct TrainingData {
    Matrix x;
    IntVector y;
    Matrix x_val;
    IntVector y_val;
};

TrainingData gather(const Dataset& ds, const DatasetSplit& split)
{
    TrainingData d;
    const Dataset tr = ds.subset(split.train_idx);
    d.x = tr.features;
    d.y = tr.labels;
    if (!split.val_idx.empty()) {
        const Dataset va = ds.subset(split.val_idx);
        d.x_val = va.features;
        d.y_val = va.labels;
    }
    return d;
}

// Patience-based stopping on validation log-loss; never stops before two checkpoints.
class EarlyStopper {
public:
    EarlyStopper(int patience, bool has_val) : patience_(has_val ? patience : 0) {}
    bool enabled() const { return patience_ > 0; }
    bool update(double val_loss, Index checkpoints)
    {
        if (!enabled()) return false;
        if (val_loss < best_) {
            best_ = val_loss;
            bad_ = 0;
        } else {
            ++bad_;
        }
        return checkpoints >= 2 && bad_ >= patience_;
    }

private:
    int patience_;
    int bad_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct Objective {
    const Vector* weights = nullptr;           // per training row
    const std::vector<int>* groups = nullptr;  // per training row, group-DRO when set
    int n_groups = 0;
};

DynamicsLog make_log(const DatasetSplit& split, const IntVector& y)
{
    DynamicsLog log;
    log.example_ids = split.train_idx;
    log.labels = y;
    log.logits.emplace();
    return log;
}

TrainRun train_network(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                       const Objective& objective)
{
    const TrainingData data = gather(ds, split);
    const Index n = data.x.rows();
    Rng order_rng(cfg.seed);
    Rng init_rng(derive_seed(cfg.seed, 1));
    Rng resample_rng(derive_seed(cfg.seed, 2));

    Network net = Network::build(spec, ds.n_features(), ds.n_classes, &init_rng);
    auto state = std::make_shared<ModelState>();
    state->n_features = ds.n_features();
    state->n_classes = ds.n_classes;
    DynamicsLog log = make_log(split, data.y);
    std::vector<double> step_losses;
    EarlyStopper stopper(cfg.early_stopping_patience, data.x_val.rows() > 0);

    std::vector<std::vector<Index>> group_members;
    if (objective.groups) {
        group_members.resize(static_cast<std::size_t>(objective.n_groups));
        for (Index i = 0; i < n; ++i) group_members[static_cast<std::size_t>((*objective.groups)[static_cast<std::size_t>(i)])].push_back(i);
    }

    // Returns true when training should stop.
    auto checkpoint = [&]() {
        const Index index = static_cast<Index>(state->snapshots.size()) + 1;
        Matrix z = net.logits(data.x);
        if (!z.allFinite() || !net.all_finite())
            throw DivergenceError("non-finite model output at checkpoint " + std::to_string(index), index);
        log.probs.push_back(detail::softmax_rows(z));
        log.logits->push_back(std::move(z));
        state->snapshots.push_back(net);
        if (!stopper.enabled()) return false;
        const double val = log_loss(detail::softmax_rows(net.logits(data.x_val)), data.y_val);
        return stopper.update(val, index);
    };

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    const Index batch = std::min<Index>(cfg.batch_size, n);
    long long step = 0;
    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), order_rng);
        for (Index start = 0; start < n && !stop; start += batch) {
            std::vector<Index> rows(perm.begin() + start, perm.begin() + std::min(n, start + batch));
            if (objective.groups) {
                std::vector<char> present(static_cast<std::size_t>(objective.n_groups), 0);
                for (Index r : rows) present[static_cast<std::size_t>((*objective.groups)[static_cast<std::size_t>(r)])] = 1;
                for (int g = 0; g < objective.n_groups; ++g) {
                    if (present[static_cast<std::size_t>(g)]) continue;
                    const auto& members = group_members[static_cast<std::size_t>(g)];
                    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
                    rows.push_back(members[pick(resample_rng)]);
                }
            }
            const auto b = static_cast<Index>(rows.size());
            Matrix xb(b, data.x.cols());
            IntVector yb(b);
            for (Index i = 0; i < b; ++i) {
                xb.row(i) = data.x.row(rows[static_cast<std::size_t>(i)]);
                yb[i] = data.y[rows[static_cast<std::size_t>(i)]];
            }
            const auto cache = net.forward(xb);
            const Vector losses = detail::cross_entropy_rows(cache.logits, yb);
            if (!losses.allFinite()) {
                const Index index = static_cast<Index>(state->snapshots.size()) + 1;
                throw DivergenceError("non-finite training loss before checkpoint " + std::to_string(index), index);
            }

            Vector coef = Vector::Zero(b);
            if (objective.groups) {
                // Straight-through max: only the worst group's mean loss receives gradient.
                std::vector<double> sum(static_cast<std::size_t>(objective.n_groups), 0.0);
                std::vector<Index> count(static_cast<std::size_t>(objective.n_groups), 0);
                for (Index i = 0; i < b; ++i) {
                    const auto g = static_cast<std::size_t>((*objective.groups)[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
                    sum[g] += losses[i];
                    ++count[g];
                }
                int worst = 0;
                for (int g = 1; g < objective.n_groups; ++g) {
                    const auto gi = static_cast<std::size_t>(g);
                    const auto wi = static_cast<std::size_t>(worst);
                    if (sum[gi] / static_cast<double>(count[gi]) > sum[wi] / static_cast<double>(count[wi])) worst = g;
                }
                const double share = 1.0 / static_cast<double>(count[static_cast<std::size_t>(worst)]);
                for (Index i = 0; i < b; ++i) {
                    if ((*objective.groups)[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] == worst) coef[i] = share;
                }
            } else {
                const double share = 1.0 / static_cast<double>(b);
                for (Index i = 0; i < b; ++i) {
                    const double w = objective.weights ? (*objective.weights)[rows[static_cast<std::size_t>(i)]] : 1.0;
                    coef[i] = w * share;
                }
            }
            double value = 0.0;
            for (Index i = 0; i < b; ++i) value += coef[i] * losses[i];
            step_losses.push_back(value);

            const auto grad = net.backward(cache, detail::softmax_rows(cache.logits), yb, coef);
            net.apply_update(grad, cfg.learning_rate);
            ++step;
            if (cfg.checkpoint_interval && step % *cfg.checkpoint_interval == 0) stop = checkpoint();
        }
        if (!cfg.checkpoint_interval && !stop) stop = checkpoint();
    }
    if (state->snapshots.size() < 2)
        throw ValidationError("training produced fewer than 2 checkpoints; lower the checkpoint interval");
    return {TrainedModel(spec, std::move(state)), std::move(log), std::move(step_losses)};
}

TrainRun train_boosted(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                       const Vector* weights)
{
    const TrainingData data = gather(ds, split);
    const Index n = data.x.rows();
    const int k = ds.n_classes;
    auto state = std::make_shared<ModelState>();
    state->n_features = ds.n_features();
    state->n_classes = k;
    Ensemble& ens = state->ensemble;
    ens.shrinkage = spec.shrinkage;

    // Base score: log of the (Laplace-smoothed) class priors.
    ens.base.resize(k);
    for (int c = 0; c < k; ++c) {
        const auto count = (data.y.array() == c).count();
        ens.base[c] = std::log((static_cast<double>(count) + 1.0) / (static_cast<double>(n) + k));
    }
    Matrix f = ens.base.transpose().replicate(n, 1);
    Matrix f_val = ens.base.transpose().replicate(data.x_val.rows(), 1);

    DynamicsLog log = make_log(split, data.y);
    std::vector<double> step_losses;
    EarlyStopper stopper(cfg.early_stopping_patience, data.x_val.rows() > 0);
    const int interval = cfg.checkpoint_interval.value_or(1);
    const detail::TreeParams tree_params{spec.max_depth};

    for (int round = 1; round <= spec.n_rounds; ++round) {
        const Matrix p = detail::softmax_rows(f);
        const Vector losses = detail::cross_entropy_rows(f, data.y);
        double value = 0.0;
        for (Index i = 0; i < n; ++i) value += (weights ? (*weights)[i] : 1.0) * losses[i];
        value /= static_cast<double>(n);
        if (!std::isfinite(value)) {
            const auto index = static_cast<Index>(state->checkpoint_rounds.size()) + 1;
            throw DivergenceError("non-finite training loss before checkpoint " + std::to_string(index), index);
        }
        step_losses.push_back(value);

        std::vector<detail::RegressionTree> trees;
        Vector g(n), h(n);
        for (int c = 0; c < k; ++c) {
            for (Index i = 0; i < n; ++i) {
                const double w = weights ? (*weights)[i] : 1.0;
                g[i] = w * (p(i, c) - (data.y[i] == c ? 1.0 : 0.0));
                h[i] = w * std::max(p(i, c) * (1.0 - p(i, c)), 1e-16);
            }
            trees.push_back(detail::fit_tree(data.x, g, h, tree_params));
        }
        for (int c = 0; c < k; ++c) {
            const auto& tree = trees[static_cast<std::size_t>(c)];
            for (Index i = 0; i < n; ++i) f(i, c) += ens.shrinkage * tree.predict(data.x.row(i).data());
            for (Index i = 0; i < f_val.rows(); ++i) f_val(i, c) += ens.shrinkage * tree.predict(data.x_val.row(i).data());
        }
        ens.rounds.push_back(std::move(trees));

        if (round % interval == 0) {
            const auto index = static_cast<Index>(state->checkpoint_rounds.size()) + 1;
            if (!f.allFinite()) throw DivergenceError("non-finite scores at checkpoint " + std::to_string(index), index);
            log.probs.push_back(detail::softmax_rows(f));
            log.logits->push_back(f);
            state->checkpoint_rounds.push_back(round);
            if (stopper.enabled() && stopper.update(log_loss(detail::softmax_rows(f_val), data.y_val), index)) break;
        }
    }
    if (state->checkpoint_rounds.size() < 2)
        throw ValidationError("boosting produced fewer than 2 checkpoints; lower the checkpoint interval");
    // Rounds after the last checkpoint are not part of the model.
    ens.rounds.resize(static_cast<std::size_t>(state->checkpoint_rounds.back()));
    return {TrainedModel(spec, std::move(state)), std::move(log), std::move(step_losses)};
}

void check_inputs(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg)
{
    ds.validate();
    split.validate(ds.size());
    spec.validate();
    cfg.validate();
}

} // namespace

TrainRun train_weighted(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                        const Vector& train_weights)
{
    check_inputs(ds, split, spec, cfg);
    if (train_weights.size() != static_cast<Index>(split.train_idx.size()))
        throw ValidationError("one weight per training example is required");
    if (!(train_weights.array() >= 0.0).all() || !train_weights.allFinite())
        throw ValidationError("training weights must be finite and non-negative");
    if (spec.kind == ModelKind::gbdt) return train_boosted(ds, split, spec, cfg, &train_weights);
    Objective obj;
    obj.weights = &train_weights;
    return train_network(ds, split, spec, cfg, obj);
}

TrainRun train_with_checkpoints(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                const TrainConfig& cfg)
{
    check_inputs(ds, split, spec, cfg);
    if (spec.kind == ModelKind::gbdt) return train_boosted(ds, split, spec, cfg, nullptr);
    return train_network(ds, split, spec, cfg, Objective{});
}

TrainRun train_group_dro(const Dataset& ds, const DatasetSplit& split, const std::vector<int>& groups,
                         const ModelSpec& spec, const TrainConfig& cfg)
{
    check_inputs(ds, split, spec, cfg);
    if (spec.kind == ModelKind::gbdt) throw ValidationError("group DRO needs a gradient-trained model (logistic or mlp)");
    if (groups.size() != split.train_idx.size()) throw ValidationError("one group id per training example is required");
    if (groups.empty()) throw ValidationError("group DRO needs at least one group");
    const int n_groups = *std::max_element(groups.begin(), groups.end()) + 1;
    if (*std::min_element(groups.begin(), groups.end()) < 0) throw ValidationError("group ids must be non-negative");
    std::vector<char> used(static_cast<std::size_t>(n_groups), 0);
    for (int g : groups) used[static_cast<std::size_t>(g)] = 1;
    if (std::find(used.begin(), used.end(), 0) != used.end())
        throw ValidationError("group ids must be dense (every id in 0..G-1 needs a member)");
    Objective obj;
    obj.groups = &groups;
    obj.n_groups = n_groups;
    return train_network(ds, split, spec, cfg, obj);
}

JttRun train_jtt(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec, const TrainConfig& cfg,
                 double lambda_up)
{
    if (!(lambda_up >= 1.0)) throw ValidationError("JTT upweighting factor must be >= 1");
    TrainRun stage_one = train_with_checkpoints(ds, split, spec, cfg);
    const Dataset tr = ds.subset(split.train_idx);
    const IntVector pred = stage_one.model.predict_labels(tr.features);
    Vector weights = Vector::Ones(tr.size());
    std::vector<Index> errors;
    for (Index i = 0; i < tr.size(); ++i) {
        if (pred[i] != tr.labels[i]) {
            errors.push_back(split.train_idx[static_cast<std::size_t>(i)]);
            weights[i] = lambda_up;
        }
    }
    TrainRun stage_two = train_weighted(ds, split, spec, cfg, weights);
    JttRun out{std::move(stage_one), std::move(stage_two), std::move(errors)};
    return out;
}

double grand_score(const TrainedModel& model, const Dataset& ds, Index example, Index e)
{
    if (model.spec().kind == ModelKind::gbdt) throw ValidationError("GraNd is undefined for gbdt models");
    if (example < 0 || example >= ds.size()) throw ValidationError("example index out of range");
    return model.example_gradient(ds.features.row(example).transpose(), ds.labels[example], e).norm();
}

} // namespace dataiq
