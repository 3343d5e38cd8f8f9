#include "dataiq/experiments.hpp"

#include "dataiq/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dataiq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Index> all_rows(Index n)
{
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    return rows;
}

double accuracy_or_nan(const TrainedModel& model, const Dataset& ds, const std::vector<Index>& rows)
{
    return rows.empty() ? kNaN : accuracy(model, ds, rows);
}

} // namespace

Characterization characterize(const MetricsTable& metrics, const CharacterizeOptions& opts)
{
    Characterization out;
    out.metrics = metrics;
    StratifyOptions s = opts.stratify;
    if (opts.auto_threshold) {
        SweepOptions sw = opts.sweep;
        sw.aleatoric_percentile = s.aleatoric_percentile;
        out.threshold_sweep = select_threshold(metrics, sw);
        s.c_up = 1.0 - out.threshold_sweep->selected;
        s.c_low = out.threshold_sweep->selected;
    }
    out.groups = assign_groups(metrics, s);
    return out;
}

TrainedCharacterization characterize(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                     const TrainConfig& cfg, const CharacterizeOptions& opts)
{
    TrainRun run = train_with_checkpoints(ds, split, spec, cfg);
    Characterization res = characterize(compute_metrics(run.dynamics), opts);
    return {std::move(run), std::move(res)};
}

Vector grand_scores(const TrainedModel& model, const Dataset& ds, const std::vector<Index>& rows, Index e)
{
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = grand_score(model, ds, rows[i], e);
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(MetricKind k)
{
    switch (k) {
    case MetricKind::aleatoric: return "aleatoric";
    case MetricKind::epistemic: return "epistemic";
    case MetricKind::aum: return "aum";
    case MetricKind::error_count: return "error_count";
    case MetricKind::grand: return "grand";
    }
    return "aleatoric";
}

MetricKind metric_kind_from_string(std::string_view s)
{
    for (auto k : {MetricKind::aleatoric, MetricKind::epistemic, MetricKind::aum, MetricKind::error_count,
                   MetricKind::grand})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown metric kind '" + std::string(s) + "'");
}

std::vector<ModelSpec> default_sweep_specs()
{
    std::vector<ModelSpec> specs;
    for (int width : {64, 256}) {
        for (int depth : {3, 4, 5}) {
            std::vector<int> hidden;
            for (int l = 0, w = width; l < depth - 1; ++l, w /= 2) hidden.push_back(w);
            specs.push_back(ModelSpec::mlp(hidden));
        }
    }
    return specs;
}

SweepResult run_parameterization_sweep(const Dataset& ds, const DatasetSplit& split, const std::vector<ModelSpec>& specs,
                                       const TrainConfig& cfg, const ParameterSweepOptions& opts)
{
    if (specs.size() < 2) throw ValidationError("a parameterization sweep needs at least 2 model specs");
    if (opts.kinds.empty()) throw ValidationError("no metric kinds requested");

    SweepResult out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        SweepRun run;
        run.spec = specs[i];
        run.cfg = cfg;
        if (opts.derive_run_seeds) run.cfg.seed = derive_seed(cfg.seed, i);
        const std::string tag = "sweep run " + std::to_string(i) + " (" + run.spec.describe() + "): ";
        try {
            auto tc = characterize(ds, split, run.spec, run.cfg, opts.characterize);
            run.metrics = tc.result.metrics;
            run.groups = tc.result.groups;
            run.val_accuracy = accuracy_or_nan(tc.run.model, ds, split.val_idx);
            for (MetricKind k : opts.kinds) {
                switch (k) {
                case MetricKind::aleatoric: run.columns[k] = run.metrics.aleatoric; break;
                case MetricKind::epistemic: run.columns[k] = run.metrics.epistemic; break;
                case MetricKind::aum:
                    if (!run.metrics.aum) throw ValidationError("AUM needs logits");
                    run.columns[k] = *run.metrics.aum;
                    break;
                case MetricKind::error_count: run.columns[k] = run.metrics.error_count->cast<double>(); break;
                case MetricKind::grand:
                    run.columns[k] = grand_scores(tc.run.model, ds, split.train_idx,
                                                  std::min(opts.grand_checkpoint, tc.run.model.n_checkpoints()));
                    break;
                }
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError(tag + e.what(), e.checkpoint());
        } catch (const NumericError& e) {
            throw NumericError(tag + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(tag + e.what());
        }
        out.runs.push_back(std::move(run));
    }

    for (MetricKind k : opts.kinds) {
        std::vector<Vector> cols;
        for (const auto& r : out.runs) cols.push_back(r.columns.at(k));
        out.robustness[k] = robustness_matrix(cols);
    }

    const auto m = static_cast<Index>(out.runs.size());
    out.overlap.matrix = Matrix::Identity(m, m);
    std::vector<double> pairs;
    for (Index a = 0; a < m; ++a) {
        for (Index b = a + 1; b < m; ++b) {
            const double o = group_overlap(out.runs[static_cast<std::size_t>(a)].groups,
                                           out.runs[static_cast<std::size_t>(b)].groups);
            out.overlap.matrix(a, b) = out.overlap.matrix(b, a) = o;
            pairs.push_back(o);
        }
    }
    const Eigen::Map<const Vector> pv(pairs.data(), static_cast<Index>(pairs.size()));
    out.overlap.mean = pv.mean();
    out.overlap.stddev = std::sqrt((pv.array() - out.overlap.mean).square().mean());
    return out;
}

// ---------------------------------------------------------------------------

std::vector<FeatureValue> rank_features_by_correlation(const Dataset& ds, const std::vector<Index>& rows,
                                                       std::vector<std::string>* warnings)
{
    const Dataset sub = ds.subset(rows);
    std::vector<FeatureValue> values;
    std::vector<FeatureValue> constant;
    for (Index j = 0; j < sub.n_features(); ++j) {
        double best = 0.0;
        bool defined = true;
        const int n_targets = sub.n_classes == 2 ? 1 : sub.n_classes;
        for (int c = 0; c < n_targets && defined; ++c) {
            const Vector target = sub.n_classes == 2 ? Vector(sub.labels.cast<double>())
                                                     : Vector((sub.labels.array() == c).cast<double>());
            try {
                best = std::max(best, std::abs(pearson(sub.features.col(j), target)));
            } catch (const NumericError&) {
                // A one-hot column absent from the rows carries no signal.
                if ((sub.features.col(j).array() == sub.features(0, j)).all()) defined = false;
            }
        }
        if (defined) {
            values.push_back({j, best});
        } else {
            constant.push_back({j, kNaN});
            if (warnings) warnings->push_back("feature '" + sub.feature_names[static_cast<std::size_t>(j)] +
                                              "' is constant; ranked last");
        }
    }
    std::stable_sort(values.begin(), values.end(),
                     [](const FeatureValue& a, const FeatureValue& b) { return a.value < b.value; });
    values.insert(values.end(), constant.begin(), constant.end());
    return values;
}

AcquisitionResult run_feature_acquisition(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                          const TrainConfig& cfg, std::vector<Index> order,
                                          const CharacterizeOptions& opts)
{
    ds.validate();
    if (ds.n_features() < 2) throw ValidationError("feature acquisition needs at least 2 features");
    AcquisitionResult out;
    if (order.empty()) {
        for (const auto& fv : rank_features_by_correlation(ds, split.train_idx, &out.warnings))
            order.push_back(fv.feature);
    } else {
        std::vector<Index> check(order);
        std::sort(check.begin(), check.end());
        if (std::adjacent_find(check.begin(), check.end()) != check.end() || check.front() < 0 ||
            check.back() >= ds.n_features())
            throw ValidationError("acquisition order must list distinct valid feature indices");
    }
    out.order = order;

    std::vector<Index> prefix;
    for (Index f : order) {
        prefix.insert(std::upper_bound(prefix.begin(), prefix.end(), f), f);
        AcquisitionStep step;
        step.feature_added = f;
        step.features = prefix;
        step.result = characterize(ds.select_features(prefix), split, spec, cfg, opts).result;
        step.proportions = subgroup_proportions(step.result.groups);
        for (auto g : {Group::Easy, Group::Ambiguous, Group::Hard}) {
            const auto members = step.result.groups.members(g);
            double sum = 0.0;
            for (Index i : members) sum += step.result.metrics.aleatoric[i];
            step.mean_aleatoric[static_cast<std::size_t>(g)] =
                members.empty() ? kNaN : sum / static_cast<double>(members.size());
        }
        out.steps.push_back(std::move(step));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> default_sculpt_grid()
{
    return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
}

SculptResult run_sculpt(const Dataset& train_ds, const Dataset& test_ds, const ModelSpec& spec, const TrainConfig& cfg,
                        const std::vector<double>& proportions, const CharacterizeOptions& opts)
{
    train_ds.validate();
    test_ds.validate();
    if (test_ds.n_features() != train_ds.n_features())
        throw ValidationError("test data has a different feature count from the training data");
    if (proportions.empty()) throw ValidationError("empty sculpting grid");
    for (double p : proportions)
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("sculpting proportions must lie in [0,1]");

    SculptResult out;
    const auto all_test = all_rows(test_ds.size());
    auto base = characterize(train_ds, DatasetSplit::all_train(train_ds.size()), spec, cfg, opts);
    out.baseline = base.result;

    auto amb = out.baseline.groups.members(Group::Ambiguous);
    out.n_ambiguous = static_cast<Index>(amb.size());
    const Vector& val = out.baseline.metrics.aleatoric;
    std::stable_sort(amb.begin(), amb.end(), [&](Index a, Index b) { return val[a] > val[b]; });

    for (double p : proportions) {
        SculptStep step;
        step.proportion = p;
        step.removed = static_cast<Index>(std::llround(p * static_cast<double>(amb.size())));
        if (step.removed == 0) {
            step.test_accuracy = accuracy(base.run.model, test_ds, all_test);
        } else {
            std::vector<char> drop(static_cast<std::size_t>(train_ds.size()), 0);
            for (Index i = 0; i < step.removed; ++i) drop[static_cast<std::size_t>(amb[static_cast<std::size_t>(i)])] = 1;
            std::vector<Index> keep;
            std::vector<Index> per_class(static_cast<std::size_t>(train_ds.n_classes), 0);
            for (Index r = 0; r < train_ds.size(); ++r) {
                if (drop[static_cast<std::size_t>(r)]) continue;
                keep.push_back(r);
                ++per_class[static_cast<std::size_t>(train_ds.labels[r])];
            }
            for (std::size_t c = 0; c < per_class.size(); ++c)
                if (per_class[c] == 0)
                    throw ValidationError("removing " + std::to_string(step.removed) +
                                          " Ambiguous examples empties class " + std::to_string(c));
            const Dataset reduced = train_ds.subset(keep);
            const TrainRun run = train_with_checkpoints(reduced, DatasetSplit::all_train(reduced.size()), spec, cfg);
            step.test_accuracy = accuracy(run.model, test_ds, all_test);
        }
        out.steps.push_back(step);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> default_fraction_grid()
{
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

std::vector<SampleSizeStep> run_sample_size_study(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                                  const std::vector<double>& fractions, const CharacterizeOptions& opts)
{
    ds.validate();
    if (fractions.empty()) throw ValidationError("empty fraction grid");
    std::vector<SampleSizeStep> out;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const auto rows = stratified_subsample(ds.labels, fractions[i], derive_seed(cfg.seed, i));
        if (rows.size() < 50)
            throw ValidationError("fraction " + format_double(fractions[i]) + " leaves fewer than 50 examples");
        const Dataset sub = ds.subset(rows);
        const auto tc = characterize(sub, DatasetSplit::all_train(sub.size()), spec, cfg, opts);
        out.push_back({fractions[i], sub.size(), subgroup_proportions(tc.result.groups)});
    }
    return out;
}

// ---------------------------------------------------------------------------

ComparisonResult run_robust_training_comparison(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                                const TrainConfig& cfg, const ComparisonOptions& opts)
{
    if (split.test_idx.empty()) throw ValidationError("the robust training comparison needs test rows");
    ComparisonResult out;
    auto base = characterize(ds, split, spec, cfg, opts.characterize);
    out.baseline = base.result;

    // Two groups, Ambiguous and the rest, matching the rows reported at test time.
    const bool any_rest = out.baseline.groups.members(Group::Ambiguous).size() < out.baseline.groups.groups.size();
    std::vector<int> group_ids;
    for (Group g : out.baseline.groups.groups) group_ids.push_back(g == Group::Ambiguous && any_rest ? 1 : 0);

    const Dataset train = ds.subset(split.train_idx);
    const Embedder emb = fit_embedder(train.features, opts.embed, opts.components);
    const GroupIndex index = build_index(emb, train.features, out.baseline.groups, opts.k_nn);
    out.test_flags = assign_test_groups(index, ds.subset(split.test_idx).features);

    std::vector<Index> amb_rows, rest_rows;
    for (std::size_t i = 0; i < split.test_idx.size(); ++i)
        (out.test_flags[i] == TestGroup::Ambiguous ? amb_rows : rest_rows).push_back(split.test_idx[i]);

    auto score = [&](const std::string& name, const TrainedModel& model) {
        out.methods.push_back({name, accuracy(model, ds, split.test_idx), accuracy_or_nan(model, ds, amb_rows),
                               accuracy_or_nan(model, ds, rest_rows)});
    };
    score("ERM", base.run.model);
    score("Group-DRO", train_group_dro(ds, split, group_ids, spec, cfg).model);
    score("JTT", train_jtt(ds, split, spec, cfg, opts.jtt_lambda).stage_two.model);
    return out;
}

} // namespace dataiq
