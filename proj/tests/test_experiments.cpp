#include "dataiq/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace dataiq;

namespace {

TrainConfig small_cfg(std::uint64_t seed = 1)
{
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 10;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 32;
    return cfg;
}

} // namespace

TEST_CASE("characterize with automatic thresholds")
{
    const auto pd = generate_collision_dataset(300, 3, 0.3, 0.05, 2);
    const auto split = split_dataset(pd.data, {0.8, 0.1, 0.1}, 1);
    CharacterizeOptions opts;
    opts.auto_threshold = true;
    const auto tc = characterize(pd.data, split, ModelSpec::mlp({16}), small_cfg(), opts);
    REQUIRE(tc.result.threshold_sweep.has_value());
    const double t = tc.result.threshold_sweep->selected;
    CHECK(tc.result.groups.c_low == t);
    CHECK(tc.result.groups.c_up == 1.0 - t);
    CHECK(tc.result.metrics.size() == static_cast<Index>(split.train_idx.size()));
    CHECK(tc.result.metrics.example_ids == split.train_idx);
}

TEST_CASE("metric kinds parse")
{
    for (auto k : {MetricKind::aleatoric, MetricKind::epistemic, MetricKind::aum, MetricKind::error_count,
                   MetricKind::grand})
        CHECK(metric_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(metric_kind_from_string("variability"), ValidationError);
}

TEST_CASE("default sweep specs")
{
    const auto specs = default_sweep_specs();
    REQUIRE(specs.size() == 6);
    CHECK(specs[0].hidden_sizes == std::vector<int>{64, 32});
    CHECK(specs[2].hidden_sizes == std::vector<int>{64, 32, 16, 8});
    CHECK(specs[5].hidden_sizes == std::vector<int>{256, 128, 64, 32});
}

TEST_CASE("identical sweep runs agree perfectly")
{
    const auto pd = generate_collision_dataset(300, 3, 0.3, 0.05, 4);
    const auto split = split_dataset(pd.data, {0.8, 0.2, 0.0}, 1);
    ParameterSweepOptions opts;
    opts.derive_run_seeds = false;
    opts.kinds.push_back(MetricKind::grand);
    const auto spec = ModelSpec::mlp({16, 8});
    const auto res = run_parameterization_sweep(pd.data, split, {spec, spec}, small_cfg(), opts);
    REQUIRE(res.runs.size() == 2);
    for (const auto& [kind, summary] : res.robustness) {
        CAPTURE(to_string(kind));
        CHECK(summary.mean == doctest::Approx(1.0));
    }
    CHECK(res.overlap.mean == 1.0);
    CHECK(!std::isnan(res.runs[0].val_accuracy));
}

TEST_CASE("sweep rejects a single spec and names failing runs")
{
    const auto pd = generate_collision_dataset(100, 3, 0.3, 0.05, 4);
    const auto split = split_dataset(pd.data, {0.8, 0.2, 0.0}, 1);
    CHECK_THROWS_AS(run_parameterization_sweep(pd.data, split, {ModelSpec::logistic()}, small_cfg()), ValidationError);
    ParameterSweepOptions opts;
    opts.kinds = {MetricKind::grand};
    try {
        run_parameterization_sweep(pd.data, split, {ModelSpec::logistic(), ModelSpec::gbdt(5, 2, 0.1)}, small_cfg(),
                                   opts);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("sweep run 1") != std::string::npos);
    }
}

TEST_CASE("feature ranking by correlation")
{
    Dataset ds;
    ds.features.resize(6, 3);
    ds.features << 1, 5, 0.3, 2, 5, -0.1, 3, 5, 0.2, 4, 5, 0.0, 5, 5, 0.1, 6, 5, -0.2;
    ds.labels.resize(6);
    ds.labels << 0, 0, 0, 1, 1, 1;
    ds.n_classes = 2;
    ds.feature_names = {"a", "b", "c"};
    std::vector<std::string> warnings;
    const auto r = rank_features_by_correlation(ds, {0, 1, 2, 3, 4, 5}, &warnings);
    REQUIRE(r.size() == 3);
    CHECK(r[0].feature == 2);
    CHECK(r[1].feature == 0);
    CHECK(r[2].feature == 1);
    CHECK(std::isnan(r[2].value));
    CHECK(warnings.size() == 1);
}

TEST_CASE("feature acquisition final step equals a plain characterization")
{
    const auto pd = generate_collision_dataset(240, 3, 0.3, 0.05, 6);
    const auto split = split_dataset(pd.data, {0.8, 0.2, 0.0}, 2);
    const auto spec = ModelSpec::logistic();
    const auto acq = run_feature_acquisition(pd.data, split, spec, small_cfg());
    REQUIRE(acq.steps.size() == 3);
    CHECK(acq.steps.back().features == std::vector<Index>{0, 1, 2});
    const auto plain = characterize(pd.data, split, spec, small_cfg());
    CHECK(acq.steps.back().result.metrics.confidence == plain.result.metrics.confidence);
    CHECK(acq.steps.back().result.groups.groups == plain.result.groups.groups);
    for (const auto& s : acq.steps) CHECK(s.proportions[0] + s.proportions[1] + s.proportions[2] == doctest::Approx(1.0));
}

TEST_CASE("sculpt removal counts and baseline")
{
    const auto pd = generate_collision_dataset(400, 3, 0.3, 0.05, 8);
    const auto test = generate_collision_dataset(200, 3, 0.0, 0.0, 9);
    const auto res = run_sculpt(pd.data, test.data, ModelSpec::logistic(), small_cfg());
    REQUIRE(res.steps.size() == 6);
    const auto n = static_cast<double>(res.n_ambiguous);
    for (const auto& s : res.steps) CHECK(s.removed == std::llround(s.proportion * n));
    CHECK(res.steps.front().removed == 0);
    CHECK(res.steps.back().removed == res.n_ambiguous);

    const auto tc = characterize(pd.data, DatasetSplit::all_train(pd.data.size()), ModelSpec::logistic(), small_cfg());
    std::vector<Index> rows(static_cast<std::size_t>(test.data.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
    CHECK(res.steps.front().test_accuracy == accuracy(tc.run.model, test.data, rows));
}

TEST_CASE("sample size study at fraction one matches characterize")
{
    const auto pd = generate_collision_dataset(300, 3, 0.3, 0.05, 10);
    const auto steps = run_sample_size_study(pd.data, ModelSpec::logistic(), small_cfg(), {0.5, 1.0});
    REQUIRE(steps.size() == 2);
    CHECK(steps[1].n_examples == 300);
    const auto tc = characterize(pd.data, DatasetSplit::all_train(300), ModelSpec::logistic(), small_cfg());
    CHECK(steps[1].proportions == subgroup_proportions(tc.result.groups));
    CHECK_THROWS_AS(run_sample_size_study(pd.data, ModelSpec::logistic(), small_cfg(), {0.1, 1.0}), ValidationError);
}

TEST_CASE("robust comparison on a degenerate dataset gives equal rows")
{
    CollisionOptions far;
    far.separation = 12.0;
    const auto pd = generate_collision_dataset(300, 2, 0.0, 0.0, 3, far);
    const auto split = split_dataset(pd.data, {0.7, 0.0, 0.3}, 1);
    ComparisonOptions opts;
    // a zero percentile cutoff puts every row in one group
    opts.characterize.stratify.aleatoric_percentile = 0.0;
    const auto res = run_robust_training_comparison(pd.data, split, ModelSpec::logistic(), small_cfg(), opts);
    REQUIRE(res.methods.size() == 3);
    CHECK(res.methods[0].method == "ERM");
    CHECK(res.methods[1].method == "Group-DRO");
    CHECK(res.methods[2].method == "JTT");
    for (const auto& m : res.methods) {
        CHECK(m.overall == res.methods[0].overall);
        CHECK(m.overall == 1.0);
    }
}
