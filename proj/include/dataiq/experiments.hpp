#pragma once
#include "dataiq/analysis.hpp"
#include "dataiq/data.hpp"
#include "dataiq/dynamics.hpp"
#include "dataiq/inference.hpp"
#include "dataiq/stratify.hpp"
#include "dataiq/trainers.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dataiq {

struct Characterization {
    MetricsTable metrics;
    GroupAssignment groups;
    std::optional<ThresholdSweep> threshold_sweep;  // set when thresholds were selected automatically
};

struct CharacterizeOptions {
    StratifyOptions stratify;
    bool auto_threshold = false;
    SweepOptions sweep;
};

Characterization characterize(const MetricsTable& metrics, const CharacterizeOptions& opts = {});

struct TrainedCharacterization {
    TrainRun run;
    Characterization result;
};

TrainedCharacterization characterize(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                     const TrainConfig& cfg, const CharacterizeOptions& opts = {});

/// GraNd scores of the given dataset rows at checkpoint e.
Vector grand_scores(const TrainedModel& model, const Dataset& ds, const std::vector<Index>& rows, Index e);

// ---------------------------------------------------------------------------
// Parameterization sweep

enum class MetricKind { aleatoric, epistemic, aum, error_count, grand };

std::string_view to_string(MetricKind k);
MetricKind metric_kind_from_string(std::string_view s);

/// The six MLPs: depth 3, 4 and 5 with widths halving from 64 or from 256.
std::vector<ModelSpec> default_sweep_specs();

struct ParameterSweepOptions {
    std::vector<MetricKind> kinds{MetricKind::aleatoric, MetricKind::epistemic, MetricKind::aum,
                                  MetricKind::error_count};
    CharacterizeOptions characterize;
    // Run i trains with derive_seed(cfg.seed, i); false reuses cfg.seed for every run.
    bool derive_run_seeds = true;
    Index grand_checkpoint = 1;
};

struct SweepRun {
    ModelSpec spec;
    TrainConfig cfg;
    MetricsTable metrics;
    GroupAssignment groups;
    double val_accuracy = 0.0;  // NaN without validation rows
    std::map<MetricKind, Vector> columns;
};

struct SweepResult {
    std::vector<SweepRun> runs;
    std::map<MetricKind, RobustnessSummary> robustness;
    RobustnessSummary overlap;  // pairwise group_overlap, unit diagonal
};

SweepResult run_parameterization_sweep(const Dataset& ds, const DatasetSplit& split, const std::vector<ModelSpec>& specs,
                                       const TrainConfig& cfg, const ParameterSweepOptions& opts = {});

// ---------------------------------------------------------------------------
// Feature acquisition

struct FeatureValue {
    Index feature = 0;
    double value = 0.0;  // |correlation| with the target, NaN for constant features
};

/// Features by ascending |Pearson correlation| with the target (max over
/// one-hot columns for multiclass targets); constant features go last.
std::vector<FeatureValue> rank_features_by_correlation(const Dataset& ds, const std::vector<Index>& rows,
                                                       std::vector<std::string>* warnings = nullptr);

struct AcquisitionStep {
    Index feature_added = 0;
    std::vector<Index> features;  // prefix, in original column order
    std::array<double, 3> proportions{};
    std::array<double, 3> mean_aleatoric{};  // NaN for empty groups
    Characterization result;
};

struct AcquisitionResult {
    std::vector<Index> order;
    std::vector<AcquisitionStep> steps;
    std::vector<std::string> warnings;
};

/// Trains a fresh model on every prefix of `order` (ascending correlation
/// when empty) and characterizes each.
AcquisitionResult run_feature_acquisition(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                          const TrainConfig& cfg, std::vector<Index> order = {},
                                          const CharacterizeOptions& opts = {});

// ---------------------------------------------------------------------------
// Sculpting

std::vector<double> default_sculpt_grid();

struct SculptStep {
    double proportion = 0.0;
    Index removed = 0;
    double test_accuracy = 0.0;
};

struct SculptResult {
    Characterization baseline;
    Index n_ambiguous = 0;
    std::vector<SculptStep> steps;
};

/// Removes the p-fraction of Ambiguous training rows with the highest v_al
/// (ties by lower index), retrains on the rest and scores on `test_ds`.
SculptResult run_sculpt(const Dataset& train_ds, const Dataset& test_ds, const ModelSpec& spec, const TrainConfig& cfg,
                        const std::vector<double>& proportions = default_sculpt_grid(),
                        const CharacterizeOptions& opts = {});

// ---------------------------------------------------------------------------
// Sample size

std::vector<double> default_fraction_grid();

struct SampleSizeStep {
    double fraction = 0.0;
    Index n_examples = 0;
    std::array<double, 3> proportions{};
};

/// Stratified subsample per fraction (seed derived from cfg.seed and the grid
/// position), trained on all sampled rows with cfg.seed.
std::vector<SampleSizeStep> run_sample_size_study(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                                  const std::vector<double>& fractions = default_fraction_grid(),
                                                  const CharacterizeOptions& opts = {});

// ---------------------------------------------------------------------------
// Robust training comparison

struct MethodAccuracy {
    std::string method;
    double overall = 0.0;
    double ambiguous = 0.0;  // NaN when no test row is flagged Ambiguous
    double rest = 0.0;       // NaN when every test row is flagged Ambiguous
};

struct ComparisonOptions {
    double jtt_lambda = 5.0;
    CharacterizeOptions characterize;
    EmbedKind embed = EmbedKind::standardize;
    Index components = 2;
    int k_nn = 5;
};

struct ComparisonResult {
    Characterization baseline;
    std::vector<TestGroup> test_flags;
    std::vector<MethodAccuracy> methods;  // ERM, Group-DRO, JTT
};

ComparisonResult run_robust_training_comparison(const Dataset& ds, const DatasetSplit& split, const ModelSpec& spec,
                                                const TrainConfig& cfg, const ComparisonOptions& opts = {});

} // namespace dataiq
