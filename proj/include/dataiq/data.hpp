#pragma once
#include "dataiq/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dataiq {

/// A labelled tabular dataset. Features are N x d, one example per row.
struct Dataset {
    Matrix features;
    IntVector labels;
    std::vector<std::string> feature_names;
    int n_classes = 0;
    // Original target values in class-index order (e.g. {"a","b"} for labels 0,1).
    std::vector<std::string> class_names;

    Index size() const noexcept { return features.rows(); }
    Index n_features() const noexcept { return features.cols(); }

    /// Throws ValidationError if any invariant (N,d >= 1, labels < K, finite features) fails.
    void validate() const;

    /// Rows selected by `idx`, in that order.
    Dataset subset(const std::vector<Index>& idx) const;
    /// Columns selected by `cols`, in that order.
    Dataset select_features(const std::vector<Index>& cols) const;
};

struct DatasetSplit {
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
    std::vector<Index> test_idx;

    void validate(Index n) const;
    static DatasetSplit all_train(Index n);
};

/// Per-checkpoint class probabilities for a set of examples.
///
/// probs[e] is N x K; logits, when present, has the same shape. example_ids
/// identifies each row (dataset row indices for built-in trainers, the
/// interchange `example_id` column for external logs).
struct DynamicsLog {
    std::vector<Index> example_ids;
    IntVector labels;
    std::vector<Matrix> probs;
    std::optional<std::vector<Matrix>> logits;

    Index n_examples() const noexcept { return labels.size(); }
    Index n_checkpoints() const noexcept { return static_cast<Index>(probs.size()); }
    Index n_classes() const noexcept { return probs.empty() ? 0 : probs.front().cols(); }

    void validate() const;

    /// Probability of the true class at every checkpoint, E x N.
    Matrix true_class_probs() const;
};

enum class NaPolicy { reject, drop_rows, mean_impute };

NaPolicy na_policy_from_string(std::string_view s);

using ColumnRef = std::variant<std::string, Index>;

Dataset load_dataset(const std::filesystem::path& path, const ColumnRef& target, NaPolicy na_policy);
/// Parses CSV text already in memory (same rules as load_dataset).
Dataset parse_dataset(std::string_view text, const ColumnRef& target, NaPolicy na_policy);
void write_dataset(const std::filesystem::path& path, const Dataset& ds, const std::string& target_name = "target");

/// Unlabelled feature rows; column order must match `feature_names` when given.
Matrix load_feature_rows(const std::filesystem::path& path, const std::vector<std::string>& feature_names);

DynamicsLog load_dynamics(const std::filesystem::path& path);
DynamicsLog parse_dynamics(std::string_view text);
void write_dynamics(const std::filesystem::path& path, const DynamicsLog& log);
std::string format_dynamics(const DynamicsLog& log);

/// A synthetic dataset together with the subgroup each example was planted in.
struct PlantedDataset {
    Dataset data;
    std::vector<Group> planted;
};

/// Two separated Gaussian class blobs (Easy), a cluster of feature collisions
/// with opposite labels (Ambiguous) and isolated label flips inside the blobs (Hard).
struct CollisionOptions {
    double separation = 6.0;          // distance between the two class centres, in sigma
    double ambiguous_offset = 5.0;    // offset of the collision cluster along the second axis
    double ambiguous_spread = 0.5;
    double ambiguous_shift = 0.0;     // shift of the collision cluster along the class axis
};

PlantedDataset generate_collision_dataset(Index n, Index d, double collision_rate, double noise_rate,
                                          std::uint64_t seed, const CollisionOptions& opts = {});

/// Examples live on `n_cells` one-hot cells. A `random_cell_fraction` share of
/// cells carries coin-flip labels, so label collisions inside a cell become
/// more frequent as more examples are drawn; the remaining cells are pure.
PlantedDataset generate_cell_dataset(Index n, Index n_cells, double random_cell_fraction, std::uint64_t seed);

/// Stratified split; fractions are (train, val, test).
DatasetSplit split_dataset(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

/// Stratified subsample of `fraction` of the rows, returned in ascending order.
std::vector<Index> stratified_subsample(const IntVector& labels, double fraction, std::uint64_t seed);

// CSV helpers shared by the loaders and the CLI.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string format_double(double v);

} // namespace dataiq
