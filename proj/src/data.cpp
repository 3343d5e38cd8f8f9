#include "dataiq/data.hpp"
#include "dataiq/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unistd.h>

namespace dataiq {

Group group_from_string(std::string_view s)
{
    if (s == "Easy") return Group::Easy;
    if (s == "Ambiguous") return Group::Ambiguous;
    if (s == "Hard") return Group::Hard;
    throw ValidationError("unknown group label '" + std::string(s) + "'");
}

NaPolicy na_policy_from_string(std::string_view s)
{
    if (s == "reject") return NaPolicy::reject;
    if (s == "drop_rows") return NaPolicy::drop_rows;
    if (s == "mean_impute") return NaPolicy::mean_impute;
    throw ValidationError("unknown na policy '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Dataset / DatasetSplit / DynamicsLog

void Dataset::validate() const
{
    if (features.rows() < 1) throw ValidationError("dataset has no rows");
    if (features.cols() < 1) throw ValidationError("dataset has no feature columns");
    if (labels.size() != features.rows()) throw ValidationError("label count does not match row count");
    if (static_cast<Index>(feature_names.size()) != features.cols())
        throw ValidationError("feature name count does not match column count");
    if (n_classes < 2) throw ValidationError("dataset needs at least 2 classes");
    for (Index i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes)
            throw ValidationError("label out of range at row " + std::to_string(i));
    }
    if (!features.allFinite()) throw ValidationError("dataset contains non-finite feature values");
}

Dataset Dataset::subset(const std::vector<Index>& idx) const
{
    Dataset out;
    out.features.resize(static_cast<Index>(idx.size()), features.cols());
    out.labels.resize(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<Index>(i)) = features.row(idx[i]);
        out.labels[static_cast<Index>(i)] = labels[idx[i]];
    }
    out.feature_names = feature_names;
    out.n_classes = n_classes;
    out.class_names = class_names;
    return out;
}

Dataset Dataset::select_features(const std::vector<Index>& cols) const
{
    Dataset out;
    out.features.resize(features.rows(), static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.features.col(static_cast<Index>(j)) = features.col(cols[j]);
        out.feature_names.push_back(feature_names[static_cast<std::size_t>(cols[j])]);
    }
    out.labels = labels;
    out.n_classes = n_classes;
    out.class_names = class_names;
    return out;
}

void DatasetSplit::validate(Index n) const
{
    if (train_idx.empty()) throw ValidationError("split has an empty training set");
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (const auto* part : {&train_idx, &val_idx, &test_idx}) {
        for (Index i : *part) {
            if (i < 0 || i >= n) throw ValidationError("split index out of range");
            if (seen[static_cast<std::size_t>(i)]) throw ValidationError("split parts are not disjoint");
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
}

DatasetSplit DatasetSplit::all_train(Index n)
{
    DatasetSplit s;
    s.train_idx.resize(static_cast<std::size_t>(n));
    std::iota(s.train_idx.begin(), s.train_idx.end(), Index{0});
    return s;
}

void DynamicsLog::validate() const
{
    const Index n = labels.size();
    if (n < 1) throw ValidationError("dynamics log has no examples");
    if (static_cast<Index>(example_ids.size()) != n) throw ValidationError("example id count mismatch");
    if (probs.size() < 2) throw ValidationError("dynamics log needs at least 2 checkpoints");
    const Index k = probs.front().cols();
    if (k < 2) throw ValidationError("dynamics log needs at least 2 classes");
    for (Index i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k) throw ValidationError("dynamics label out of range");
    }
    for (std::size_t e = 0; e < probs.size(); ++e) {
        const auto& p = probs[e];
        if (p.rows() != n || p.cols() != k) throw ValidationError("ragged dynamics log at checkpoint " + std::to_string(e));
        for (Index i = 0; i < n; ++i) {
            for (Index c = 0; c < k; ++c) {
                const double v = p(i, c);
                if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                    throw ValidationError("probability outside [0,1] at checkpoint " + std::to_string(e));
            }
            if (std::abs(p.row(i).sum() - 1.0) > 1e-6)
                throw ValidationError("probability row does not sum to 1 at checkpoint " + std::to_string(e) +
                                      ", example " + std::to_string(example_ids[static_cast<std::size_t>(i)]));
        }
    }
    if (logits) {
        if (logits->size() != probs.size()) throw ValidationError("logit checkpoint count mismatch");
        for (const auto& z : *logits) {
            if (z.rows() != n || z.cols() != k) throw ValidationError("logit shape mismatch");
            if (!z.allFinite()) throw ValidationError("non-finite logit");
        }
    }
}

Matrix DynamicsLog::true_class_probs() const
{
    Matrix out(n_checkpoints(), n_examples());
    for (Index e = 0; e < n_checkpoints(); ++e) {
        const auto& p = probs[static_cast<std::size_t>(e)];
        for (Index i = 0; i < n_examples(); ++i) out(e, i) = p(i, labels[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV plumbing

std::vector<std::vector<std::string>> parse_csv(std::string_view text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field_started && field.empty()) in_quotes = true;
                else field.push_back(c);
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n': end_row(); break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw ValidationError("unterminated quoted CSV field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents)
{
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write file: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw ValidationError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool is_missing_token(std::string_view s)
{
    s = trim(s);
    if (s.empty()) return true;
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == "na" || lower == "nan" || lower == "null" || lower == "n/a";
}

std::optional<double> parse_number(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

template <class Int>
std::optional<Int> parse_integer(std::string_view s)
{
    s = trim(s);
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

Index resolve_column(const std::vector<std::string>& header, const ColumnRef& ref)
{
    if (const auto* idx = std::get_if<Index>(&ref)) {
        if (*idx < 0 || *idx >= static_cast<Index>(header.size()))
            throw ValidationError("target column index " + std::to_string(*idx) + " out of range");
        return *idx;
    }
    const auto& name = std::get<std::string>(ref);
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("target column '" + name + "' not found");
    return static_cast<Index>(it - header.begin());
}

} // namespace

Dataset parse_dataset(std::string_view text, const ColumnRef& target, NaPolicy na_policy)
{
    auto rows = parse_csv(text);
    if (rows.empty()) throw ValidationError("CSV has no header row");
    const auto header = rows.front();
    const Index n_cols = static_cast<Index>(header.size());
    const Index target_col = resolve_column(header, target);
    if (n_cols < 2) throw ValidationError("CSV needs at least one feature column besides the target");

    std::vector<std::string> feature_names;
    for (Index j = 0; j < n_cols; ++j) {
        if (j != target_col) feature_names.push_back(header[static_cast<std::size_t>(j)]);
    }
    const Index d = n_cols - 1;

    std::vector<std::vector<std::optional<double>>> cells;
    std::vector<std::string> targets;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (static_cast<Index>(row.size()) != n_cols)
            throw ValidationError("CSV row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                                  " fields, expected " + std::to_string(n_cols));
        std::vector<std::optional<double>> values;
        values.reserve(static_cast<std::size_t>(d));
        bool row_missing = false;
        for (Index j = 0; j < n_cols; ++j) {
            if (j == target_col) continue;
            const auto& cell = row[static_cast<std::size_t>(j)];
            std::optional<double> v;
            if (!is_missing_token(cell)) {
                v = parse_number(cell);
                if (v && !std::isfinite(*v)) v.reset();
            }
            if (!v) {
                if (na_policy == NaPolicy::reject)
                    throw ValidationError("missing or non-numeric feature cell at row " + std::to_string(r) +
                                          ", column '" + header[static_cast<std::size_t>(j)] + "'");
                row_missing = true;
            }
            values.push_back(v);
        }
        const auto target_cell = std::string(trim(row[static_cast<std::size_t>(target_col)]));
        if (is_missing_token(target_cell)) {
            if (na_policy != NaPolicy::drop_rows)
                throw ValidationError("missing target value at row " + std::to_string(r));
            continue;
        }
        if (row_missing && na_policy == NaPolicy::drop_rows) continue;
        cells.push_back(std::move(values));
        targets.push_back(target_cell);
    }
    if (cells.empty()) throw ValidationError("CSV has no usable data rows");

    Dataset ds;
    ds.feature_names = std::move(feature_names);
    const Index n = static_cast<Index>(cells.size());
    ds.features.resize(n, d);
    for (Index j = 0; j < d; ++j) {
        double sum = 0.0;
        Index count = 0;
        for (Index i = 0; i < n; ++i) {
            if (const auto& v = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
                sum += *v;
                ++count;
            }
        }
        if (count == 0) throw ValidationError("feature column '" + ds.feature_names[static_cast<std::size_t>(j)] + "' has no observed values");
        const double mean = sum / static_cast<double>(count);
        for (Index i = 0; i < n; ++i) {
            const auto& v = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            ds.features(i, j) = v ? *v : mean;
        }
    }

    // Integer targets keep their numeric order; anything else maps by first appearance.
    bool all_integer = true;
    for (const auto& t : targets) {
        if (!parse_integer<long long>(t)) {
            all_integer = false;
            break;
        }
    }
    std::vector<std::string> classes;
    if (all_integer) {
        std::vector<long long> values;
        for (const auto& t : targets) values.push_back(*parse_integer<long long>(t));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (auto v : values) classes.push_back(std::to_string(v));
        ds.labels.resize(n);
        for (Index i = 0; i < n; ++i) {
            const auto v = *parse_integer<long long>(targets[static_cast<std::size_t>(i)]);
            ds.labels[i] = static_cast<int>(std::lower_bound(values.begin(), values.end(), v) - values.begin());
        }
    } else {
        std::map<std::string, int> mapping;
        ds.labels.resize(n);
        for (Index i = 0; i < n; ++i) {
            const auto& t = targets[static_cast<std::size_t>(i)];
            auto [it, inserted] = mapping.try_emplace(t, static_cast<int>(classes.size()));
            if (inserted) classes.push_back(t);
            ds.labels[i] = it->second;
        }
    }
    if (classes.size() < 2) throw ValidationError("target column has fewer than 2 distinct classes");
    ds.n_classes = static_cast<int>(classes.size());
    ds.class_names = std::move(classes);
    ds.validate();
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path, const ColumnRef& target, NaPolicy na_policy)
{
    if (!std::filesystem::exists(path)) throw ValidationError("dataset file not found: " + path.string());
    return parse_dataset(read_file(path), target, na_policy);
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds, const std::string& target_name)
{
    std::string out;
    for (const auto& name : ds.feature_names) out += name + ",";
    out += target_name + "\n";
    for (Index i = 0; i < ds.size(); ++i) {
        for (Index j = 0; j < ds.n_features(); ++j) out += format_double(ds.features(i, j)) + ",";
        const auto label = ds.labels[i];
        out += static_cast<std::size_t>(label) < ds.class_names.size() ? ds.class_names[static_cast<std::size_t>(label)]
                                                                        : std::to_string(label);
        out += "\n";
    }
    write_file_atomic(path, out);
}

Matrix load_feature_rows(const std::filesystem::path& path, const std::vector<std::string>& feature_names)
{
    auto rows = parse_csv(read_file(path));
    if (rows.empty()) throw ValidationError("CSV has no header row: " + path.string());
    const auto& header = rows.front();
    std::vector<Index> cols;
    if (feature_names.empty()) {
        cols.resize(header.size());
        std::iota(cols.begin(), cols.end(), Index{0});
    } else {
        for (const auto& name : feature_names) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw ValidationError("feature column '" + name + "' missing from " + path.string());
            cols.push_back(static_cast<Index>(it - header.begin()));
        }
    }
    Matrix x(static_cast<Index>(rows.size()) - 1, static_cast<Index>(cols.size()));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) throw ValidationError("ragged CSV row " + std::to_string(r));
        for (std::size_t j = 0; j < cols.size(); ++j) {
            auto v = parse_number(rows[r][static_cast<std::size_t>(cols[j])]);
            if (!v || !std::isfinite(*v))
                throw ValidationError("non-finite or non-numeric feature value at row " + std::to_string(r));
            x(static_cast<Index>(r) - 1, static_cast<Index>(j)) = *v;
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Dynamics interchange

DynamicsLog parse_dynamics(std::string_view text)
{
    auto rows = parse_csv(text);
    if (rows.empty()) throw ValidationError("dynamics file is empty");
    const auto& header = rows.front();
    if (header.size() < 5 || header[0] != "example_id" || header[1] != "checkpoint" || header[2] != "label")
        throw ValidationError("dynamics header must start with example_id,checkpoint,label,p_0,p_1");
    Index k = 0;
    while (3 + k < static_cast<Index>(header.size()) && header[static_cast<std::size_t>(3 + k)] == "p_" + std::to_string(k)) ++k;
    const Index rest = static_cast<Index>(header.size()) - 3 - k;
    if (k < 2) throw ValidationError("dynamics header needs p_0..p_{K-1} with K >= 2");
    const bool has_logits = rest > 0;
    if (has_logits) {
        if (rest != k) throw ValidationError("dynamics header must have exactly K logit columns z_0..z_{K-1}");
        for (Index c = 0; c < k; ++c) {
            if (header[static_cast<std::size_t>(3 + k + c)] != "z_" + std::to_string(c))
                throw ValidationError("unexpected dynamics column '" + header[static_cast<std::size_t>(3 + k + c)] + "'");
        }
    }

    struct Row {
        Index id;
        Index checkpoint;
        int label;
        std::size_t src;
    };
    std::vector<Row> parsed;
    parsed.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) throw ValidationError("ragged dynamics row " + std::to_string(r));
        auto id = parse_integer<long long>(row[0]);
        auto ck = parse_integer<long long>(row[1]);
        auto lab = parse_integer<int>(row[2]);
        if (!id || !ck || !lab || *id < 0 || *ck < 0)
            throw ValidationError("dynamics row " + std::to_string(r) + ": example_id, checkpoint and label must be non-negative integers");
        parsed.push_back({static_cast<Index>(*id), static_cast<Index>(*ck), *lab, r});
    }
    std::sort(parsed.begin(), parsed.end(), [](const Row& a, const Row& b) {
        return std::tie(a.checkpoint, a.id) < std::tie(b.checkpoint, b.id);
    });
    std::vector<Index> ids;
    Index n_ck = 0;
    for (const auto& r : parsed) {
        ids.push_back(r.id);
        n_ck = std::max(n_ck, r.checkpoint + 1);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const Index n = static_cast<Index>(ids.size());
    if (n_ck < 2) throw ValidationError("dynamics log needs at least 2 checkpoints");
    for (std::size_t pos = 1; pos < parsed.size(); ++pos) {
        if (parsed[pos].checkpoint == parsed[pos - 1].checkpoint && parsed[pos].id == parsed[pos - 1].id)
            throw ValidationError("duplicate dynamics row for example " + std::to_string(parsed[pos].id) +
                                  " at checkpoint " + std::to_string(parsed[pos].checkpoint));
    }
    if (static_cast<Index>(parsed.size()) != n * n_ck) {
        std::size_t pos = 0;
        for (Index e = 0; e < n_ck; ++e) {
            for (Index id : ids) {
                if (pos < parsed.size() && parsed[pos].checkpoint == e && parsed[pos].id == id) {
                    ++pos;
                    continue;
                }
                throw ValidationError("ragged dynamics log: example " + std::to_string(id) + " missing at checkpoint " +
                                      std::to_string(e));
            }
        }
    }

    DynamicsLog log;
    log.example_ids = ids;
    log.labels.resize(n);
    log.probs.assign(static_cast<std::size_t>(n_ck), Matrix(n, k));
    if (has_logits) log.logits.emplace(static_cast<std::size_t>(n_ck), Matrix(n, k));
    for (std::size_t pos = 0; pos < parsed.size(); ++pos) {
        const auto& r = parsed[pos];
        const Index e = static_cast<Index>(pos) / n;
        const Index i = static_cast<Index>(pos) % n;
        if (r.checkpoint != e || r.id != ids[static_cast<std::size_t>(i)])
            throw ValidationError("ragged dynamics log: example " + std::to_string(ids[static_cast<std::size_t>(i)]) +
                                  " missing at checkpoint " + std::to_string(e));
        if (e == 0) log.labels[i] = r.label;
        else if (log.labels[i] != r.label)
            throw ValidationError("label of example " + std::to_string(r.id) + " changes between checkpoints");
        const auto& row = rows[r.src];
        for (Index c = 0; c < k; ++c) {
            auto p = parse_number(row[static_cast<std::size_t>(3 + c)]);
            if (!p) throw ValidationError("non-numeric probability in dynamics row " + std::to_string(r.src));
            log.probs[static_cast<std::size_t>(e)](i, c) = *p;
            if (has_logits) {
                auto z = parse_number(row[static_cast<std::size_t>(3 + k + c)]);
                if (!z) throw ValidationError("non-numeric logit in dynamics row " + std::to_string(r.src));
                (*log.logits)[static_cast<std::size_t>(e)](i, c) = *z;
            }
        }
        if (std::abs(log.probs[static_cast<std::size_t>(e)].row(i).sum() - 1.0) > 1e-6)
            throw ValidationError("probability row of example " + std::to_string(r.id) + " at checkpoint " +
                                  std::to_string(e) + " does not sum to 1");
    }
    log.validate();
    return log;
}

DynamicsLog load_dynamics(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw ValidationError("dynamics file not found: " + path.string());
    return parse_dynamics(read_file(path));
}

std::string format_dynamics(const DynamicsLog& log)
{
    const Index k = log.n_classes();
    std::string out = "example_id,checkpoint,label";
    for (Index c = 0; c < k; ++c) out += ",p_" + std::to_string(c);
    if (log.logits) {
        for (Index c = 0; c < k; ++c) out += ",z_" + std::to_string(c);
    }
    out += "\n";
    for (Index e = 0; e < log.n_checkpoints(); ++e) {
        for (Index i = 0; i < log.n_examples(); ++i) {
            out += std::to_string(log.example_ids[static_cast<std::size_t>(i)]) + "," + std::to_string(e) + "," +
                   std::to_string(log.labels[i]);
            for (Index c = 0; c < k; ++c) out += "," + format_double(log.probs[static_cast<std::size_t>(e)](i, c));
            if (log.logits) {
                for (Index c = 0; c < k; ++c) out += "," + format_double((*log.logits)[static_cast<std::size_t>(e)](i, c));
            }
            out += "\n";
        }
    }
    return out;
}

void write_dynamics(const std::filesystem::path& path, const DynamicsLog& log)
{
    write_file_atomic(path, format_dynamics(log));
}

// ---------------------------------------------------------------------------
// Synthetic generators

PlantedDataset generate_collision_dataset(Index n, Index d, double collision_rate, double noise_rate,
                                          std::uint64_t seed, const CollisionOptions& opts)
{
    if (n < 2 || d < 1) throw ValidationError("collision dataset needs n >= 2 and d >= 1");
    if (collision_rate < 0 || collision_rate > 1 || noise_rate < 0 || noise_rate > 1)
        throw ValidationError("collision and noise rates must lie in [0,1]");
    if (collision_rate + noise_rate > 1) throw ValidationError("collision_rate + noise_rate exceeds 1");

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Index n_amb = static_cast<Index>(std::llround(collision_rate * static_cast<double>(n)));
    const Index n_hard = std::min(n - n_amb, static_cast<Index>(std::llround(noise_rate * static_cast<double>(n))));
    const Index n_easy = n - n_amb - n_hard;

    Matrix x(n, d);
    IntVector y(n);
    std::vector<Group> planted(static_cast<std::size_t>(n));
    const double half = opts.separation / 2.0;

    auto blob_point = [&](Index row, int cls) {
        for (Index j = 0; j < d; ++j) x(row, j) = gauss(rng);
        x(row, 0) += cls == 0 ? -half : half;
    };

    Index row = 0;
    for (Index i = 0; i < n_easy; ++i, ++row) {
        const int cls = static_cast<int>(i % 2);
        blob_point(row, cls);
        y[row] = cls;
        planted[static_cast<std::size_t>(row)] = Group::Easy;
    }
    // Each base point is followed by exact copies carrying the opposite label.
    const Index n_base = (n_amb + 1) / 2;
    const Index amb_begin = row;
    for (Index i = 0; i < n_amb; ++i, ++row) {
        if (i < n_base) {
            for (Index j = 0; j < d; ++j) x(row, j) = opts.ambiguous_spread * gauss(rng);
            x(row, 0) += opts.ambiguous_shift;
            if (d > 1) x(row, 1) += opts.ambiguous_offset;
            y[row] = static_cast<int>(i % 2);
        } else {
            const Index src = amb_begin + (i - n_base) % n_base;
            x.row(row) = x.row(src);
            y[row] = 1 - y[src];
        }
        planted[static_cast<std::size_t>(row)] = Group::Ambiguous;
    }
    for (Index i = 0; i < n_hard; ++i, ++row) {
        const int cls = static_cast<int>(i % 2);
        blob_point(row, cls);
        y[row] = 1 - cls;
        planted[static_cast<std::size_t>(row)] = Group::Hard;
    }

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);

    PlantedDataset out;
    out.data.features.resize(n, d);
    out.data.labels.resize(n);
    out.planted.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Index src = perm[static_cast<std::size_t>(i)];
        out.data.features.row(i) = x.row(src);
        out.data.labels[i] = y[src];
        out.planted[static_cast<std::size_t>(i)] = planted[static_cast<std::size_t>(src)];
    }
    for (Index j = 0; j < d; ++j) out.data.feature_names.push_back("x" + std::to_string(j));
    out.data.n_classes = 2;
    out.data.class_names = {"0", "1"};
    return out;
}

PlantedDataset generate_cell_dataset(Index n, Index n_cells, double random_cell_fraction, std::uint64_t seed)
{
    if (n < 2 || n_cells < 2) throw ValidationError("cell dataset needs n >= 2 and at least 2 cells");
    if (random_cell_fraction < 0 || random_cell_fraction > 1) throw ValidationError("random_cell_fraction must lie in [0,1]");
    Rng rng(seed);
    std::uniform_int_distribution<Index> cell_dist(0, n_cells - 1);
    std::bernoulli_distribution coin(0.5);
    const Index n_random = static_cast<Index>(std::llround(random_cell_fraction * static_cast<double>(n_cells)));

    PlantedDataset out;
    out.data.features = Matrix::Zero(n, n_cells);
    out.data.labels.resize(n);
    out.planted.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Index cell = cell_dist(rng);
        out.data.features(i, cell) = 1.0;
        const bool random_cell = cell < n_random;
        out.data.labels[i] = random_cell ? static_cast<int>(coin(rng)) : static_cast<int>(cell % 2);
        out.planted[static_cast<std::size_t>(i)] = random_cell ? Group::Ambiguous : Group::Easy;
    }
    for (Index j = 0; j < n_cells; ++j) out.data.feature_names.push_back("cell_" + std::to_string(j));
    out.data.n_classes = 2;
    out.data.class_names = {"0", "1"};
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::vector<std::vector<Index>> members_by_class(const IntVector& labels)
{
    const int k = labels.size() ? labels.maxCoeff() + 1 : 0;
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(std::max(k, 0)));
    for (Index i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    return members;
}

} // namespace

DatasetSplit split_dataset(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed)
{
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    }
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw ValidationError("split fractions must sum to 1");
    if (fractions[0] <= 0.0) throw ValidationError("train fraction must be positive");
    const int n_parts = static_cast<int>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0.0; }));

    Rng rng(seed);
    DatasetSplit split;
    auto members = members_by_class(ds.labels);
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& m = members[c];
        if (m.empty()) continue;
        if (static_cast<int>(m.size()) < n_parts)
            throw ValidationError("class " + std::to_string(c) + " has fewer examples than split parts");
        std::shuffle(m.begin(), m.end(), rng);
        const auto size = static_cast<double>(m.size());
        Index n_val = static_cast<Index>(std::llround(fractions[1] * size));
        Index n_test = static_cast<Index>(std::llround(fractions[2] * size));
        if (fractions[1] > 0.0) n_val = std::max<Index>(n_val, 1);
        if (fractions[2] > 0.0) n_test = std::max<Index>(n_test, 1);
        Index n_train = static_cast<Index>(m.size()) - n_val - n_test;
        if (n_train < 1) {
            // Rounding up both held-out parts can starve train; take back from the larger one.
            if (n_val >= n_test) --n_val;
            else --n_test;
            n_train = 1;
        }
        auto it = m.begin();
        split.train_idx.insert(split.train_idx.end(), it, it + n_train);
        it += n_train;
        split.val_idx.insert(split.val_idx.end(), it, it + n_val);
        it += n_val;
        split.test_idx.insert(split.test_idx.end(), it, it + n_test);
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.val_idx.begin(), split.val_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
    return split;
}

std::vector<Index> stratified_subsample(const IntVector& labels, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("subsample fraction must lie in (0,1]");
    std::vector<Index> out;
    if (fraction == 1.0) {
        out.resize(static_cast<std::size_t>(labels.size()));
        std::iota(out.begin(), out.end(), Index{0});
        return out;
    }
    Rng rng(seed);
    for (auto& m : members_by_class(labels)) {
        if (m.empty()) continue;
        std::shuffle(m.begin(), m.end(), rng);
        const auto take = std::max<Index>(1, static_cast<Index>(std::llround(fraction * static_cast<double>(m.size()))));
        out.insert(out.end(), m.begin(), m.begin() + take);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace dataiq
