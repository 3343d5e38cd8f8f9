#include "dataiq/cli.hpp"

#include "dataiq/analysis.hpp"
#include "dataiq/data.hpp"
#include "dataiq/experiments.hpp"
#include "dataiq/inference.hpp"
#include "dataiq/report.hpp"
#include "dataiq/rng.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace dataiq::cli {

std::string sha256_hex(std::string_view bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw InvariantError("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

namespace {

namespace fs = std::filesystem;

struct Args {
    std::string data;
    std::string target = "target";
    std::string na_policy = "reject";
    std::string dynamics;
    std::string model = "mlp";
    std::string hidden = "64,32";
    int rounds = 50;
    int depth = 3;
    double shrinkage = 0.1;
    int epochs = 20;
    double lr = 0.05;
    int batch = 64;
    std::uint64_t seed = 0;
    int patience = 0;
    int checkpoint_interval = 0;
    std::string split = "0.8,0.1,0.1";
    double cup = kDefaultConfidenceUpper;
    double clow = kDefaultConfidenceLower;
    double percentile = kDefaultAleatoricPercentile;
    bool auto_threshold = false;
    int knn = 5;
    std::string embed = "standardize";
    int components = 2;
    std::string out = ".";
    bool plot = false;

    std::string test;
    std::string index;
    std::string report;
    std::string specs;
    std::string metrics = "aleatoric,epistemic,aum,error_count";
    std::string order;
    std::string grid;
    std::string fractions;
    std::string subset = "ambiguous";
    std::string score = "aleatoric";
    std::string names;
    std::string train_data;
    double lambda = 5.0;
    int kmin = 2;
    int kmax = 10;
    std::vector<std::string> reports;
};

/// Binds options to an Args field and remembers how to read the resolved value back.
class Binder {
public:
    Binder(CLI::App* app, Args& a) : app_(app), a_(a) {}

    template <class T>
    Binder& opt(const std::string& name, T Args::*field, const std::string& desc)
    {
        T& var = a_.*field;
        app_->add_option("--" + name, var, desc)->capture_default_str();
        entries_.push_back({name, [&var] { return Json(var); }});
        return *this;
    }

    Binder& flag(const std::string& name, bool Args::*field, const std::string& desc)
    {
        bool& var = a_.*field;
        app_->add_flag("--" + name, var, desc);
        entries_.push_back({name, [&var] { return Json(var); }});
        return *this;
    }

    Binder& positional(const std::string& name, std::vector<std::string> Args::*field, const std::string& desc)
    {
        auto& var = a_.*field;
        app_->add_option(name, var, desc)->required();
        entries_.push_back({name, [&var] { return Json(var); }});
        return *this;
    }

    Binder& training()
    {
        opt("data", &Args::data, "training CSV");
        opt("target", &Args::target, "target column name");
        opt("na-policy", &Args::na_policy, "reject, drop_rows or mean_impute");
        opt("model", &Args::model, "logistic, mlp or gbdt");
        opt("hidden", &Args::hidden, "comma-separated hidden layer widths (mlp)");
        opt("rounds", &Args::rounds, "boosting rounds (gbdt)");
        opt("depth", &Args::depth, "tree depth (gbdt)");
        opt("shrinkage", &Args::shrinkage, "boosting shrinkage (gbdt)");
        opt("epochs", &Args::epochs, "maximum epochs");
        opt("lr", &Args::lr, "SGD learning rate");
        opt("batch", &Args::batch, "mini-batch size");
        opt("patience", &Args::patience, "early-stopping patience in checkpoints, 0 disables");
        opt("checkpoint-interval", &Args::checkpoint_interval, "steps between checkpoints, 0 = every epoch");
        opt("split", &Args::split, "train,val,test fractions");
        return seed();
    }

    Binder& seed()
    {
        return opt("seed", &Args::seed, "master seed (DATAIQ_SEED overrides)");
    }

    Binder& stratify()
    {
        opt("cup", &Args::cup, "upper confidence threshold");
        opt("clow", &Args::clow, "lower confidence threshold");
        opt("percentile", &Args::percentile, "aleatoric percentile cutoff");
        return flag("auto-threshold", &Args::auto_threshold, "select thresholds at the stability knee");
    }

    Binder& embedding()
    {
        opt("embed", &Args::embed, "standardize or pca");
        return opt("components", &Args::components, "pca components");
    }

    Binder& output()
    {
        app_->add_option("--out", a_.out, "output directory")->capture_default_str();
        return *this;
    }

    Json manifest_args() const
    {
        Json j = Json::object();
        for (const auto& e : entries_) j[e.name] = e.read();
        return j;
    }

private:
    struct Entry {
        std::string name;
        std::function<Json()> read;
    };
    CLI::App* app_;
    Args& a_;
    std::vector<Entry> entries_;
};

std::vector<std::string> split_list(const std::string& s, char sep = ',')
{
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(item);
    return out;
}

double parse_real(const std::string& s, const std::string& what)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw ValidationError("bad " + what + " value '" + s + "'");
    return v;
}

int parse_int(const std::string& s, const std::string& what)
{
    const double v = parse_real(s, what);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ValidationError("bad " + what + " value '" + s + "'");
    return static_cast<int>(v);
}

std::vector<double> parse_reals(const std::string& s, const std::string& what)
{
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(parse_real(item, what));
    return out;
}

std::vector<int> parse_ints(const std::string& s, const std::string& what)
{
    std::vector<int> out;
    for (const auto& item : split_list(s)) out.push_back(parse_int(item, what));
    return out;
}

ModelSpec model_spec(const Args& a)
{
    ModelSpec spec;
    spec.kind = model_kind_from_string(a.model);
    if (spec.kind == ModelKind::mlp) spec.hidden_sizes = parse_ints(a.hidden, "--hidden");
    spec.n_rounds = a.rounds;
    spec.max_depth = a.depth;
    spec.shrinkage = a.shrinkage;
    spec.validate();
    return spec;
}

/// "mlp:64,32", "gbdt:50,3,0.1" or "logistic".
ModelSpec parse_spec(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
    ModelSpec spec;
    spec.kind = model_kind_from_string(kind);
    if (spec.kind == ModelKind::mlp) {
        spec.hidden_sizes = parse_ints(rest, "mlp spec");
    } else if (spec.kind == ModelKind::gbdt) {
        const auto p = split_list(rest);
        if (p.size() != 3) throw ValidationError("gbdt spec must read gbdt:rounds,depth,shrinkage");
        spec.n_rounds = parse_int(p[0], "gbdt rounds");
        spec.max_depth = parse_int(p[1], "gbdt depth");
        spec.shrinkage = parse_real(p[2], "gbdt shrinkage");
    }
    spec.validate();
    return spec;
}

TrainConfig train_config(const Args& a)
{
    TrainConfig cfg;
    cfg.seed = a.seed;
    cfg.epochs = a.epochs;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.early_stopping_patience = a.patience;
    if (a.checkpoint_interval > 0) cfg.checkpoint_interval = a.checkpoint_interval;
    cfg.validate();
    return cfg;
}

CharacterizeOptions characterize_options(const Args& a)
{
    CharacterizeOptions o;
    o.stratify.c_up = a.cup;
    o.stratify.c_low = a.clow;
    o.stratify.aleatoric_percentile = a.percentile;
    o.auto_threshold = a.auto_threshold;
    return o;
}

Dataset load_data(const Args& a, const std::string& path)
{
    if (path.empty()) throw ValidationError("--data is required");
    return load_dataset(path, a.target, na_policy_from_string(a.na_policy));
}

DatasetSplit make_split(const Args& a, const Dataset& ds)
{
    const auto f = parse_reals(a.split, "--split");
    if (f.size() != 3) throw ValidationError("--split needs three fractions");
    return split_dataset(ds, {f[0], f[1], f[2]}, derive_seed(a.seed, 1));
}

Json proportions_json(const std::array<double, 3>& p)
{
    return {{"easy", p[0]}, {"ambiguous", p[1]}, {"hard", p[2]}};
}

Json nullable(double v)
{
    return std::isnan(v) ? Json() : Json(v);
}

Json dataset_json(const Dataset& ds)
{
    return {{"n_examples", ds.size()},
            {"n_features", ds.n_features()},
            {"feature_names", ds.feature_names},
            {"class_names", ds.class_names}};
}

std::string metrics_csv(const MetricsTable& m, const GroupAssignment& g)
{
    std::string out = "example_id,label,confidence,aleatoric,epistemic";
    if (m.aum) out += ",aum";
    if (m.error_count) out += ",error_count";
    if (m.correct) out += ",correct";
    out += ",group\n";
    for (Index i = 0; i < m.size(); ++i) {
        out += std::to_string(m.example_ids[static_cast<std::size_t>(i)]) + "," + std::to_string(m.labels[i]) + "," +
               format_double(m.confidence[i]) + "," + format_double(m.aleatoric[i]) + "," +
               format_double(m.epistemic[i]);
        if (m.aum) out += "," + format_double((*m.aum)[i]);
        if (m.error_count) out += "," + std::to_string((*m.error_count)[i]);
        if (m.correct) out += "," + std::to_string((*m.correct)[i]);
        out += "," + std::string(to_string(g.groups[static_cast<std::size_t>(i)])) + "\n";
    }
    return out;
}

std::string fixed2(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// Scatter of (v_al, confidence) coloured by group with the envelope v_al = p(1 - p).
std::string characterization_svg(const MetricsTable& m, const GroupAssignment& g)
{
    const double w = 640, h = 480, left = 60, right = 20, top = 20, bottom = 50;
    const double pw = w - left - right, ph = h - top - bottom;
    auto sx = [&](double v) { return left + v / 0.25 * pw; };
    auto sy = [&](double p) { return top + (1.0 - p) * ph; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + fixed2(left) + "\" y=\"" + fixed2(top) + "\" width=\"" + fixed2(pw) + "\" height=\"" +
           fixed2(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
    svg += "<polyline fill=\"none\" stroke=\"#555555\" stroke-dasharray=\"4 3\" points=\"";
    for (int i = 0; i <= 200; ++i) {
        const double p = i / 200.0;
        svg += (i ? " " : "") + fixed2(sx(p * (1.0 - p))) + "," + fixed2(sy(p));
    }
    svg += "\"/>\n";
    static const std::map<Group, std::string> colour{
        {Group::Easy, "#2e8b57"}, {Group::Ambiguous, "#ff8c00"}, {Group::Hard, "#d62728"}};
    for (Index i = 0; i < m.size(); ++i) {
        svg += "<circle cx=\"" + fixed2(sx(m.aleatoric[i])) + "\" cy=\"" + fixed2(sy(m.confidence[i])) +
               "\" r=\"2\" fill=\"" + colour.at(g.groups[static_cast<std::size_t>(i)]) + "\" fill-opacity=\"0.6\"/>\n";
    }
    for (int t = 0; t <= 5; ++t) {
        const double v = 0.05 * t;
        svg += "<text x=\"" + fixed2(sx(v)) + "\" y=\"" + fixed2(h - bottom + 18) +
               "\" font-size=\"11\" text-anchor=\"middle\">" + fixed2(v) + "</text>\n";
        const double p = 0.2 * t;
        svg += "<text x=\"" + fixed2(left - 8) + "\" y=\"" + fixed2(sy(p) + 4) +
               "\" font-size=\"11\" text-anchor=\"end\">" + fixed2(p) + "</text>\n";
    }
    svg += "<text x=\"" + fixed2(left + pw / 2) + "\" y=\"" + fixed2(h - 10) +
           "\" font-size=\"13\" text-anchor=\"middle\">aleatoric uncertainty</text>\n";
    svg += "<text x=\"15\" y=\"" + fixed2(top + ph / 2) + "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 " +
           fixed2(top + ph / 2) + ")\">confidence</text>\n";
    int row = 0;
    for (auto g2 : {Group::Easy, Group::Ambiguous, Group::Hard}) {
        const double y = top + 15 + 16 * row++;
        svg += "<circle cx=\"" + fixed2(w - right - 90) + "\" cy=\"" + fixed2(y - 4) + "\" r=\"4\" fill=\"" +
               colour.at(g2) + "\"/><text x=\"" + fixed2(w - right - 80) + "\" y=\"" + fixed2(y) +
               "\" font-size=\"11\">" + std::string(to_string(g2)) + "</text>\n";
    }
    return svg + "</svg>\n";
}

/// Per-command state shared by the handlers.
struct Context {
    Args args;
    std::string command;
    fs::path out_dir;
    Json manifest;
    std::ostream* out = nullptr;
    std::vector<std::string> written;

    Report new_report() const
    {
        Report r;
        r.meta["tool"] = "dataiq";
        r.meta["command"] = command;
        r.meta["manifest"] = manifest;
        r.meta["config_hash"] = sha256_hex(manifest.dump());
        r.meta["seed"] = args.seed;
        return r;
    }

    void write(const std::string& name, std::string_view contents)
    {
        fs::create_directories(out_dir);
        write_file_atomic(out_dir / name, contents);
        written.push_back((out_dir / name).string());
    }

    void write_report(const Report& r)
    {
        write("report.json", format_report(r));
    }

    void write_table(const std::string& name, const Json& table)
    {
        write(name, table_to_csv(table));
    }
};

Json groups_summary(const GroupAssignment& g)
{
    return proportions_json(subgroup_proportions(g));
}

void add_model_meta(Report& r, const ModelSpec& spec, const TrainConfig& cfg)
{
    r.meta["model"] = {{"spec", spec.describe()},
                       {"epochs", cfg.epochs},
                       {"learning_rate", cfg.learning_rate},
                       {"batch_size", cfg.batch_size},
                       {"early_stopping_patience", cfg.early_stopping_patience}};
}

// ---------------------------------------------------------------------------

void cmd_characterize(Context& c)
{
    const Args& a = c.args;
    const auto opts = characterize_options(a);
    Report r = c.new_report();
    Characterization res;
    if (!a.dynamics.empty()) {
        r.meta["source"] = "external dynamics";
        const DynamicsLog log = load_dynamics(a.dynamics);
        r.meta["dynamics"] = {{"n_examples", log.n_examples()},
                              {"n_checkpoints", log.n_checkpoints()},
                              {"n_classes", log.n_classes()}};
        res = characterize(compute_metrics(log), opts);
    } else {
        r.meta["source"] = "trained";
        const Dataset ds = load_data(a, a.data);
        const DatasetSplit split = make_split(a, ds);
        const ModelSpec spec = model_spec(a);
        const TrainConfig cfg = train_config(a);
        auto tc = characterize(ds, split, spec, cfg, opts);
        res = tc.result;
        r.meta["dataset"] = dataset_json(ds);
        add_model_meta(r, spec, cfg);
        r.meta["model"]["n_checkpoints"] = tc.run.model.n_checkpoints();
        r.analyses["split"] = {{"train", split.train_idx.size()},
                               {"val", split.val_idx.size()},
                               {"test", split.test_idx.size()}};
        if (!split.val_idx.empty()) r.analyses["validation_accuracy"] = accuracy(tc.run.model, ds, split.val_idx);
        if (!split.test_idx.empty()) r.analyses["test_accuracy"] = accuracy(tc.run.model, ds, split.test_idx);

        const Matrix train_x = ds.subset(split.train_idx).features;
        const Embedder emb = fit_embedder(train_x, embed_kind_from_string(a.embed), a.components);
        Json index = to_json(build_index(emb, train_x, res.groups, a.knn));
        index["feature_names"] = ds.feature_names;
        r.analyses["inference_index"] = index;
    }
    r.analyses["proportions"] = groups_summary(res.groups);
    if (res.threshold_sweep) {
        std::vector<Json> rows;
        const auto& ts = *res.threshold_sweep;
        for (std::size_t i = 0; i < ts.grid.size(); ++i)
            rows.push_back({ts.grid[i], ts.proportions[i][0], ts.proportions[i][1], ts.proportions[i][2]});
        r.analyses["threshold_sweep"] = {{"table", make_table({"threshold", "easy", "ambiguous", "hard"}, rows)},
                                         {"selected", ts.selected},
                                         {"plateau_found", ts.plateau_found},
                                         {"warnings", ts.warnings}};
        c.write_table("threshold_sweep.csv", r.analyses["threshold_sweep"]["table"]);
    }
    r.metrics = res.metrics;
    r.groups = res.groups;
    c.write("metrics.csv", metrics_csv(res.metrics, res.groups));
    if (a.plot) c.write("characterization.svg", characterization_svg(res.metrics, res.groups));
    c.write_report(r);
    const auto p = subgroup_proportions(res.groups);
    *c.out << "characterized " << res.metrics.size() << " examples: easy " << format_double(p[0]) << ", ambiguous "
           << format_double(p[1]) << ", hard " << format_double(p[2]) << "\n";
}

void cmd_sweep(Context& c)
{
    const Args& a = c.args;
    const Dataset ds = load_data(a, a.data);
    const DatasetSplit split = make_split(a, ds);
    std::vector<ModelSpec> specs;
    for (const auto& s : split_list(a.specs, ';')) specs.push_back(parse_spec(s));
    if (specs.empty()) specs = default_sweep_specs();
    ParameterSweepOptions opts;
    opts.kinds.clear();
    for (const auto& k : split_list(a.metrics)) opts.kinds.push_back(metric_kind_from_string(k));
    opts.characterize = characterize_options(a);
    const TrainConfig cfg = train_config(a);
    const SweepResult res = run_parameterization_sweep(ds, split, specs, cfg, opts);

    Report r = c.new_report();
    r.meta["dataset"] = dataset_json(ds);
    std::vector<Json> runs;
    for (std::size_t i = 0; i < res.runs.size(); ++i) {
        const auto& run = res.runs[i];
        const auto p = subgroup_proportions(run.groups);
        runs.push_back({i, run.spec.describe(), run.cfg.seed, nullable(run.val_accuracy), p[0], p[1], p[2]});
    }
    std::vector<Json> rob;
    Json matrices = Json::object();
    for (const auto& [kind, summary] : res.robustness) {
        rob.push_back({std::string(to_string(kind)), summary.mean, summary.stddev});
        Json m = Json::array();
        for (Index i = 0; i < summary.matrix.rows(); ++i) {
            Json row = Json::array();
            for (Index j = 0; j < summary.matrix.cols(); ++j) row.push_back(summary.matrix(i, j));
            m.push_back(row);
        }
        matrices[std::string(to_string(kind))] = m;
    }
    rob.push_back({"group_overlap", res.overlap.mean, res.overlap.stddev});
    r.analyses["runs"] = make_table({"run", "spec", "seed", "val_accuracy", "easy", "ambiguous", "hard"}, runs);
    r.analyses["robustness"] = make_table({"metric", "mean_spearman", "std_spearman"}, rob);
    r.analyses["correlation_matrices"] = matrices;
    c.write_table("sweep_runs.csv", r.analyses["runs"]);
    c.write_table("robustness.csv", r.analyses["robustness"]);
    c.write_report(r);
    for (const auto& row : rob)
        *c.out << row[0].get<std::string>() << ": mean " << format_double(row[1].get<double>()) << "\n";
}

void cmd_acquire(Context& c)
{
    const Args& a = c.args;
    const Dataset ds = load_data(a, a.data);
    const DatasetSplit split = make_split(a, ds);
    std::vector<Index> order;
    for (const auto& name : split_list(a.order)) {
        auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), name);
        if (it == ds.feature_names.end()) throw ValidationError("unknown feature '" + name + "' in --order");
        order.push_back(static_cast<Index>(it - ds.feature_names.begin()));
    }
    const ModelSpec spec = model_spec(a);
    const TrainConfig cfg = train_config(a);
    const auto res = run_feature_acquisition(ds, split, spec, cfg, order, characterize_options(a));

    Report r = c.new_report();
    r.meta["dataset"] = dataset_json(ds);
    add_model_meta(r, spec, cfg);
    std::vector<Json> rows;
    for (std::size_t i = 0; i < res.steps.size(); ++i) {
        const auto& s = res.steps[i];
        rows.push_back({i + 1, ds.feature_names[static_cast<std::size_t>(s.feature_added)], s.proportions[0],
                        s.proportions[1], s.proportions[2], nullable(s.mean_aleatoric[0]),
                        nullable(s.mean_aleatoric[1]), nullable(s.mean_aleatoric[2])});
    }
    r.analyses["acquisition"] = make_table({"step", "feature_added", "easy", "ambiguous", "hard", "mean_aleatoric_easy",
                                            "mean_aleatoric_ambiguous", "mean_aleatoric_hard"},
                                           rows);
    r.analyses["warnings"] = res.warnings;
    if (!res.steps.empty()) {
        r.metrics = res.steps.back().result.metrics;
        r.groups = res.steps.back().result.groups;
    }
    c.write_table("acquisition.csv", r.analyses["acquisition"]);
    c.write_report(r);
    for (const auto& w : res.warnings) *c.out << "warning: " << w << "\n";
    *c.out << "acquired " << res.steps.size() << " features\n";
}

void cmd_sculpt(Context& c)
{
    const Args& a = c.args;
    if (a.test.empty()) throw ValidationError("--test is required");
    const Dataset train = load_data(a, a.data);
    const Dataset test = load_data(a, a.test);
    if (test.feature_names != train.feature_names) throw ValidationError("test CSV columns differ from the training CSV");
    const ModelSpec spec = model_spec(a);
    const TrainConfig cfg = train_config(a);
    const auto grid = a.grid.empty() ? default_sculpt_grid() : parse_reals(a.grid, "--grid");
    const auto res = run_sculpt(train, test, spec, cfg, grid, characterize_options(a));

    Report r = c.new_report();
    r.meta["dataset"] = dataset_json(train);
    add_model_meta(r, spec, cfg);
    std::vector<Json> rows;
    for (const auto& s : res.steps) rows.push_back({s.proportion, s.removed, s.test_accuracy});
    r.analyses["sculpt"] = make_table({"proportion", "removed", "test_accuracy"}, rows);
    r.analyses["n_ambiguous"] = res.n_ambiguous;
    r.metrics = res.baseline.metrics;
    r.groups = res.baseline.groups;
    c.write_table("sculpt.csv", r.analyses["sculpt"]);
    c.write_report(r);
    for (const auto& s : res.steps)
        *c.out << "p=" << format_double(s.proportion) << " removed " << s.removed << " accuracy "
               << format_double(s.test_accuracy) << "\n";
}

void cmd_robust(Context& c)
{
    const Args& a = c.args;
    const Dataset ds = load_data(a, a.data);
    const DatasetSplit split = make_split(a, ds);
    const ModelSpec spec = model_spec(a);
    const TrainConfig cfg = train_config(a);
    ComparisonOptions opts;
    opts.jtt_lambda = a.lambda;
    opts.characterize = characterize_options(a);
    opts.embed = embed_kind_from_string(a.embed);
    opts.components = a.components;
    opts.k_nn = a.knn;
    const auto res = run_robust_training_comparison(ds, split, spec, cfg, opts);

    Report r = c.new_report();
    r.meta["dataset"] = dataset_json(ds);
    add_model_meta(r, spec, cfg);
    std::vector<Json> rows;
    for (const auto& m : res.methods) {
        rows.push_back({m.method, "Overall", nullable(m.overall)});
        rows.push_back({m.method, "Ambiguous", nullable(m.ambiguous)});
        rows.push_back({m.method, "Rest", nullable(m.rest)});
    }
    r.analyses["comparison"] = make_table({"method", "subset", "accuracy"}, rows);
    Index flagged = 0;
    for (auto f : res.test_flags) flagged += f == TestGroup::Ambiguous;
    r.analyses["test_flagged_ambiguous"] = flagged;
    r.metrics = res.baseline.metrics;
    r.groups = res.baseline.groups;
    c.write_table("comparison.csv", r.analyses["comparison"]);
    c.write_report(r);
    for (const auto& m : res.methods)
        *c.out << m.method << ": overall " << format_double(m.overall) << "\n";
}

void cmd_samplesize(Context& c)
{
    const Args& a = c.args;
    const Dataset ds = load_data(a, a.data);
    const ModelSpec spec = model_spec(a);
    const TrainConfig cfg = train_config(a);
    const auto grid = a.fractions.empty() ? default_fraction_grid() : parse_reals(a.fractions, "--fractions");
    const auto res = run_sample_size_study(ds, spec, cfg, grid, characterize_options(a));

    Report r = c.new_report();
    r.meta["dataset"] = dataset_json(ds);
    add_model_meta(r, spec, cfg);
    std::vector<Json> rows;
    for (const auto& s : res) rows.push_back({s.fraction, s.n_examples, s.proportions[0], s.proportions[1], s.proportions[2]});
    r.analyses["sample_size"] = make_table({"fraction", "n_examples", "easy", "ambiguous", "hard"}, rows);
    c.write_table("sample_size.csv", r.analyses["sample_size"]);
    c.write_report(r);
    for (const auto& s : res)
        *c.out << "fraction " << format_double(s.fraction) << ": ambiguous " << format_double(s.proportions[1]) << "\n";
}

void cmd_compare(Context& c)
{
    const Args& a = c.args;
    if (a.reports.size() < 2) throw ValidationError("compare needs at least two reports");
    auto names = split_list(a.names);
    if (!names.empty() && names.size() != a.reports.size())
        throw ValidationError("--names must list one name per report");
    std::vector<std::pair<std::string, double>> entries;
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        const Report rep = read_report(a.reports[i]);
        if (!rep.groups) throw ValidationError(a.reports[i] + " carries no group assignment");
        std::string name = names.empty() ? fs::path(a.reports[i]).stem().string() : names[i];
        if (names.empty() && name == "report" && fs::path(a.reports[i]).has_parent_path())
            name = fs::path(a.reports[i]).parent_path().filename().string();
        entries.emplace_back(name, subgroup_proportions(*rep.groups)[0]);
    }
    const auto ranked = rank_datasets(entries);

    std::map<std::string, double> test_acc;
    const auto train_files = split_list(a.train_data);
    if (!train_files.empty()) {
        if (train_files.size() != a.reports.size()) throw ValidationError("--train-data must list one CSV per report");
        if (a.test.empty()) throw ValidationError("--train-data needs --test");
        const Dataset test = load_data(a, a.test);
        std::vector<Index> rows(static_cast<std::size_t>(test.size()));
        std::iota(rows.begin(), rows.end(), Index{0});
        const ModelSpec spec = model_spec(a);
        const TrainConfig cfg = train_config(a);
        for (std::size_t i = 0; i < train_files.size(); ++i) {
            const Dataset train = load_data(a, train_files[i]);
            if (train.feature_names != test.feature_names)
                throw ValidationError(train_files[i] + " columns differ from the test CSV");
            const auto run = train_with_checkpoints(train, DatasetSplit::all_train(train.size()), spec, cfg);
            test_acc[entries[i].first] = accuracy(run.model, test, rows);
        }
    }

    Report r = c.new_report();
    std::vector<Json> rows;
    for (const auto& e : ranked) {
        const std::string label =
            "Rank " + std::to_string(e.rank) + " (" + std::to_string(std::lround(100.0 * e.easy_fraction)) + "% Easy)";
        Json row = {e.rank, e.name, e.easy_fraction, label};
        row.push_back(test_acc.count(e.name) ? Json(test_acc.at(e.name)) : Json());
        rows.push_back(row);
        *c.out << label << ": " << e.name;
        if (test_acc.count(e.name)) *c.out << " (test accuracy " << format_double(test_acc.at(e.name)) << ")";
        *c.out << "\n";
    }
    r.analyses["ranking"] = make_table({"rank", "dataset", "easy_fraction", "label", "test_accuracy"}, rows);
    c.write_table("ranking.csv", r.analyses["ranking"]);
    c.write_report(r);
}

void cmd_infer(Context& c)
{
    const Args& a = c.args;
    if (a.index.empty()) throw ValidationError("--index is required");
    if (a.data.empty()) throw ValidationError("--data is required");
    Json j;
    try {
        j = Json::parse(read_file(a.index));
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("index file is not valid JSON: ") + e.what());
    }
    if (j.contains("analyses")) {
        if (!j["analyses"].contains("inference_index")) throw ValidationError("report has no inference index");
        j = j["analyses"]["inference_index"];
    }
    GroupIndex idx = index_from_json(j);
    if (a.knn > 0) idx.k_nn = a.knn;
    idx.validate();
    const auto names = j.value("feature_names", std::vector<std::string>{});
    const Matrix x = load_feature_rows(a.data, names);
    const auto flags = assign_test_groups(idx, x);

    Report r = c.new_report();
    std::vector<Json> rows;
    Index amb = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        rows.push_back({i, std::string(to_string(flags[i]))});
        amb += flags[i] == TestGroup::Ambiguous;
    }
    r.analyses["flags"] = make_table({"row", "flag"}, rows);
    r.analyses["k_nn"] = idx.k_nn;
    r.analyses["n_ambiguous"] = amb;
    c.write_table("flags.csv", r.analyses["flags"]);
    c.write_report(r);
    *c.out << "flagged " << amb << " of " << flags.size() << " rows Ambiguous\n";
}

Json clustering_row(const std::string& name, Index n, const ClusteringResult& res)
{
    return {name, n, res.best_k, res.silhouette, res.davies_bouldin ? Json(*res.davies_bouldin) : Json(), res.weak};
}

void cmd_cluster(Context& c)
{
    const Args& a = c.args;
    if (a.report.empty()) throw ValidationError("--report is required");
    const Report rep = read_report(a.report);
    if (!rep.metrics || !rep.groups) throw ValidationError("report has no metrics/groups to cluster");
    const Dataset ds = load_data(a, a.data);
    for (Index id : rep.metrics->example_ids)
        if (id < 0 || id >= ds.size()) throw ValidationError("report example ids do not index into --data");
    const Dataset train = ds.subset(rep.metrics->example_ids);
    const Embedder emb = fit_embedder(train.features, embed_kind_from_string(a.embed), a.components);
    const Matrix points = emb.transform(train.features);

    const auto sub = cluster_subgroups(points, *rep.groups, a.kmin, a.kmax, derive_seed(a.seed, 3));
    const auto whole = cluster_points(points, a.kmin, a.kmax, derive_seed(a.seed, 4));

    Report r = c.new_report();
    std::vector<Json> rows;
    rows.push_back(clustering_row("All", points.rows(), whole));
    for (const auto& s : sub.subgroups)
        rows.push_back(clustering_row(std::string(to_string(s.group)), static_cast<Index>(s.members.size()), s.result));
    r.analyses["clusters"] = make_table({"subset", "n", "best_k", "silhouette", "davies_bouldin", "weak"}, rows);
    r.analyses["warnings"] = sub.warnings;
    c.write_table("clusters.csv", r.analyses["clusters"]);
    c.write_report(r);
    for (const auto& row : rows)
        *c.out << row[0].get<std::string>() << ": k=" << row[2].get<int>() << " silhouette "
               << format_double(row[3].get<double>()) << "\n";
}

void cmd_defer(Context& c)
{
    const Args& a = c.args;
    if (a.report.empty()) throw ValidationError("--report is required");
    const Report rep = read_report(a.report);
    if (!rep.metrics || !rep.groups) throw ValidationError("report has no metrics/groups");
    const MetricsTable& m = *rep.metrics;
    if (!m.correct) throw ValidationError("report metrics carry no correctness column");

    Vector score;
    if (a.score == "aleatoric") score = m.aleatoric;
    else if (a.score == "epistemic") score = m.epistemic;
    else if (a.score == "total") score = m.aleatoric + m.epistemic;
    else throw ValidationError("--score must be aleatoric, epistemic or total");

    std::vector<Index> subset;
    if (a.subset == "all") {
        subset.resize(static_cast<std::size_t>(m.size()));
        std::iota(subset.begin(), subset.end(), Index{0});
    } else {
        Group g = Group::Easy;
        if (a.subset == "easy") g = Group::Easy;
        else if (a.subset == "ambiguous") g = Group::Ambiguous;
        else if (a.subset == "hard") g = Group::Hard;
        else throw ValidationError("--subset must be all, easy, ambiguous or hard");
        subset = rep.groups->members(g);
    }
    if (subset.empty()) throw ValidationError("the selected subset is empty");
    const auto grid = a.grid.empty() ? default_deferral_grid() : parse_reals(a.grid, "--grid");
    const auto curve = deferral_curve(score, *m.correct, subset, grid);

    Report r = c.new_report();
    std::vector<Json> rows;
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
        rows.push_back({curve.thresholds[i], curve.kept[i], curve.accuracy[i]});
    r.analyses["deferral"] = make_table({"tau", "kept", "accuracy"}, rows);
    c.write_table("deferral.csv", r.analyses["deferral"]);
    c.write_report(r);
    for (const auto& row : rows)
        *c.out << "tau " << format_double(row[0].get<double>()) << ": accuracy " << format_double(row[2].get<double>())
               << "\n";
}

// ---------------------------------------------------------------------------

using Handler = void (*)(Context&);

struct CommandDef {
    const char* name;
    const char* help;
    Handler handler;
    void (*bind)(Binder&);
};

const std::vector<CommandDef>& commands()
{
    static const std::vector<CommandDef> defs{
        {"characterize", "train (or load dynamics) and stratify every example", cmd_characterize,
         [](Binder& b) {
             b.training().stratify().embedding();
             b.opt("dynamics", &Args::dynamics, "external dynamics CSV; skips training");
             b.opt("knn", &Args::knn, "neighbours for the inference index");
             b.flag("plot", &Args::plot, "write an SVG characterization map");
         }},
        {"sweep", "robustness of the metrics across model parameterizations", cmd_sweep,
         [](Binder& b) {
             b.training().stratify();
             b.opt("specs", &Args::specs, "';'-separated model specs, e.g. mlp:64,32;gbdt:50,3,0.1");
             b.opt("metrics", &Args::metrics, "metric kinds to compare");
         }},
        {"acquire", "feature acquisition in ascending correlation order", cmd_acquire,
         [](Binder& b) {
             b.training().stratify();
             b.opt("order", &Args::order, "explicit feature order (names)");
         }},
        {"sculpt", "retrain after removing Ambiguous examples", cmd_sculpt,
         [](Binder& b) {
             b.training().stratify();
             b.opt("test", &Args::test, "test CSV");
             b.opt("grid", &Args::grid, "removal proportions");
         }},
        {"robust", "ERM vs Group-DRO on Data-IQ groups vs JTT", cmd_robust,
         [](Binder& b) {
             b.training().stratify().embedding();
             b.opt("knn", &Args::knn, "neighbours for test-time flags");
             b.opt("lambda", &Args::lambda, "JTT upweighting factor");
         }},
        {"samplesize", "subgroup proportions as the dataset grows", cmd_samplesize,
         [](Binder& b) {
             b.training().stratify();
             b.opt("fractions", &Args::fractions, "dataset fractions");
         }},
        {"compare", "rank datasets by their Easy fraction", cmd_compare,
         [](Binder& b) {
             b.positional("reports", &Args::reports, "report files");
             b.opt("names", &Args::names, "display names, one per report");
             b.training();
             b.opt("train-data", &Args::train_data, "training CSVs, one per report");
             b.opt("test", &Args::test, "shared test CSV");
         }},
        {"infer", "flag new rows as Ambiguous or Other", cmd_infer,
         [](Binder& b) {
             b.opt("index", &Args::index, "report or index JSON");
             b.opt("data", &Args::data, "CSV of rows to flag");
             b.opt("knn", &Args::knn, "neighbours, 0 keeps the stored value");
         }},
        {"cluster", "GMM clustering within each subgroup", cmd_cluster,
         [](Binder& b) {
             b.opt("report", &Args::report, "characterize report");
             b.opt("data", &Args::data, "the CSV the report was built from");
             b.opt("target", &Args::target, "target column name");
             b.opt("na-policy", &Args::na_policy, "reject, drop_rows or mean_impute");
             b.opt("kmin", &Args::kmin, "smallest k");
             b.opt("kmax", &Args::kmax, "largest k");
             b.embedding().seed();
         }},
        {"defer", "accuracy of the least uncertain fraction of a subgroup", cmd_defer,
         [](Binder& b) {
             b.opt("report", &Args::report, "characterize report");
             b.opt("subset", &Args::subset, "all, easy, ambiguous or hard");
             b.opt("score", &Args::score, "aleatoric, epistemic or total");
             b.opt("grid", &Args::grid, "tau grid");
         }},
    };
    return defs;
}

const std::vector<std::string> kInputFlags{"data", "dynamics", "test", "index", "report"};

Json input_digests(const Json& args)
{
    Json out = Json::object();
    auto add = [&](const std::string& path) {
        if (!path.empty() && fs::is_regular_file(path)) out[path] = sha256_hex(read_file(path));
    };
    for (const auto& key : kInputFlags)
        if (args.contains(key)) add(args[key].get<std::string>());
    if (args.contains("train-data"))
        for (const auto& p : split_list(args["train-data"].get<std::string>())) add(p);
    if (args.contains("reports"))
        for (const auto& p : args["reports"]) add(p.get<std::string>());
    return out;
}

std::vector<std::string> manifest_argv(const Json& manifest)
{
    std::vector<std::string> argv{manifest.at("command").get<std::string>()};
    std::vector<std::string> positional;
    for (const auto& [key, value] : manifest.at("args").items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) argv.push_back("--" + key);
        } else if (value.is_array()) {
            for (const auto& v : value) positional.push_back(v.get<std::string>());
        } else if (value.is_string()) {
            if (!value.get<std::string>().empty()) argv.insert(argv.end(), {"--" + key, value.get<std::string>()});
        } else if (value.is_number_float()) {
            argv.insert(argv.end(), {"--" + key, format_double(value.get<double>())});
        } else {
            argv.insert(argv.end(), {"--" + key, value.dump()});
        }
    }
    argv.insert(argv.end(), positional.begin(), positional.end());
    return argv;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const RunOptions& ropts)
{
    CLI::App app{"Data-IQ: characterize tabular examples as Easy, Ambiguous or Hard", "dataiq"};
    app.require_subcommand(1);
    Context ctx;
    ctx.out = &out;
    std::vector<std::pair<CLI::App*, std::unique_ptr<Binder>>> subs;
    for (const auto& def : commands()) {
        auto* sub = app.add_subcommand(def.name, def.help);
        auto binder = std::make_unique<Binder>(sub, ctx.args);
        def.bind(*binder);
        binder->output();
        subs.emplace_back(sub, std::move(binder));
    }
    auto* rerun = app.add_subcommand("rerun", "replay the manifest embedded in a report");
    std::string rerun_report, rerun_out = ".";
    rerun->add_option("--report", rerun_report, "report to replay")->required();
    rerun->add_option("--out", rerun_out, "output directory")->capture_default_str();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    }

    if (rerun->parsed()) {
        const Report rep = read_report(rerun_report);
        if (!rep.meta.contains("manifest")) throw ValidationError("report carries no manifest");
        auto argv = manifest_argv(rep.meta["manifest"]);
        argv.insert(argv.end(), {"--out", rerun_out});
        return dispatch(argv, out, err, RunOptions{true});
    }

    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (!subs[i].first->parsed()) continue;
        const auto& def = commands()[i];
        if (!ropts.ignore_env) {
            if (const char* env = std::getenv("DATAIQ_SEED"); env && *env) {
                const std::string s(env);
                if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 19)
                    throw ValidationError("DATAIQ_SEED must be a non-negative integer");
                ctx.args.seed = std::stoull(s);
            }
        }
        ctx.command = def.name;
        ctx.out_dir = ctx.args.out;
        const Json manifest_args = subs[i].second->manifest_args();
        ctx.manifest = {{"command", def.name}, {"args", manifest_args}, {"inputs", input_digests(manifest_args)}};
        def.handler(ctx);
        for (const auto& w : ctx.written) out << "wrote " << w << "\n";
        return ok;
    }
    throw InvariantError("no subcommand selected");
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const RunOptions& opts)
{
    try {
        return dispatch(args, out, err, opts);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << " (checkpoint " << e.checkpoint() << ")\n";
        return numeric_error;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return numeric_error;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << "\n";
        return internal_error;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return internal_error;
    }
}

} // namespace dataiq::cli
