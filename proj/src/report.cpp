#include "dataiq/report.hpp"

#include "dataiq/data.hpp"

#include <cmath>

namespace dataiq {

namespace {

template <class Derived>
Json vector_json(const Eigen::DenseBase<Derived>& v)
{
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector real_column(const Json& j, const char* name)
{
    const auto& a = j.at(name);
    Vector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<double>();
    return v;
}

IntVector int_column(const Json& j, const char* name)
{
    const auto& a = j.at(name);
    IntVector v(static_cast<Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Index>(i)] = a[i].get<int>();
    return v;
}

Matrix matrix_from_json(const Json& rows, Index cols)
{
    Matrix m(static_cast<Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != cols) throw ValidationError("ragged matrix in report");
        for (Index c = 0; c < cols; ++c) m(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Json matrix_json(const Matrix& m)
{
    Json out = Json::array();
    for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r)));
    return out;
}

} // namespace

Json to_json(const MetricsTable& m)
{
    Json j;
    j["example_ids"] = m.example_ids;
    j["labels"] = vector_json(m.labels);
    j["confidence"] = vector_json(m.confidence);
    j["aleatoric"] = vector_json(m.aleatoric);
    j["epistemic"] = vector_json(m.epistemic);
    if (m.aum) j["aum"] = vector_json(*m.aum);
    if (m.grand_norm) j["grand_norm"] = vector_json(*m.grand_norm);
    if (m.error_count) j["error_count"] = vector_json(*m.error_count);
    if (m.correct) j["correct"] = vector_json(*m.correct);
    return j;
}

MetricsTable metrics_from_json(const Json& j)
{
    try {
        MetricsTable m;
        m.example_ids = j.at("example_ids").get<std::vector<Index>>();
        m.labels = int_column(j, "labels");
        m.confidence = real_column(j, "confidence");
        m.aleatoric = real_column(j, "aleatoric");
        m.epistemic = real_column(j, "epistemic");
        if (j.contains("aum")) m.aum = real_column(j, "aum");
        if (j.contains("grand_norm")) m.grand_norm = real_column(j, "grand_norm");
        if (j.contains("error_count")) m.error_count = int_column(j, "error_count");
        if (j.contains("correct")) m.correct = int_column(j, "correct");
        m.validate();
        return m;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed metrics block: ") + e.what());
    }
}

Json to_json(const GroupAssignment& g)
{
    Json labels = Json::array();
    for (Group x : g.groups) labels.push_back(std::string(to_string(x)));
    return {{"labels", labels},
            {"c_up", g.c_up},
            {"c_low", g.c_low},
            {"aleatoric_cutoff", g.aleatoric_cutoff},
            {"aleatoric_percentile", g.aleatoric_percentile}};
}

GroupAssignment groups_from_json(const Json& j)
{
    try {
        GroupAssignment g;
        for (const auto& s : j.at("labels")) g.groups.push_back(group_from_string(s.get<std::string>()));
        g.c_up = j.at("c_up").get<double>();
        g.c_low = j.at("c_low").get<double>();
        g.aleatoric_cutoff = j.at("aleatoric_cutoff").get<double>();
        g.aleatoric_percentile = j.value("aleatoric_percentile", kDefaultAleatoricPercentile);
        if (!(g.c_low < g.c_up)) throw ValidationError("groups block has c_low >= c_up");
        return g;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed groups block: ") + e.what());
    }
}

Json to_json(const Embedder& e)
{
    Json j;
    j["kind"] = std::string(to_string(e.kind));
    j["n_inputs"] = e.n_inputs;
    j["kept"] = e.kept;
    j["mean"] = vector_json(e.mean);
    j["scale"] = vector_json(e.scale);
    j["components"] = matrix_json(e.components);
    j["explained_variance_ratio"] = vector_json(e.explained_variance_ratio);
    j["warnings"] = e.warnings;
    return j;
}

Embedder embedder_from_json(const Json& j)
{
    try {
        Embedder e;
        e.kind = embed_kind_from_string(j.at("kind").get<std::string>());
        e.n_inputs = j.at("n_inputs").get<Index>();
        e.kept = j.at("kept").get<std::vector<Index>>();
        e.mean = real_column(j, "mean");
        e.scale = real_column(j, "scale");
        e.components = matrix_from_json(j.at("components"), static_cast<Index>(e.kept.size()));
        e.explained_variance_ratio = real_column(j, "explained_variance_ratio");
        e.warnings = j.value("warnings", std::vector<std::string>{});
        if (e.kind != EmbedKind::identity &&
            (e.mean.size() != static_cast<Index>(e.kept.size()) || e.scale.size() != e.mean.size()))
            throw ValidationError("embedder mean/scale length differs from kept columns");
        for (Index c : e.kept)
            if (c < 0 || c >= e.n_inputs) throw ValidationError("embedder column out of range");
        if (e.kind == EmbedKind::pca && e.components.rows() < 1) throw ValidationError("pca embedder has no components");
        return e;
    } catch (const Json::exception& ex) {
        throw ValidationError(std::string("malformed embedder: ") + ex.what());
    }
}

Json to_json(const GroupIndex& idx)
{
    Json flags = Json::array();
    for (bool b : idx.is_ambiguous) flags.push_back(b ? 1 : 0);
    return {{"embedder", to_json(idx.embedder)},
            {"k_nn", idx.k_nn},
            {"points", matrix_json(idx.points)},
            {"is_ambiguous", flags}};
}

GroupIndex index_from_json(const Json& j)
{
    try {
        GroupIndex idx;
        idx.embedder = embedder_from_json(j.at("embedder"));
        idx.k_nn = j.at("k_nn").get<int>();
        idx.points = matrix_from_json(j.at("points"), idx.embedder.output_dim());
        for (const auto& f : j.at("is_ambiguous")) idx.is_ambiguous.push_back(f.get<int>() != 0);
        idx.validate();
        return idx;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed inference index: ") + e.what());
    }
}

Json to_json(const Report& r)
{
    Json j;
    j["meta"] = r.meta;
    j["metrics"] = r.metrics ? to_json(*r.metrics) : Json();
    j["groups"] = r.groups ? to_json(*r.groups) : Json();
    j["analyses"] = r.analyses;
    return j;
}

Report report_from_json(const Json& j)
{
    if (!j.is_object()) throw ValidationError("report must be a JSON object");
    for (const char* key : {"meta", "metrics", "groups", "analyses"})
        if (!j.contains(key)) throw ValidationError(std::string("report is missing '") + key + "'");
    Report r;
    r.meta = j.at("meta");
    if (!j.at("metrics").is_null()) r.metrics = metrics_from_json(j.at("metrics"));
    if (!j.at("groups").is_null()) r.groups = groups_from_json(j.at("groups"));
    r.analyses = j.at("analyses");
    if (r.metrics && r.groups && r.metrics->size() != r.groups->size())
        throw ValidationError("metrics and groups blocks differ in length");
    return r;
}

std::string format_report(const Report& r)
{
    return to_json(r).dump(2) + "\n";
}

Report parse_report(std::string_view text)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("report is not valid JSON: ") + e.what());
    }
    return report_from_json(j);
}

void write_report(const std::filesystem::path& path, const Report& r)
{
    write_file_atomic(path, format_report(r));
}

Report read_report(const std::filesystem::path& path)
{
    return parse_report(read_file(path));
}

Json make_table(const std::vector<std::string>& columns, const std::vector<Json>& rows)
{
    for (const auto& row : rows)
        if (!row.is_array() || row.size() != columns.size()) throw InvariantError("table row width differs from header");
    return {{"columns", columns}, {"rows", rows}};
}

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string table_to_csv(const Json& table)
{
    std::string out;
    const auto& cols = table.at("columns");
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + csv_field(cols[i].get<std::string>());
    out += "\n";
    for (const auto& row : table.at("rows")) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            const auto& v = row[i];
            if (v.is_number_float()) out += format_double(v.get<double>());
            else if (v.is_string()) out += csv_field(v.get<std::string>());
            else if (v.is_null()) out += "";
            else out += v.dump();
        }
        out += "\n";
    }
    return out;
}

} // namespace dataiq
