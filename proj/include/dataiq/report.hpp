#pragma once
#include "dataiq/analysis.hpp"
#include "dataiq/dynamics.hpp"
#include "dataiq/inference.hpp"
#include "dataiq/stratify.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace dataiq {

using Json = nlohmann::json;

/// One run's output: metadata, the metrics table, the group assignment and
/// any number of named analysis tables. Serialized with sorted keys so equal
/// reports are equal bytes.
struct Report {
    Json meta = Json::object();
    std::optional<MetricsTable> metrics;
    std::optional<GroupAssignment> groups;
    Json analyses = Json::object();
};

Json to_json(const MetricsTable& m);
MetricsTable metrics_from_json(const Json& j);

Json to_json(const GroupAssignment& g);
GroupAssignment groups_from_json(const Json& j);

Json to_json(const Embedder& e);
Embedder embedder_from_json(const Json& j);

Json to_json(const GroupIndex& idx);
GroupIndex index_from_json(const Json& j);

Json to_json(const Report& r);
Report report_from_json(const Json& j);

std::string format_report(const Report& r);
Report parse_report(std::string_view text);
void write_report(const std::filesystem::path& path, const Report& r);
Report read_report(const std::filesystem::path& path);

/// A table as {"columns": [...], "rows": [[...], ...]}.
Json make_table(const std::vector<std::string>& columns, const std::vector<Json>& rows);
/// CSV rendering of a make_table() value.
std::string table_to_csv(const Json& table);

} // namespace dataiq
