#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bleg/graphdata/brain_graph.hpp"

namespace bleg::graphdata {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path);
/// Creates parent directories as needed.
void write_text_file(const fs::path& path, const std::string& content);
nlohmann::json read_json_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);

/// T rows x N columns with a header row of region names.
void write_timeseries_csv(const fs::path& path, const TimeSeriesRecord& ts, const std::vector<std::string>& regions);
/// Returns the series; `regions` (if given) receives the header names.
TimeSeriesRecord read_timeseries_csv(const fs::path& path, std::vector<std::string>* regions = nullptr);

/// Plain N x N numeric CSV, no header.
void write_matrix_csv(const fs::path& path, const Tensor& m);
Tensor read_matrix_csv(const fs::path& path);

/// The packaged 90-region name table, one name per line.
std::vector<std::string> read_region_table(const fs::path& path);

struct ManifestEntry {
  std::string graph_file;  // relative to the manifest's directory
  int label = 0;
  std::string subject_id;
  std::string dataset;
  std::string task;
};

struct Dataset {
  std::string name;
  std::string task;
  std::vector<BrainGraph> graphs;

  [[nodiscard]] std::vector<int> labels() const;
  [[nodiscard]] std::size_t size() const { return graphs.size(); }
};

/// Writes graphs/<id>.json for each graph plus manifest.json; returns the
/// manifest path.
fs::path save_dataset(const fs::path& dir, const Dataset& ds);
/// Reads a manifest and every graph it lists; label and metadata must agree
/// with the graph file (ConsistencyError otherwise).
Dataset load_dataset(const fs::path& manifest_path);

}  // namespace bleg::graphdata
