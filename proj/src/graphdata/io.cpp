#include "bleg/graphdata/io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::graphdata {

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

nlohmann::json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const fs::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || s.find_first_not_of(" \t\r", used) != std::string::npos) {
    throw FormatError(fmt::format("{}:{}: '{}' is not a number", path.string(), line, s));
  }
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string format_row(std::span<const double> row) {
  std::string out;
  for (std::size_t c = 0; c < row.size(); ++c) {
    if (c) out += ',';
    out += fmt::format("{:.17g}", row[c]);
  }
  return out;
}

Tensor parse_rows(const std::vector<std::string>& lines, std::size_t first, const fs::path& path) {
  const std::size_t rows = lines.size() - first;
  if (rows == 0) throw FormatError("'" + path.string() + "' has no data rows");
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r]);
    if (r == first) cols = cells.size();
    if (cells.size() != cols) {
      throw FormatError(fmt::format("{}:{}: expected {} columns, found {}", path.string(), r + 1, cols, cells.size()));
    }
    for (const auto& cell : cells) data.push_back(parse_number(cell, path, r + 1));
  }
  return Tensor({rows, cols}, std::move(data));
}

}  // namespace

void write_timeseries_csv(const fs::path& path, const TimeSeriesRecord& ts, const std::vector<std::string>& regions) {
  if (regions.size() != ts.samples.cols()) throw ConsistencyError("region header does not match series width");
  std::string out;
  for (std::size_t c = 0; c < regions.size(); ++c) {
    if (c) out += ',';
    out += regions[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < ts.samples.rows(); ++r) out += format_row(ts.samples.row_span(r)) + '\n';
  write_text_file(path, out);
}

TimeSeriesRecord read_timeseries_csv(const fs::path& path, std::vector<std::string>* regions) {
  const auto lines = lines_of(read_text_file(path));
  if (lines.empty()) throw FormatError("'" + path.string() + "' is empty");
  const auto header = split_csv_line(lines[0]);
  TimeSeriesRecord ts;
  ts.subject_id = path.stem().string();
  ts.samples = parse_rows(lines, 1, path);
  if (ts.samples.cols() != header.size()) throw FormatError("'" + path.string() + "': header width mismatch");
  if (regions) *regions = header;
  return ts;
}

void write_matrix_csv(const fs::path& path, const Tensor& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) out += format_row(m.row_span(r)) + '\n';
  write_text_file(path, out);
}

Tensor read_matrix_csv(const fs::path& path) { return parse_rows(lines_of(read_text_file(path)), 0, path); }

std::vector<std::string> read_region_table(const fs::path& path) { return lines_of(read_text_file(path)); }

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(g.label);
  return out;
}

fs::path save_dataset(const fs::path& dir, const Dataset& ds) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.graphs.size(); ++k) {
    const auto& g = ds.graphs[k];
    const std::string file = "graphs/" + (g.id.empty() ? fmt::format("graph-{:04}", k) : g.id) + ".json";
    write_text_file(dir / file, to_json(g).dump() + "\n");
    entries.push_back({{"graph", file},
                       {"label", g.label},
                       {"subject_id", g.id},
                       {"dataset", g.meta.dataset},
                       {"task", g.meta.task}});
  }
  const fs::path manifest = dir / "manifest.json";
  write_json_file(manifest, {{"dataset", ds.name}, {"task", ds.task}, {"entries", entries}});
  return manifest;
}

Dataset load_dataset(const fs::path& manifest_path) {
  const auto j = read_json_file(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    ds.name = j.at("dataset").get<std::string>();
    ds.task = j.at("task").get<std::string>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry{e.at("graph").get<std::string>(), e.at("label").get<int>(),
                          e.value("subject_id", std::string{}), e.value("dataset", ds.name),
                          e.value("task", ds.task)};
      BrainGraph g = graph_from_json(read_json_file(base / entry.graph_file));
      if (g.label != entry.label) {
        throw ConsistencyError("manifest label for '" + entry.graph_file + "' disagrees with the graph file");
      }
      if (g.meta.dataset != entry.dataset || g.meta.task != entry.task) {
        throw ConsistencyError("manifest metadata for '" + entry.graph_file + "' disagrees with the graph file");
      }
      ds.graphs.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (ds.graphs.empty()) throw InsufficientDataError("manifest '" + manifest_path.string() + "' lists no graphs");
  return ds;
}

}  // namespace bleg::graphdata
