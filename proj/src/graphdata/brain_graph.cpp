#include "bleg/graphdata/brain_graph.hpp"

#include <set>

#include "bleg/error.hpp"

namespace bleg::graphdata {

std::vector<Edge> BrainGraph::edges() const {
  std::vector<Edge> out;
  const std::size_t n = adjacency.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (adjacency(i, j) != 0.0) out.push_back({i, j});
  return out;
}

void validate(const BrainGraph& g) {
  const std::size_t n = g.regions.size();
  if (n == 0) throw ConsistencyError("graph '" + g.id + "' has no regions");
  if (g.adjacency.rank() != 2 || g.adjacency.rows() != n || g.adjacency.cols() != n) {
    throw ConsistencyError("graph '" + g.id + "': adjacency is not " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (g.node_features.rank() != 2 || g.node_features.rows() != n) {
    throw ConsistencyError("graph '" + g.id + "': node feature rows do not match region count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (g.adjacency(i, i) != 0.0) throw ConsistencyError("graph '" + g.id + "': nonzero adjacency diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      const double a = g.adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw ConsistencyError("graph '" + g.id + "': adjacency entries must be 0 or 1");
      if (a != g.adjacency(j, i)) throw ConsistencyError("graph '" + g.id + "': adjacency is not symmetric");
    }
  }
  std::set<std::string> unique(g.regions.begin(), g.regions.end());
  if (unique.size() != n) throw ConsistencyError("graph '" + g.id + "': region names are not unique");
  if (g.label != 0 && g.label != 1) throw ConsistencyError("graph '" + g.id + "': label must be 0 or 1");
}

TaskInfo task_info(const std::string& task) {
  static const std::vector<TaskInfo> known = {
      {"ASD diagnosis", {"HC", "ASD"}},
      {"ADHD diagnosis", {"HC", "ADHD"}},
      {"MDD diagnosis", {"HC", "MDD"}},
      {"Gender classification", {"Male", "Female"}},
  };
  for (const auto& t : known) {
    if (t.name == task) return t;
  }
  throw ConfigurationError("unknown task '" + task + "'");
}

const std::vector<std::string>& aal90_regions() {
  static const std::vector<std::string> names = [] {
    const char* stems[] = {
        "Precentral",        "Frontal_Sup",       "Frontal_Sup_Orb", "Frontal_Mid",     "Frontal_Mid_Orb",
        "Frontal_Inf_Oper",  "Frontal_Inf_Tri",   "Frontal_Inf_Orb", "Rolandic_Oper",   "Supp_Motor_Area",
        "Olfactory",         "Frontal_Sup_Medial", "Frontal_Med_Orb", "Rectus",          "Insula",
        "Cingulum_Ant",      "Cingulum_Mid",      "Cingulum_Post",   "Hippocampus",     "ParaHippocampal",
        "Amygdala",          "Calcarine",         "Cuneus",          "Lingual",         "Occipital_Sup",
        "Occipital_Mid",     "Occipital_Inf",     "Fusiform",        "Postcentral",     "Parietal_Sup",
        "Parietal_Inf",      "SupraMarginal",     "Angular",         "Precuneus",       "Paracentral_Lobule",
        "Caudate",           "Putamen",           "Pallidum",        "Thalamus",        "Heschl",
        "Temporal_Sup",      "Temporal_Pole_Sup", "Temporal_Mid",    "Temporal_Pole_Mid", "Temporal_Inf",
    };
    std::vector<std::string> out;
    for (const char* stem : stems) {
      out.push_back(std::string(stem) + "_L");
      out.push_back(std::string(stem) + "_R");
    }
    return out;
  }();
  return names;
}

std::vector<std::string> region_names(std::size_t n) {
  const auto& aal = aal90_regions();
  if (n <= aal.size()) return {aal.begin(), aal.begin() + static_cast<std::ptrdiff_t>(n)};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back("ROI_" + std::to_string(k + 1));
  return out;
}

namespace {

nlohmann::json matrix_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row_span(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Tensor matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  if (rows == 0) throw FormatError("empty matrix in graph JSON");
  const std::size_t cols = j[0].size();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (row.size() != cols) throw FormatError("ragged matrix in graph JSON");
    for (const auto& v : row) data.push_back(v.get<double>());
  }
  return Tensor({rows, cols}, std::move(data));
}

}  // namespace

nlohmann::json to_json(const BrainGraph& g) {
  return {{"id", g.id},
          {"label", g.label},
          {"dataset", g.meta.dataset},
          {"task", g.meta.task},
          {"regions", g.regions},
          {"node_features", matrix_json(g.node_features)},
          {"adjacency", matrix_json(g.adjacency)}};
}

BrainGraph graph_from_json(const nlohmann::json& j) {
  try {
    BrainGraph g;
    g.id = j.at("id").get<std::string>();
    g.label = j.at("label").get<int>();
    g.meta.dataset = j.at("dataset").get<std::string>();
    g.meta.task = j.at("task").get<std::string>();
    g.regions = j.at("regions").get<std::vector<std::string>>();
    g.node_features = matrix_from_json(j.at("node_features"));
    g.adjacency = matrix_from_json(j.at("adjacency"));
    validate(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace bleg::graphdata
