#include "bleg/promptgen/prompt.hpp"

#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "bleg/error.hpp"

namespace bleg::promptgen {

namespace {

const char* kFeaturePrefix = "Node mean features: ";

// fmt prints -0.00 for tiny negatives; the prompt should not.
std::string fixed2(double v) {
  std::string s = fmt::format("{:.2f}", v);
  if (s == "-0.00") s = "0.00";
  return s;
}

}  // namespace

std::string serialize_graph(const BrainGraph& g, const Tensor& weights) {
  const std::size_t n = g.num_nodes();
  if (weights.rank() != 2 || weights.rows() != n || weights.cols() != n) {
    throw ConsistencyError(fmt::format("weight matrix {} does not align with a {}-node graph", weights.shape_string(), n));
  }
  if (g.adjacency.rows() != n || g.node_features.rows() != n) {
    throw ConsistencyError("graph '" + g.id + "' adjacency or features do not match its region count");
  }
  std::string out;
  for (const auto& e : g.edges()) out += fmt::format("Node[{}]-{}-Node[{}]\n", e.i, fixed2(weights(e.i, e.j)), e.j);
  out += kFeaturePrefix;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = g.node_features.row_span(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    if (r) out += ", ";
    out += fixed2(mean);
  }
  return out;
}

std::string serialize_graph(const BrainGraph& g) { return serialize_graph(g, g.node_features); }

ParsedGraphText parse_graph_text(const std::string& text) {
  static const std::regex edge_re(R"(^Node\[(\d+)\]-(-?\d+\.\d+)-Node\[(\d+)\]$)");
  ParsedGraphText out;
  std::istringstream ss(text);
  std::string line;
  std::smatch m;
  const std::string prefix = kFeaturePrefix;
  while (std::getline(ss, line)) {
    if (std::regex_match(line, m, edge_re)) {
      out.edges.push_back({{std::stoul(m[1].str()), std::stoul(m[3].str())}, std::stod(m[2].str())});
    } else if (line.rfind(prefix, 0) == 0) {
      std::istringstream vals(line.substr(prefix.size()));
      std::string cell;
      while (std::getline(vals, cell, ',')) out.mean_features.push_back(std::stod(cell));
    }
  }
  return out;
}

PromptBundle build_prompt(const BrainGraph& g) {
  if (g.meta.task.empty()) throw ConfigurationError("graph '" + g.id + "' has no task metadata");
  if (g.meta.dataset.empty()) throw ConfigurationError("graph '" + g.id + "' has no dataset name");
  const auto info = graphdata::task_info(g.meta.task);

  std::string regions;
  for (std::size_t k = 0; k < g.regions.size(); ++k) {
    if (k) regions += ", ";
    regions += fmt::format("Node[{}]={}", k, g.regions[k]);
  }

  PromptBundle p;
  p.description = fmt::format(
      "# Task Description\n"
      "You are an experienced neuroscience researcher. Now please give a description of the fMRI graph data "
      "from {} dataset. The task is {}. The result is '{}' or '{}'. Data is preprocessed through AAL template.\n"
      "Name of different Brain Regions can be: {}\n"
      "# Requirements\n"
      "1. Input data introduction: each line Node[i]-w-Node[j] gives the functional connection strength w "
      "(Pearson correlation) between region i and region j; the last line lists the mean feature of every node "
      "in index order.\n"
      "2. Analysis requirement: Your analysis should be accurate and every conclusion must be supported by "
      "direct proof from input data.",
      g.meta.dataset, g.meta.task, info.labels[0], info.labels[1], regions);
  p.graph_text = "# Input Data\n" + serialize_graph(g);
  p.query = fmt::format(
      "# Output Format\n"
      "Your output should strict obey a json data whose structure is as follows:\n"
      "{{\n"
      "  \"analysis\": \"analysis for result\",\n"
      "  \"key_features\": [\"feature 1\", \"feature 2\", ...],\n"
      "  \"prediction\": \"prediction of the data, must be '{}' or '{}'\",\n"
      "  \"certainty\": \"Confidence of your prediction, a value between [1, 5]\"\n"
      "}}",
      info.labels[0], info.labels[1]);
  for (const auto* s : {&p.description, &p.graph_text, &p.query}) {
    if (s->find(kSectionSeparator) != std::string::npos) throw ContractError("prompt section contains the separator");
  }
  p.assembled = p.description + kSectionSeparator + p.graph_text + kSectionSeparator + p.query;
  return p;
}

std::array<std::string, 3> split_prompt(const std::string& assembled) {
  const std::string sep = kSectionSeparator;
  const auto a = assembled.find(sep);
  const auto b = a == std::string::npos ? a : assembled.find(sep, a + sep.size());
  if (b == std::string::npos || assembled.find(sep, b + sep.size()) != std::string::npos) {
    throw FormatError("assembled prompt does not have exactly three sections");
  }
  return {assembled.substr(0, a), assembled.substr(a + sep.size(), b - a - sep.size()),
          assembled.substr(b + sep.size())};
}

PromptHeader parse_prompt_header(const std::string& text) {
  static const std::regex head_re(R"(from (.+) dataset\. The task is (.+)\. The result is '([^']+)' or '([^']+)'\.)");
  static const std::regex region_re(R"(Node\[(\d+)\]=([A-Za-z0-9_]+))");
  std::smatch m;
  if (!std::regex_search(text, m, head_re)) throw FormatError("prompt has no task description header");
  PromptHeader h{m[1].str(), m[2].str(), {m[3].str(), m[4].str()}, {}};
  const auto line_start = text.find("Name of different Brain Regions can be: ");
  if (line_start == std::string::npos) throw FormatError("prompt has no region table");
  const auto line_end = text.find('\n', line_start);
  const std::string line = text.substr(line_start, line_end - line_start);
  for (auto it = std::sregex_iterator(line.begin(), line.end(), region_re); it != std::sregex_iterator(); ++it) {
    const auto idx = std::stoul((*it)[1].str());
    if (idx != h.regions.size()) throw FormatError("region table is not in index order");
    h.regions.push_back((*it)[2].str());
  }
  return h;
}

}  // namespace bleg::promptgen
