#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "bleg/cli/cli.hpp"
#include "bleg/error.hpp"
#include "bleg/graphdata/io.hpp"
#include "test_util.hpp"

using namespace bleg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return json::parse(last);
}

}  // namespace

TEST_CASE("config merging rejects unknown keys and wrong types") {
  const json base = cli::default_config();
  const json merged = cli::merge_config(base, {{"pipeline", {{"tune", {{"epochs", 2}}}}}});
  CHECK(merged["pipeline"]["tune"]["epochs"] == 2);
  CHECK(merged["pipeline"]["tune"]["lr"] == base["pipeline"]["tune"]["lr"]);
  CHECK_THROWS_AS(cli::merge_config(base, {{"pipeline", {{"tune", {{"epochz", 2}}}}}}), ConfigurationError);
  CHECK_THROWS_AS(cli::merge_config(base, {{"seed", "seven"}}), ConfigurationError);
  CHECK_THROWS_AS(cli::merge_config(base, {{"synth", 3}}), ConfigurationError);
}

TEST_CASE("usage errors exit 2, module errors exit 1 with a JSON error") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"synth", "--no-such-flag"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);

  const auto dir = testing::temp_dir("cli_errors");
  const auto r = invoke({"sft", "--out", dir.string()});
  CHECK(r.code == 1);
  const json e = json::parse(r.err);
  CHECK(e["error"]["kind"] == "configuration");
  CHECK(e["error"]["command"] == "sft");
  CHECK(fs::is_empty(dir));  // nothing is created when an input is missing

  const auto r2 = invoke({"sft", "--dataset", (dir / "missing.json").string(), "--out", dir.string()});
  CHECK(r2.code == 1);
  CHECK(json::parse(r2.err)["error"]["kind"] == "configuration");
}

TEST_CASE("theory-check reports the chain rule and echoes its config") {
  const auto dir = testing::temp_dir("cli_theory");
  const auto r = invoke({"theory-check", "--run-dir", (dir / "run").string(), "--seed", "4"});
  REQUIRE(r.code == 0);
  const json first = json::parse(r.out.substr(0, r.out.find('\n')));
  CHECK(first["config"]["seed"] == 4);
  const json done = last_line(r.out);
  CHECK(done["status"] == "ok");
  CHECK(done["summary"]["chain_rule_holds"] == true);
  const json report = graphdata::read_json_file(dir / "run" / "theory.json");
  CHECK(report["seed"] == 4);
  CHECK(report["chain_rule"]["holds"] == true);
  CHECK(report["data_processing"]["holds"] == true);
  CHECK(graphdata::read_json_file(dir / "run" / "config.json")["config"] == first["config"]);

  // A run directory is never reused.
  CHECK(invoke({"theory-check", "--run-dir", (dir / "run").string()}).code == 1);
}

TEST_CASE("synth is deterministic and named by seed") {
  const auto dir = testing::temp_dir("cli_synth");
  graphdata::write_json_file(dir / "c.json", {{"synth", {{"n_graphs", 6}, {"n_nodes", 12}, {"time_points", 40},
                                                         {"planted_edges_per_class", 2}}}});
  const std::vector<std::string> args{"synth", "--config", (dir / "c.json").string(), "--seed", "9", "--out",
                                      (dir / "runs").string()};
  const auto a = invoke(args);
  const auto b = invoke(args);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const fs::path ra = last_line(a.out)["run_dir"].get<std::string>();
  const fs::path rb = last_line(b.out)["run_dir"].get<std::string>();
  CHECK(ra != rb);
  CHECK(ra.filename().string().find("synth-") == 0);
  CHECK(ra.filename().string().find("-seed9") != std::string::npos);
  for (const auto& entry : fs::recursive_directory_iterator(ra)) {
    if (!entry.is_regular_file() || entry.path().filename() == "config.json") continue;
    const auto rel = fs::relative(entry.path(), ra);
    CHECK_MESSAGE(testing::read_file(entry.path()) == testing::read_file(rb / rel), rel.string());
  }
  CHECK(graphdata::load_dataset(ra / "dataset" / "manifest.json").size() == 6);
}
