#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lineage/cli.hpp"
#include "lineage/error.hpp"
#include "lineage/simulator.hpp"
#include "lineage/util.hpp"
#include "support.hpp"

using namespace lineage;
namespace fs = std::filesystem;

namespace {

nlohmann::json six_lineage_world() {
  nlohmann::json w = {{"alpha0", 0.3}, {"concentration", 50}, {"rho", 0.5},
                      {"n_per_prompt", 30}, {"seed_base", 0}, {"lineages", nlohmann::json::array()}};
  for (int i = 0; i < 6; ++i) {
    const auto id = "L" + std::to_string(i);
    w["lineages"].push_back(
        {{"id", id},
         {"seed", 1000 + i},
         {"fine_tunes",
          {{{"id", id + "_s02"}, {"strength", 0.2}, {"style_shift_seed", 10 * i + 1}},
           {{"id", id + "_s04"}, {"strength", 0.4}, {"style_shift_seed", 10 * i + 2}}}}});
  }
  return w;
}

cli::RunConfig config_in(const fs::path& out) {
  cli::RunConfig c;
  c.output_dir = out;
  c.generator.lineage_seed = 5;
  return c;
}

std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().string().ends_with(suffix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config parsing") {
    testing::TempDir dir;
    std::ofstream(dir / "run.json") << R"({
      "generator": {"kind": "http", "endpoint": "https://gen.example", "token_env": "GEN_TOKEN"},
      "classifier": {"kind": "stub", "seed": 4},
      "plan": {"n_per_prompt": 10, "seed_base": 7, "parallelism": 2},
      "metric": "jsd", "threshold_fraction": 0.8, "prior": {"alpha0": 2, "beta0": 3},
      "unit_price": 0.05, "base_models": ["A", "B"], "output_dir": "results"})";
    const auto c = cli::load_config(dir / "run.json");
    CHECK(c.generator.kind == "http");
    CHECK(c.generator.token_env == "GEN_TOKEN");
    CHECK(c.classifier.seed == 4);
    CHECK(c.n_per_prompt == 10);
    CHECK(c.seed_base == 7);
    CHECK(c.metric == Metric::JSD);
    CHECK(c.alpha0 == 2.0);
    CHECK(c.base_models.size() == 2);
    CHECK(c.output_dir == dir.path() / "results");
  }

  TEST_CASE("config errors") {
    auto bad = [](const char* text) {
      try {
        cli::config_from_json(nlohmann::json::parse(text));
      } catch (const Error& e) {
        return e.kind() == ErrorKind::Config;
      }
      return false;
    };
    CHECK(bad(R"({"generator": {"kind": "http", "endpoint": "ftp://x"}, "classifier": {"kind": "stub"}})"));
    CHECK(bad(R"({"threshold_fraction": 1.5})"));
    CHECK(bad(R"({"metric": "cosine"})"));
    CHECK(bad(R"({"classifier": {"kind": "oracle"}})"));
    CHECK(bad(R"({"plan": {"n_per_prompt": "many"}})"));
  }

  TEST_CASE("cost estimate") {
    CHECK(cli::cost_estimate(1260, 0.04) == doctest::Approx(50.40));
  }

  TEST_CASE("probe with the simulator prints the protocol summary") {
    testing::TempDir dir;
    std::ostringstream out, err;
    REQUIRE(cli::cmd_probe(config_in(dir.path()), "M", out, err) == 0);
    CHECK(out.str().find("1260 images x $0.04 = $50.40") != std::string::npos);
    CHECK(out.str().find("samples:        1260") != std::string::npos);
    const auto store = load_fingerprints(dir / "M.fingerprints.json");
    CHECK(store.prompts.size() == 42);
    CHECK_FALSE(fs::exists(dir / "M.journal.jsonl"));
  }

  TEST_CASE("probe of an offline directory") {
    testing::TempDir dir;
    const auto cat = build_default_catalogue();
    const auto& id = cat.prompts[0].id;
    fs::create_directories(dir / "images");
    std::ofstream(dir / "images" / (id + "_0.png")) << "a";
    std::ofstream(dir / "images" / (id + "_1.png")) << "b";
    auto c = config_in(dir / "out");
    c.generator.kind = "directory";
    c.generator.directory = dir / "images";
    c.classifier.kind = "stub";
    c.prompts = {id};
    c.n_per_prompt = 2;
    std::ostringstream out, err;
    REQUIRE(cli::cmd_probe(c, "offline", out, err) == 0);
    const auto store = load_fingerprints(dir / "out" / "offline.fingerprints.json");
    CHECK(store.prompts.at(id).size() == 2);
  }

  TEST_CASE("unreachable endpoint fails and keeps the journal") {
    testing::TempDir dir;
    auto c = config_in(dir.path());
    c.generator.kind = "http";
    c.generator.endpoint = "http://127.0.0.1:1";
    c.generator.timeout_seconds = 1.0;
    c.classifier.kind = "stub";
    c.max_retries = 1;
    c.retry_backoff_ms = 1;
    c.n_per_prompt = 2;
    std::ostringstream out, err;
    CHECK(cli::cmd_probe(c, "remote", out, err) != 0);
    CHECK(fs::exists(dir / "remote.journal.jsonl"));
    CHECK(err.str().find("journal") != std::string::npos);
  }

  TEST_CASE("simulate, attribute and heatmap") {
    testing::TempDir dir;
    std::ofstream(dir / "world.json") << six_lineage_world().dump();
    auto c = config_in(dir / "stores");
    std::ostringstream out, err;
    REQUIRE(cli::cmd_simulate(c, dir / "world.json", out, err) == 0);
    const auto stores = files_with_suffix(dir / "stores", ".fingerprints.json");
    CHECK(stores.size() == 18);

    SUBCASE("rerun is byte-identical") {
      auto again = config_in(dir / "again");
      REQUIRE(cli::cmd_simulate(again, dir / "world.json", out, err) == 0);
      const auto rerun = files_with_suffix(dir / "again", ".fingerprints.json");
      REQUIRE(rerun.size() == stores.size());
      for (std::size_t i = 0; i < stores.size(); ++i) CHECK(read_file(stores[i]) == read_file(rerun[i]));
      CHECK(read_file(dir / "stores" / "world.json") == read_file(dir / "again" / "world.json"));
    }

    SUBCASE("fine-tune attributes to its base") {
      std::vector<fs::path> bases;
      for (int i = 0; i < 2; ++i) bases.push_back(dir / "stores" / ("L" + std::to_string(i) + ".fingerprints.json"));
      auto ac = config_in(dir / "reports");
      CHECK(cli::cmd_attribute(ac, dir / "stores" / "L0_s02.fingerprints.json", bases, out, err) == 0);
      const auto csv = read_file(dir / "reports" / "L0_s02.report.csv");
      CHECK(csv.find("L0_s02,L0,w2,42,0,42") != std::string::npos);
      CHECK(fs::exists(dir / "reports" / "L0_s02.trials.csv"));
      CHECK(fs::exists(dir / "reports" / "L0_s02.report.json"));

      ac.metric = Metric::JSD;
      cli::cmd_attribute(ac, dir / "stores" / "L0_s02.fingerprints.json", bases, out, err);
      CHECK(read_file(dir / "reports" / "L0_s02.report.csv").find(",jsd,") != std::string::npos);
    }

    SUBCASE("copied store gives s = T") {
      fs::copy_file(dir / "stores" / "L1.fingerprints.json", dir / "copy.fingerprints.json");
      std::vector<fs::path> bases{dir / "stores" / "L0.fingerprints.json", dir / "stores" / "L1.fingerprints.json"};
      auto ac = config_in(dir / "reports");
      CHECK(cli::cmd_attribute(ac, dir / "copy.fingerprints.json", bases, out, err) == 0);
      const auto doc = nlohmann::json::parse(read_file(dir / "reports" / "L1.report.json"));
      const auto& row = doc["posteriors"][1];
      CHECK(row["base"] == "L1");
      CHECK(row["s"] == doc["T"]);
      const double t = doc["T"].get<double>();
      CHECK(row["mean"].get<double>() == doctest::Approx((t + 1) / (t + 2)));
    }

    SUBCASE("heatmap over 19 models") {
      auto hc = config_in(dir / "hm");
      hc.base_models = {"L0", "L1", "L2", "L3", "L4", "L5"};
      fs::copy_file(stores[0], dir / "extra.fingerprints.json");
      auto extra = load_fingerprints(dir / "extra.fingerprints.json");
      extra.model_id = "extra";
      save_fingerprints(extra, dir / "extra.fingerprints.json");
      auto all = stores;
      all.push_back(dir / "extra.fingerprints.json");
      REQUIRE(all.size() == 19);
      REQUIRE(cli::cmd_heatmap(hc, all, out, err) == 0);
      const auto csvs = files_with_suffix(dir / "hm" / "heatmap", ".csv");
      CHECK(csvs.size() == 43);
      for (const auto& path : csvs) {
        std::istringstream in(read_file(path));
        std::string line;
        std::getline(in, line);
        for (int row = 1; std::getline(in, line); ++row) {
          std::vector<std::string> cells;
          std::stringstream ls(line);
          for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
          REQUIRE(cells.size() == 20);
          CHECK(cells[row] == "0.000000");
        }
      }
      CHECK(fs::exists(dir / "hm" / "heatmap" / "heatmap.json"));
    }

    SUBCASE("identical stores raise a degenerate column error") {
      auto hc = config_in(dir / "hm2");
      hc.base_models = {"L0", "twin"};
      auto twin = load_fingerprints(dir / "stores" / "L0.fingerprints.json");
      twin.model_id = "twin";
      save_fingerprints(twin, dir / "twin.fingerprints.json");
      std::ostringstream e2;
      CHECK(cli::cmd_heatmap(hc, {dir / "stores" / "L0.fingerprints.json", dir / "twin.fingerprints.json"}, out, e2) == 1);
      CHECK(e2.str().find("degenerate-column") != std::string::npos);
      CHECK(e2.str().find("prompt ") != std::string::npos);
    }
  }

  TEST_CASE("heatmap needs two stores and base models") {
    testing::TempDir dir;
    std::ostringstream out, err;
    CHECK(cli::cmd_heatmap(config_in(dir.path()), {dir / "a.json"}, out, err) == 1);
  }

  TEST_CASE("catalogue-validate") {
    testing::TempDir dir;
    std::ostringstream out, err;
    CHECK(cli::cmd_catalogue_validate(cli::RunConfig{}, std::nullopt, dir / "cat.json", out, err) == 0);
    CHECK(out.str().starts_with("42 prompts"));
    CHECK(load_catalogue(dir / "cat.json") == build_default_catalogue());
    std::ofstream(dir / "broken.json") << R"({"vocabularies": {}, "prompts": [{"id": "x", "attributes": ["a"], "superordinate": "thing", "context": "", "rendered": "A photo of a a thing"}]})";
    std::ostringstream e2;
    CHECK(cli::cmd_catalogue_validate(cli::RunConfig{}, dir / "broken.json", std::nullopt, out, e2) == 1);
    CHECK(e2.str().find("missing-vocabulary") != std::string::npos);
  }
}
