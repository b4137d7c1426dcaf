#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "lineage/catalogue.hpp"
#include "lineage/error.hpp"
#include "support.hpp"

using namespace lineage;

namespace {

ErrorKind kind_of_load(const nlohmann::json& doc) {
  try {
    catalogue_from_json(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Parse;
}

}  // namespace

TEST_SUITE("catalogue") {
  TEST_CASE("render_prompt follows the template") {
    CHECK(make_prompt({"dangerous"}, "animal", "in a forest").rendered ==
          "A photo of a dangerous animal in a forest");
    CHECK(make_prompt({"x"}, "thing", "").rendered == "A photo of a x thing");
    CHECK(make_prompt({"flightless"}, "bird", "on a grass", "an").rendered ==
          "A photo of an flightless bird on a grass");
    CHECK(make_prompt({"tropical", "single"}, "flower", "on a vase").rendered ==
          "A photo of a tropical single flower on a vase");
  }

  TEST_CASE("render_prompt rejects an empty attribute list") {
    CompositionalPrompt p;
    p.superordinate = "animal";
    CHECK_THROWS_AS(render_prompt(p), Error);
    try {
      render_prompt(p);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidPrompt);
    }
  }

  TEST_CASE("render_prompt is pure") {
    const auto p = make_prompt({"wild"}, "animal", "in a grassland");
    CHECK(render_prompt(p) == render_prompt(p));
    CHECK(p.id == "a_photo_of_a_wild_animal_in_a_grassland");
  }

  TEST_CASE("default catalogue shape") {
    const auto cat = build_default_catalogue();
    REQUIRE(cat.prompts.size() == 42);
    std::vector<std::string> order;
    std::map<std::string, int> counts;
    for (const auto& p : cat.prompts) {
      if (order.empty() || order.back() != p.superordinate) order.push_back(p.superordinate);
      ++counts[p.superordinate];
    }
    CHECK(order == std::vector<std::string>{"baked good", "animal", "flower", "bird", "fruit"});
    std::vector<int> seq;
    for (const auto& s : order) seq.push_back(counts[s]);
    CHECK(seq == std::vector<int>{9, 9, 6, 9, 9});
    CHECK(validate(cat).empty());

    bool cheesy = false;
    for (const auto& p : cat.prompts) {
      cheesy |= p.rendered == "A photo of a cheesy baked good on a dimmed studio";
    }
    CHECK(cheesy);
    const auto& fruit = cat.vocabularies.at("fruit").labels;
    CHECK(std::find(fruit.begin(), fruit.end(), "Honeydew") != fruit.end());
    CHECK(fruit.size() == 7);
  }

  TEST_CASE("bundled data file equals the built-in catalogue") {
    const auto loaded = load_catalogue(std::filesystem::path(LINEAGE_DATA_DIR) / "default_catalogue.json");
    CHECK(loaded == build_default_catalogue());
  }

  TEST_CASE("save/load round trip") {
    testing::TempDir dir;
    const auto cat = build_default_catalogue();
    save_catalogue(cat, dir / "c.json");
    CHECK(load_catalogue(dir / "c.json") == cat);
  }

  TEST_CASE("duplicate id is rejected naming the id") {
    auto doc = nlohmann::json::parse(to_json(build_default_catalogue()).dump());
    doc["prompts"][1]["id"] = doc["prompts"][0]["id"];
    CHECK(kind_of_load(doc) == ErrorKind::DuplicateId);
    try {
      catalogue_from_json(doc);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(doc["prompts"][0]["id"].get<std::string>()) != std::string::npos);
    }
  }

  TEST_CASE("missing vocabulary is rejected") {
    auto doc = nlohmann::json::parse(to_json(build_default_catalogue()).dump());
    doc["vocabularies"].erase("bird");
    CHECK(kind_of_load(doc) == ErrorKind::MissingVocabulary);
  }

  TEST_CASE("other document violations") {
    auto base = nlohmann::json::parse(to_json(build_default_catalogue()).dump());

    auto tampered = base;
    tampered["prompts"][0]["rendered"] = "A photo of something else";
    CHECK(kind_of_load(tampered) == ErrorKind::InvalidPrompt);

    auto dup_label = base;
    dup_label["vocabularies"]["animal"].push_back(" tiger ");
    CHECK_THROWS_AS(catalogue_from_json(dup_label), Error);

    auto tiny = base;
    tiny["vocabularies"]["animal"] = nlohmann::json::array({"Tiger"});
    CHECK_THROWS_AS(catalogue_from_json(tiny), Error);

    auto no_attrs = base;
    no_attrs["prompts"][0]["attributes"] = nlohmann::json::array();
    CHECK_THROWS_AS(catalogue_from_json(no_attrs), Error);
  }

  TEST_CASE("load errors") {
    testing::TempDir dir;
    try {
      load_catalogue(dir / "absent.json");
      FAIL("expected missing file");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MissingFile);
    }
    std::ofstream(dir / "bad.json") << "{ not json";
    try {
      load_catalogue(dir / "bad.json");
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
    }
  }

  TEST_CASE("lookups") {
    const auto cat = build_default_catalogue();
    const auto& first = cat.prompts.front();
    CHECK(cat.index_of(first.id) == 0);
    CHECK(cat.contains(first.id));
    CHECK_FALSE(cat.contains("nope"));
    CHECK(cat.vocabulary_for(first.id).superordinate == "baked good");
    CHECK_THROWS_AS(cat.index_of("nope"), Error);
  }
}
