#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lineage/error.hpp"

namespace lineage {

/// Subordinate labels resolved by zero-shot classification for one
/// superordinate category ("animal" -> tiger, lion, ...).
struct CategoryVocabulary {
  std::string superordinate;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  bool operator==(const CategoryVocabulary&) const = default;
};

/// One probe prompt. The article is stored data, never derived, so the
/// default set reproduces its source text verbatim ("an flightless bird").
struct CompositionalPrompt {
  std::string id;
  std::string article = "a";
  std::vector<std::string> attributes;
  std::string superordinate;
  std::string context;
  std::string rendered;

  bool operator==(const CompositionalPrompt&) const = default;
};

struct PromptCatalogue {
  std::vector<CompositionalPrompt> prompts;
  std::map<std::string, CategoryVocabulary> vocabularies;

  const CompositionalPrompt& prompt(std::string_view id) const;
  const CategoryVocabulary& vocabulary_for(std::string_view prompt_id) const;
  /// Position of the prompt in catalogue order; throws UnknownPrompt.
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const;

  bool operator==(const PromptCatalogue&) const = default;
};

std::string render_prompt(const CompositionalPrompt& prompt);

/// Lowercase, non-alphanumerics collapsed to single underscores.
std::string slugify(std::string_view text);

/// Builds a prompt with `rendered` and (when empty) `id` filled in.
CompositionalPrompt make_prompt(std::vector<std::string> attributes, std::string superordinate,
                                std::string context, std::string article = "a",
                                std::string id = {});

/// The 42-prompt probe set (9 baked good, 9 animal, 6 flower, 9 bird, 9 fruit).
PromptCatalogue build_default_catalogue();

struct Violation {
  ErrorKind kind;
  std::string message;
};

/// Collects every invariant violation; empty means valid.
std::vector<Violation> validate(const PromptCatalogue& catalogue);

nlohmann::ordered_json to_json(const PromptCatalogue& catalogue);
/// Parses and validates; throws with every violation listed in the message.
PromptCatalogue catalogue_from_json(const nlohmann::json& doc);

PromptCatalogue load_catalogue(const std::filesystem::path& path);
void save_catalogue(const PromptCatalogue& catalogue, const std::filesystem::path& path);

}  // namespace lineage
