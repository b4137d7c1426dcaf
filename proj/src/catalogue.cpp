#include "lineage/catalogue.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace lineage {

namespace {

std::string fold_label(std::string_view label) {
  auto begin = label.find_first_not_of(" \t\r\n");
  auto end = label.find_last_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  std::string out(label.substr(begin, end - begin + 1));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Vocabulary contents are configuration; the fruit list is the one used for
// the scene-context study, the rest follow the same "<labels..>, Others" shape.
std::map<std::string, CategoryVocabulary> default_vocabularies() {
  std::map<std::string, CategoryVocabulary> vocab;
  auto add = [&](std::string name, std::vector<std::string> labels) {
    vocab[name] = CategoryVocabulary{name, std::move(labels)};
  };
  add("baked good",
      {"Croissant", "Bagel", "Muffin", "Pretzel", "Pizza", "Cake", "Cookie", "Others"});
  add("animal", {"Tiger", "Lion", "Wolf", "Bear", "Deer", "Elephant", "Rabbit", "Others"});
  add("flower", {"Rose", "Orchid", "Hibiscus", "Sunflower", "Tulip", "Lily", "Others"});
  add("bird", {"Eagle", "Owl", "Parrot", "Ostrich", "Penguin", "Flamingo", "Sparrow", "Others"});
  add("fruit", {"Apple", "Nectarine", "Grapefruit", "Lime", "Coconut", "Honeydew", "Others"});
  return vocab;
}

}  // namespace

std::string render_prompt(const CompositionalPrompt& prompt) {
  if (prompt.attributes.empty()) {
    throw Error(ErrorKind::InvalidPrompt,
                "prompt '" + prompt.id + "' has no attributes");
  }
  std::string text = "A photo of " + prompt.article;
  for (const auto& attribute : prompt.attributes) text += " " + attribute;
  text += " " + prompt.superordinate;
  if (!prompt.context.empty()) text += " " + prompt.context;
  return text;
}

std::string slugify(std::string_view text) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_sep = true;
    }
  }
  return out;
}

CompositionalPrompt make_prompt(std::vector<std::string> attributes, std::string superordinate,
                                std::string context, std::string article, std::string id) {
  CompositionalPrompt p;
  p.article = std::move(article);
  p.attributes = std::move(attributes);
  p.superordinate = std::move(superordinate);
  p.context = std::move(context);
  p.rendered = render_prompt(p);
  p.id = id.empty() ? slugify(p.rendered) : std::move(id);
  return p;
}

PromptCatalogue build_default_catalogue() {
  struct Group {
    std::string superordinate;
    std::string article;
    std::vector<std::vector<std::string>> attribute_sets;
    std::vector<std::string> contexts;
  };
  const std::vector<Group> groups = {
      {"baked good", "a", {{"savory"}, {"cheesy"}, {"sweet"}},
       {"on a dimmed studio", "on a dark wood surface", "against a brick wall"}},
      {"animal", "a", {{"dangerous"}, {"wild"}, {"peaceful"}},
       {"in a grassland", "in a forest", "in a dimmed studio"}},
      {"flower", "a", {{"vibrant", "single"}, {"tropical", "single"}},
       {"on a pot", "in a dimmed studio", "on a vase"}},
      {"bird", "an", {{"peaceful"}, {"dangerous"}, {"flightless"}},
       {"on a grass", "on a savana", "in a dimmed studio"}},
      {"fruit", "a", {{"sweet", "single"}, {"frozen", "single"}, {"savory", "single"}},
       {"on a dish", "on a wooden floor", "on a dimmed studio"}},
  };

  PromptCatalogue catalogue;
  catalogue.vocabularies = default_vocabularies();
  for (const auto& group : groups) {
    for (const auto& attributes : group.attribute_sets) {
      for (const auto& context : group.contexts) {
        catalogue.prompts.push_back(
            make_prompt(attributes, group.superordinate, context, group.article));
      }
    }
  }
  return catalogue;
}

const CompositionalPrompt& PromptCatalogue::prompt(std::string_view id) const {
  return prompts[index_of(id)];
}

std::size_t PromptCatalogue::index_of(std::string_view id) const {
  auto it = std::find_if(prompts.begin(), prompts.end(),
                         [&](const CompositionalPrompt& p) { return p.id == id; });
  if (it == prompts.end()) {
    throw Error(ErrorKind::UnknownPrompt, "prompt '" + std::string(id) + "' not in catalogue");
  }
  return static_cast<std::size_t>(it - prompts.begin());
}

bool PromptCatalogue::contains(std::string_view id) const {
  return std::any_of(prompts.begin(), prompts.end(),
                     [&](const CompositionalPrompt& p) { return p.id == id; });
}

const CategoryVocabulary& PromptCatalogue::vocabulary_for(std::string_view prompt_id) const {
  const auto& p = prompt(prompt_id);
  auto it = vocabularies.find(p.superordinate);
  if (it == vocabularies.end()) {
    throw Error(ErrorKind::MissingVocabulary,
                "no vocabulary for superordinate '" + p.superordinate + "'");
  }
  return it->second;
}

std::vector<Violation> validate(const PromptCatalogue& catalogue) {
  std::vector<Violation> out;
  for (const auto& [name, vocab] : catalogue.vocabularies) {
    if (vocab.superordinate != name) {
      out.push_back({ErrorKind::InvalidInput, "vocabulary key '" + name +
                                                  "' does not match its superordinate '" +
                                                  vocab.superordinate + "'"});
    }
    if (vocab.labels.size() < 2) {
      out.push_back({ErrorKind::InvalidInput,
                     "vocabulary '" + name + "' needs at least 2 labels"});
    }
    std::set<std::string> seen;
    for (const auto& label : vocab.labels) {
      if (!seen.insert(fold_label(label)).second) {
        out.push_back({ErrorKind::DuplicateId,
                       "vocabulary '" + name + "' repeats label '" + label + "'"});
      }
    }
  }

  std::set<std::string> ids;
  for (const auto& p : catalogue.prompts) {
    if (p.id.empty()) out.push_back({ErrorKind::InvalidPrompt, "prompt with empty id"});
    if (!ids.insert(p.id).second) {
      out.push_back({ErrorKind::DuplicateId, "duplicate prompt id '" + p.id + "'"});
    }
    if (!catalogue.vocabularies.contains(p.superordinate)) {
      out.push_back({ErrorKind::MissingVocabulary, "prompt '" + p.id +
                                                       "' references missing vocabulary '" +
                                                       p.superordinate + "'"});
    }
    if (p.attributes.empty()) {
      out.push_back({ErrorKind::InvalidPrompt, "prompt '" + p.id + "' has no attributes"});
    } else if (render_prompt(p) != p.rendered) {
      out.push_back({ErrorKind::InvalidPrompt, "prompt '" + p.id + "' rendered text '" +
                                                   p.rendered + "' differs from template '" +
                                                   render_prompt(p) + "'"});
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const PromptCatalogue& catalogue) {
  nlohmann::ordered_json vocab = nlohmann::ordered_json::object();
  for (const auto& [name, v] : catalogue.vocabularies) vocab[name] = v.labels;
  nlohmann::ordered_json prompts = nlohmann::ordered_json::array();
  for (const auto& p : catalogue.prompts) {
    prompts.push_back({{"id", p.id},
                       {"article", p.article},
                       {"attributes", p.attributes},
                       {"superordinate", p.superordinate},
                       {"context", p.context},
                       {"rendered", p.rendered}});
  }
  nlohmann::ordered_json doc;
  doc["vocabularies"] = std::move(vocab);
  doc["prompts"] = std::move(prompts);
  return doc;
}

PromptCatalogue catalogue_from_json(const nlohmann::json& doc) {
  PromptCatalogue catalogue;
  try {
    for (const auto& [name, labels] : doc.at("vocabularies").items()) {
      catalogue.vocabularies[name] =
          CategoryVocabulary{name, labels.get<std::vector<std::string>>()};
    }
    for (const auto& entry : doc.at("prompts")) {
      CompositionalPrompt p;
      p.id = entry.at("id").get<std::string>();
      p.article = entry.value("article", std::string("a"));
      p.attributes = entry.at("attributes").get<std::vector<std::string>>();
      p.superordinate = entry.at("superordinate").get<std::string>();
      p.context = entry.value("context", std::string());
      p.rendered = entry.at("rendered").get<std::string>();
      catalogue.prompts.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("catalogue document: ") + e.what());
  }

  auto violations = validate(catalogue);
  if (!violations.empty()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < violations.size(); ++i) {
      if (i) msg << "; ";
      msg << violations[i].message;
    }
    throw Error(violations.front().kind, msg.str());
  }
  return catalogue;
}

PromptCatalogue load_catalogue(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open catalogue " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return catalogue_from_json(doc);
}

void save_catalogue(const PromptCatalogue& catalogue, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write catalogue " + path.string());
  out << to_json(catalogue).dump(2) << "\n";
}

}  // namespace lineage
