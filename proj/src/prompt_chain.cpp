#include "covp/prompt_chain.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "covp/errors.hpp"
#include "covp/image_io.hpp"

namespace covp {

std::string to_string(PromptStage stage) {
  switch (stage) {
    case PromptStage::Baseline: return "baseline";
    case PromptStage::PhysicalAttr: return "physical_attr";
    case PromptStage::DynamicAttr: return "dynamic_attr";
    case PromptStage::Polysemy: return "polysemy";
    case PromptStage::Diverse: return "diverse";
  }
  throw PreconditionError("unknown prompt stage");
}

PromptStage prompt_stage_from_string(const std::string& name) {
  if (name == "baseline") return PromptStage::Baseline;
  if (name == "physical_attr") return PromptStage::PhysicalAttr;
  if (name == "dynamic_attr") return PromptStage::DynamicAttr;
  if (name == "polysemy") return PromptStage::Polysemy;
  if (name == "diverse") return PromptStage::Diverse;
  throw PreconditionError("unknown prompt stage: " + name);
}

namespace {

// Mirrors data/prompt_catalog.json; the file wins whenever one is supplied.
constexpr const char* kBuiltinCatalog = R"json({
  "catalog_version": "1",
  "entries": [
    {
      "stage": "baseline",
      "text": "Please find a camouflaged object in this image and provide me with its exact location coordinates",
      "source": "paper-§4.4"
    },
    {
      "stage": "physical_attr",
      "text": "This image may contain a camouflaged object whose shape, color and texture closely resemble its surroundings, enabling it to blend in. Can you identify it and provide its precise location coordinates?",
      "source": "catalog-extension"
    },
    {
      "stage": "dynamic_attr",
      "text": "This image may contain a camouflaged object whose shape, color, texture, pattern and movement closely resemble its surroundings, enabling it to blend in. Can you identify it and provide its precise location coordinates?",
      "source": "paper-§4.4"
    },
    {
      "stage": "polysemy",
      "text": "This image may contain a concealed object whose shape, color, texture, pattern and movement closely resemble its surroundings, enabling it to blend in. Can you identify it and provide its precise location coordinates?",
      "source": "paper-§4.4"
    },
    {
      "stage": "diverse",
      "text": "This image may contain a camouflaged object whose shape, color, pattern, movement and texture bear little difference compared to its surroundings, enabling it to blend in. Please provide its precise location coordinates.",
      "source": "paper-§4.4"
    },
    {
      "stage": "diverse",
      "text": "There may be an object hidden somewhere in this image whose appearance is nearly indistinguishable from its surroundings. Please provide its precise location coordinates.",
      "source": "catalog-extension"
    },
    {
      "stage": "diverse",
      "text": "An object in this image may be disguised so well that its shape, color and texture match its environment almost exactly. Please give me its exact location coordinates.",
      "source": "catalog-extension"
    }
  ]
})json";

}  // namespace

PromptCatalog PromptCatalog::builtin() { return from_json(kBuiltinCatalog); }

PromptCatalog PromptCatalog::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PreconditionError(std::string("malformed prompt catalog: ") + e.what());
  }
  PromptCatalog catalog;
  catalog.version_ = j.value("catalog_version", "unversioned");
  for (const auto& e : j.at("entries")) {
    catalog.entries_.push_back({prompt_stage_from_string(e.at("stage").get<std::string>()),
                                e.at("text").get<std::string>(), e.at("source").get<std::string>()});
  }
  catalog.validate();
  return catalog;
}

PromptCatalog PromptCatalog::load(const std::filesystem::path& path) {
  return from_json(read_file(path));
}

void PromptCatalog::validate() const {
  if (entries_.empty()) throw PreconditionError("prompt catalog is empty");
  std::set<std::string> seen;
  bool has_baseline = false;
  for (const auto& e : entries_) {
    if (e.text.empty()) throw PreconditionError("prompt catalog contains an empty text");
    if (!seen.insert(e.text).second) {
      throw PreconditionError("prompt catalog contains a duplicate text");
    }
    if (e.source != "paper-§4.4" && e.source != "catalog-extension") {
      throw PreconditionError("prompt catalog entry has unknown source: " + e.source);
    }
    if (e.stage == PromptStage::Baseline) has_baseline = true;
  }
  if (!has_baseline) throw PreconditionError("prompt catalog lacks a baseline prompt");
}

std::vector<std::string> PromptCatalog::diverse_pool() const {
  std::vector<std::string> pool;
  for (const auto& e : entries_) {
    if (e.stage == PromptStage::Diverse && e.source == "paper-§4.4") pool.push_back(e.text);
  }
  for (const auto& e : entries_) {
    if (e.stage == PromptStage::Diverse && e.source == "catalog-extension") pool.push_back(e.text);
  }
  return pool;
}

std::vector<std::string> PromptChain::texts() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.text);
  return out;
}

std::string compute_chain_id(const std::vector<PromptEntry>& entries) {
  std::string joined;
  for (const auto& e : entries) {
    joined += e.text;
    joined.push_back('\x1f');
  }
  return sha256_hex(joined);
}

PromptChain build_chain(PromptStage stage, const PromptCatalog& catalog) {
  PromptChain chain;
  chain.stage = stage;
  for (const auto& e : catalog.entries()) {
    if (e.stage > stage) continue;
    // Diversity extensions stay in the expansion pool; the built chain keeps
    // the fixed per-stage set so ablation rows are reproducible.
    if (e.stage == PromptStage::Diverse && e.source != "paper-§4.4") continue;
    chain.entries.push_back({e.stage, e.text});
  }
  std::stable_sort(chain.entries.begin(), chain.entries.end(),
                   [](const PromptEntry& a, const PromptEntry& b) { return a.stage < b.stage; });
  if (chain.entries.empty()) throw PreconditionError("catalog produced an empty chain");
  chain.chain_id = compute_chain_id(chain.entries);
  return chain;
}

PromptChain paraphrase_expand(const PromptChain& chain, int n, ParaphraseService* paraphraser,
                              const PromptCatalog& catalog) {
  if (n < 0) throw PreconditionError("paraphrase count must be >= 0");
  if (n == 0) return chain;

  PromptChain out = chain;
  std::set<std::string> existing(chain.texts().begin(), chain.texts().end());

  std::vector<std::string> fresh;
  bool use_static = paraphraser == nullptr;
  if (paraphraser != nullptr) {
    try {
      const std::string seed_text = chain.entries.back().text;
      auto generated = paraphraser->paraphrase(seed_text, n);
      std::sort(generated.begin(), generated.end());
      for (const auto& t : generated) {
        if (t.empty() || existing.count(t)) continue;
        if (std::find(fresh.begin(), fresh.end(), t) != fresh.end()) continue;
        fresh.push_back(t);
        if (static_cast<int>(fresh.size()) == n) break;
      }
    } catch (const std::exception& e) {
      out.provenance.push_back(std::string("paraphrase service failed, using static catalog: ") + e.what());
      use_static = true;
      fresh.clear();
    }
  }
  if (use_static) {
    for (const auto& t : catalog.diverse_pool()) {
      if (existing.count(t)) continue;
      if (std::find(fresh.begin(), fresh.end(), t) != fresh.end()) continue;
      fresh.push_back(t);
      if (static_cast<int>(fresh.size()) == n) break;
    }
  }

  for (const auto& t : fresh) out.entries.push_back({PromptStage::Diverse, t});
  if (!fresh.empty() && out.stage < PromptStage::Diverse) out.stage = PromptStage::Diverse;
  out.chain_id = compute_chain_id(out.entries);
  return out;
}

}  // namespace covp
