#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "covp/services.hpp"

namespace covp {

// Cumulative stages; each row of the ablation protocol corresponds to one.
enum class PromptStage { Baseline = 0, PhysicalAttr = 1, DynamicAttr = 2, Polysemy = 3, Diverse = 4 };

std::string to_string(PromptStage stage);
PromptStage prompt_stage_from_string(const std::string& name);

struct CatalogEntry {
  PromptStage stage = PromptStage::Baseline;
  std::string text;
  std::string source;  // "paper-§4.4" or "catalog-extension"
};

// Versioned prompt catalog. The shipped JSON file is authoritative; the
// builtin copy keeps the library usable without install paths.
class PromptCatalog {
 public:
  static PromptCatalog builtin();
  static PromptCatalog from_json(const std::string& text);
  static PromptCatalog load(const std::filesystem::path& path);

  const std::vector<CatalogEntry>& entries() const { return entries_; }
  const std::string& version() const { return version_; }

  // Diversity entries reserved for expansion: the primary diverse prompt
  // first, then catalog extensions, in catalog order.
  std::vector<std::string> diverse_pool() const;

 private:
  void validate() const;

  std::string version_;
  std::vector<CatalogEntry> entries_;
};

struct PromptEntry {
  PromptStage stage = PromptStage::Baseline;
  std::string text;

  bool operator==(const PromptEntry&) const = default;
};

struct PromptChain {
  PromptStage stage = PromptStage::Baseline;
  std::vector<PromptEntry> entries;
  std::string chain_id;  // stable hash over the ordered texts
  std::vector<std::string> provenance;

  std::vector<std::string> texts() const;
};

// Cumulative prompt set for a stage. Entries keep catalog order within the
// stage ordering, so ablation rows map one-to-one onto stages.
PromptChain build_chain(PromptStage stage, const PromptCatalog& catalog = PromptCatalog::builtin());

// Appends up to n unique paraphrases at the Diverse stage. Without a service
// (or when it fails, which is recorded in provenance) the static diverse pool
// of the catalog is used instead. Service results merge sorted by text.
PromptChain paraphrase_expand(const PromptChain& chain, int n, ParaphraseService* paraphraser = nullptr,
                              const PromptCatalog& catalog = PromptCatalog::builtin());

std::string compute_chain_id(const std::vector<PromptEntry>& entries);

}  // namespace covp
