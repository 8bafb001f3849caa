#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace covp {

// All five benchmark layouts reduce to two conventions: sibling image/GT
// directories (CAMO, COD10K, NC4K, OVCamo, plain fixtures) and per-sequence
// directories of frames (MoCA-Mask, flattened to independent frames).
enum class DatasetLayout { Camo, Cod10k, Nc4k, OvCamo, MocaMask, Flat };

std::string to_string(DatasetLayout layout);
DatasetLayout layout_from_string(const std::string& name);

struct SamplePair {
  std::filesystem::path image_path;
  std::filesystem::path gt_path;
  std::string image_id;                     // dataset-scoped, stable
  std::optional<std::string> sequence_id;   // video layouts only
};

struct DatasetManifest {
  std::string dataset_id;
  std::filesystem::path root;
  std::vector<SamplePair> pairs;  // byte-wise lexicographic by image_id
  std::optional<int> expected_count;
  std::vector<std::string> warnings;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

// Discovers pairs by layout convention; stems match case-insensitively.
// Orphan images go to warnings. An empty result is fatal. When
// expected_count is given, a count mismatch is fatal too.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetLayout layout,
                              std::optional<int> expected_count = std::nullopt);

struct PairIssue {
  std::string image_id;
  std::string problem;
};

struct ValidationReport {
  int checked = 0;
  std::vector<PairIssue> failures;
  std::vector<std::string> notes;

  std::string to_text() const;
};

// Decodes every pair and reports per-pair failures without aborting.
ValidationReport validate_manifest(const DatasetManifest& manifest);

}  // namespace covp
