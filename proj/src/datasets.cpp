#include "covp/datasets.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "covp/errors.hpp"
#include "covp/image_io.hpp"

namespace covp {

namespace fs = std::filesystem;

std::string to_string(DatasetLayout layout) {
  switch (layout) {
    case DatasetLayout::Camo: return "camo";
    case DatasetLayout::Cod10k: return "cod10k";
    case DatasetLayout::Nc4k: return "nc4k";
    case DatasetLayout::OvCamo: return "ovcamo";
    case DatasetLayout::MocaMask: return "moca_mask";
    case DatasetLayout::Flat: return "flat";
  }
  throw PreconditionError("unknown dataset layout");
}

DatasetLayout layout_from_string(const std::string& name) {
  if (name == "camo") return DatasetLayout::Camo;
  if (name == "cod10k") return DatasetLayout::Cod10k;
  if (name == "nc4k") return DatasetLayout::Nc4k;
  if (name == "ovcamo") return DatasetLayout::OvCamo;
  if (name == "moca_mask") return DatasetLayout::MocaMask;
  if (name == "flat") return DatasetLayout::Flat;
  throw PreconditionError("unknown dataset layout: " + name);
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

const std::set<std::string> kImageDirNames = {"image", "images", "img", "imgs", "jpegimages",
                                              "frame", "frames"};
const std::set<std::string> kGtDirNames = {"gt", "gts", "mask", "masks", "gt_object",
                                           "ground_truth", "groundtruth"};
const std::set<std::string> kImageExts = {".jpg", ".jpeg", ".png", ".bmp"};
const std::set<std::string> kGtExts = {".png", ".jpg", ".jpeg", ".bmp"};

std::optional<fs::path> find_subdir(const fs::path& root, const std::set<std::string>& names) {
  std::vector<fs::path> hits;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && names.count(lower(e.path().filename().string()))) {
      hits.push_back(e.path());
    }
  }
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

std::vector<fs::path> list_files(const fs::path& dir, const std::set<std::string>& exts) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && exts.count(lower(e.path().extension().string()))) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Pairs an image directory with its GT sibling by case-insensitive stem.
void pair_directories(const fs::path& image_dir, const fs::path& gt_dir, const std::string& id_prefix,
                      const std::optional<std::string>& sequence_id, DatasetManifest& manifest) {
  std::map<std::string, fs::path> gt_by_stem;
  for (const auto& p : list_files(gt_dir, kGtExts)) {
    gt_by_stem.emplace(lower(p.stem().string()), p);
  }
  for (const auto& img : list_files(image_dir, kImageExts)) {
    const auto it = gt_by_stem.find(lower(img.stem().string()));
    const std::string id = id_prefix + img.stem().string();
    if (it == gt_by_stem.end()) {
      manifest.warnings.push_back("no ground truth for image '" + id + "' (" + img.string() + ")");
      continue;
    }
    manifest.pairs.push_back({img, it->second, id, sequence_id});
  }
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, DatasetLayout layout,
                              std::optional<int> expected_count) {
  if (!fs::exists(root) || !fs::is_directory(root)) {
    throw Error("dataset root does not exist: " + root.string());
  }
  DatasetManifest manifest;
  manifest.dataset_id = to_string(layout);
  manifest.root = root;
  manifest.expected_count = expected_count;

  if (layout == DatasetLayout::MocaMask) {
    std::vector<fs::path> sequences;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) sequences.push_back(e.path());
    }
    std::sort(sequences.begin(), sequences.end());
    for (const auto& seq : sequences) {
      const auto image_dir = find_subdir(seq, kImageDirNames);
      const auto gt_dir = find_subdir(seq, kGtDirNames);
      const std::string seq_name = seq.filename().string();
      if (!image_dir || !gt_dir) {
        manifest.warnings.push_back("sequence '" + seq_name + "' lacks image or GT directory");
        continue;
      }
      pair_directories(*image_dir, *gt_dir, seq_name + "/", seq_name, manifest);
    }
  } else {
    const auto image_dir = find_subdir(root, kImageDirNames);
    const auto gt_dir = find_subdir(root, kGtDirNames);
    if (!image_dir || !gt_dir) {
      throw Error("no image/GT directory pair under " + root.string());
    }
    pair_directories(*image_dir, *gt_dir, "", std::nullopt, manifest);
  }

  std::sort(manifest.pairs.begin(), manifest.pairs.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.image_id < b.image_id; });
  if (manifest.pairs.empty()) {
    throw Error("dataset root yielded no image/GT pairs: " + root.string());
  }
  if (expected_count && static_cast<int>(manifest.pairs.size()) != *expected_count) {
    throw Error("dataset " + manifest.dataset_id + " has " + std::to_string(manifest.pairs.size()) +
                " pairs, expected " + std::to_string(*expected_count));
  }
  return manifest;
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;
  for (const auto& pair : manifest.pairs) {
    ++report.checked;
    cv::Mat img = cv::imread(pair.image_path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      report.failures.push_back({pair.image_id, "image does not decode: " + pair.image_path.string()});
      continue;
    }
    cv::Mat gt = cv::imread(pair.gt_path.string(), cv::IMREAD_GRAYSCALE);
    if (gt.empty()) {
      report.failures.push_back({pair.image_id, "ground truth does not decode: " + pair.gt_path.string()});
      continue;
    }
    if (gt.rows != img.rows || gt.cols != img.cols) {
      report.notes.push_back("'" + pair.image_id + "': ground truth is " + std::to_string(gt.cols) + "x" +
                             std::to_string(gt.rows) + " but image is " + std::to_string(img.cols) + "x" +
                             std::to_string(img.rows) + "; predictions are resized to GT at scoring");
    }
  }
  for (const auto& w : manifest.warnings) report.notes.push_back("manifest: " + w);
  return report;
}

std::string ValidationReport::to_text() const {
  std::string out = "checked " + std::to_string(checked) + " pairs, " +
                    std::to_string(failures.size()) + " failures\n";
  for (const auto& f : failures) out += "FAIL " + f.image_id + ": " + f.problem + "\n";
  for (const auto& n : notes) out += "note " + n + "\n";
  return out;
}

std::string DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["dataset_id"] = dataset_id;
  j["root"] = root.string();
  if (expected_count) j["expected_count"] = *expected_count;
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    nlohmann::ordered_json e;
    e["image"] = p.image_path.string();
    e["gt"] = p.gt_path.string();
    e["id"] = p.image_id;
    if (p.sequence_id) e["sequence"] = *p.sequence_id;
    j["pairs"].push_back(e);
  }
  j["warnings"] = warnings;
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DatasetManifest m;
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.root = j.at("root").get<std::string>();
  if (j.contains("expected_count")) m.expected_count = j.at("expected_count").get<int>();
  for (const auto& e : j.at("pairs")) {
    SamplePair p;
    p.image_path = e.at("image").get<std::string>();
    p.gt_path = e.at("gt").get<std::string>();
    p.image_id = e.at("id").get<std::string>();
    if (e.contains("sequence")) p.sequence_id = e.at("sequence").get<std::string>();
    m.pairs.push_back(std::move(p));
  }
  m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

}  // namespace covp
