#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "covp/geometry.hpp"
#include "covp/services.hpp"

namespace covp {

struct DetectorReply {
  std::string prompt_text;
  std::string raw_text;  // byte-exact service reply
  double latency_ms = 0.0;
  bool cached = false;
};

enum class ParseConfidence { Clean, Recovered };

struct Detection {
  BoundingBox box;
  int source_prompt_index = 0;
  // Recovered means coordinate repair (clamping, reordering, or widening a
  // degenerate box) was applied to the raw tuple.
  ParseConfidence parse_confidence = ParseConfidence::Clean;
};

enum class AggregationStrategy { FirstSuccess, MedianBox, UnionBox };

std::string to_string(AggregationStrategy s);
AggregationStrategy aggregation_from_string(const std::string& name);

// Extracts every bracketed 4-tuple of reals from free-form text, in order of
// appearance. Out-of-range values are clamped to [0,1], flipped corners are
// reordered, and zero-extent boxes are widened; any repair downgrades the
// detection to Recovered. Throws NoDetectionError when nothing parses.
std::vector<Detection> parse_boxes(const std::string& raw_text);

// "[x1,y1,x2,y2]" with round-trippable precision.
std::string format_box(const BoundingBox& box);

// Folds per-prompt detections into one box; the initial point is its center.
// MedianBox takes the coordinate-wise median over each prompt's first
// detection, UnionBox their min/max envelope, FirstSuccess the first hit.
std::pair<BoundingBox, ImagePoint> aggregate_detections(
    const std::vector<std::vector<Detection>>& per_prompt, AggregationStrategy strategy);

// Append-only JSON-lines cache of raw replies, keyed by image hash, prompt
// hash, and service id. Reads are lock-free after load; writes serialize.
class ReplyCache {
 public:
  explicit ReplyCache(std::filesystem::path file);

  static std::string make_key(const std::string& image_sha256, const std::string& prompt_sha256,
                              const std::string& service_id);

  std::optional<std::string> lookup(const std::string& image_sha256, const std::string& prompt_sha256,
                                    const std::string& service_id) const;
  void insert(const std::string& image_sha256, const std::string& prompt_sha256,
              const std::string& service_id, const std::string& raw_text);
  std::size_t size() const;
  const std::filesystem::path& path() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
};

// Cache-first detector access. On a miss the service is queried (with the
// adapter's retry policy) and the verbatim reply persisted.
class DetectorClient {
 public:
  DetectorClient(std::shared_ptr<DetectorService> service, std::shared_ptr<ReplyCache> cache);

  DetectorReply query(const Image& image, const std::string& prompt);
  const ServiceInfo& info() const { return info_; }

 private:
  std::shared_ptr<DetectorService> service_;
  std::shared_ptr<ReplyCache> cache_;  // may be null (caching disabled)
  ServiceInfo info_;
};

}  // namespace covp
