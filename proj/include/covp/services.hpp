#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covp/errors.hpp"
#include "covp/geometry.hpp"
#include "covp/image_io.hpp"

namespace covp {

struct ServiceInfo {
  std::string id;
  int max_concurrency = 1;
};

struct ResizePolicy {
  int short_side = 448;
  std::string mode = "short_side_center_crop";  // grid snaps to patch multiples

  bool operator==(const ResizePolicy&) const = default;
};

struct MaskCandidate {
  SoftMask mask;
  double confidence = 0.0;
};

// The three foundation models are consumed as opaque services behind these
// two-method contracts. Adapters exist for HTTP, subprocess pipes, and the
// offline mocks.
class DetectorService {
 public:
  virtual ~DetectorService() = default;
  virtual ServiceInfo describe() const = 0;
  virtual std::string query(const Image& image, const std::string& prompt) = 0;
};

class FeatureExtractorService {
 public:
  virtual ~FeatureExtractorService() = default;
  virtual ServiceInfo describe() const = 0;
  virtual FeatureMap extract(const Image& image, const ResizePolicy& policy) = 0;
};

class SegmenterService {
 public:
  virtual ~SegmenterService() = default;
  virtual ServiceInfo describe() const = 0;
  virtual std::vector<MaskCandidate> segment(const Image& image, const std::vector<ImagePoint>& points,
                                             const std::optional<BoundingBox>& box) = 0;
};

class ParaphraseService {
 public:
  virtual ~ParaphraseService() = default;
  virtual std::vector<std::string> paraphrase(const std::string& text, int count) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 100;
};

void sleep_ms(int ms);

// Runs fn, retrying retriable ServiceErrors up to the attempt budget.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  int attempt = 0;
  for (;;) {
    try {
      return fn();
    } catch (const ServiceError& e) {
      ++attempt;
      if (!e.retriable || attempt >= policy.max_attempts) throw;
      if (policy.backoff_ms > 0) {
        sleep_ms(policy.backoff_ms * attempt);
      }
    }
  }
}

// One JSON request in, one JSON reply out. HTTP POST and line-delimited JSON
// over a subprocess pipe implement the same contract.
class JsonTransport {
 public:
  virtual ~JsonTransport() = default;
  virtual std::string id() const = 0;
  virtual nlohmann::json roundtrip(const nlohmann::json& request) = 0;
};

// POSTs the request body to http://host:port/path.
std::unique_ptr<JsonTransport> make_http_transport(const std::string& url, int timeout_sec = 120);

// Spawns `command` via /bin/sh; each request is one line on stdin, each reply
// one line on stdout.
std::unique_ptr<JsonTransport> make_subprocess_transport(const std::string& command);

// Endpoint strings: "http://host:port/path" or "exec:command args".
// Returns nullptr for "mock:" endpoints; the caller wires mocks itself.
std::unique_ptr<JsonTransport> make_transport(const std::string& endpoint);
bool is_mock_endpoint(const std::string& endpoint);

// Wire codecs shared by remote adapters and the bundled stub service.
nlohmann::json detector_request_json(const Image& image, const std::string& prompt);
nlohmann::json extractor_request_json(const Image& image, const ResizePolicy& policy);
nlohmann::json segmenter_request_json(const Image& image, const std::vector<ImagePoint>& points,
                                      const std::optional<BoundingBox>& box);
FeatureMap feature_map_from_reply(const nlohmann::json& reply);
nlohmann::json feature_map_to_reply(const FeatureMap& fm);
std::vector<MaskCandidate> candidates_from_reply(const nlohmann::json& reply);
nlohmann::json candidates_to_reply(const std::vector<MaskCandidate>& candidates);

std::unique_ptr<DetectorService> make_remote_detector(std::shared_ptr<JsonTransport> transport,
                                                      RetryPolicy retry = {});
std::unique_ptr<FeatureExtractorService> make_remote_extractor(std::shared_ptr<JsonTransport> transport,
                                                               RetryPolicy retry = {});
std::unique_ptr<SegmenterService> make_remote_segmenter(std::shared_ptr<JsonTransport> transport,
                                                        RetryPolicy retry = {});

}  // namespace covp
