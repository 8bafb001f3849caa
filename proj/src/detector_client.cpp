#include "covp/detector_client.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "covp/errors.hpp"
#include "covp/image_io.hpp"

namespace covp {

std::string to_string(AggregationStrategy s) {
  switch (s) {
    case AggregationStrategy::FirstSuccess: return "first_success";
    case AggregationStrategy::MedianBox: return "median_box";
    case AggregationStrategy::UnionBox: return "union_box";
  }
  throw PreconditionError("unknown aggregation strategy");
}

AggregationStrategy aggregation_from_string(const std::string& name) {
  if (name == "first_success") return AggregationStrategy::FirstSuccess;
  if (name == "median_box") return AggregationStrategy::MedianBox;
  if (name == "union_box") return AggregationStrategy::UnionBox;
  throw PreconditionError("unknown aggregation strategy: " + name);
}

namespace {

// Parses one real starting at `pos` (whitespace tolerated). Rejects NaN so a
// repaired box can never carry one.
bool parse_real(const std::string& text, std::size_t& pos, double& out) {
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos >= text.size()) return false;
  const char* start = text.c_str() + pos;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(start, &end);
  if (end == start) return false;
  if (std::isnan(v)) return false;
  pos += static_cast<std::size_t>(end - start);
  out = v;
  return true;
}

bool expect_char(const std::string& text, std::size_t& pos, char c) {
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos >= text.size() || text[pos] != c) return false;
  ++pos;
  return true;
}

// Zero-extent axes widen to a 0.01-wide interval inside [0,1], preserving the
// point the detector actually claimed.
void widen_axis(double& lo, double& hi, bool& repaired) {
  if (lo < hi) return;
  const double v = lo;
  lo = std::max(0.0, v - 0.005);
  hi = std::min(1.0, v + 0.005);
  repaired = true;
}

}  // namespace

std::vector<Detection> parse_boxes(const std::string& raw_text) {
  std::vector<Detection> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = raw_text.find('[', pos);
    if (open == std::string::npos) break;
    std::size_t cursor = open + 1;
    double v[4];
    bool ok = true;
    for (int i = 0; i < 4 && ok; ++i) {
      if (i > 0 && !expect_char(raw_text, cursor, ',')) ok = false;
      if (ok && !parse_real(raw_text, cursor, v[i])) ok = false;
    }
    if (ok && !expect_char(raw_text, cursor, ']')) ok = false;
    if (!ok) {
      pos = open + 1;
      continue;
    }
    pos = cursor;

    bool repaired = false;
    for (double& c : v) {
      const double clamped = std::clamp(c, 0.0, 1.0);
      if (clamped != c) repaired = true;
      c = clamped;
    }
    if (v[0] > v[2]) {
      std::swap(v[0], v[2]);
      repaired = true;
    }
    if (v[1] > v[3]) {
      std::swap(v[1], v[3]);
      repaired = true;
    }
    widen_axis(v[0], v[2], repaired);
    widen_axis(v[1], v[3], repaired);

    Detection det;
    det.box = {v[0], v[1], v[2], v[3]};
    det.parse_confidence = repaired ? ParseConfidence::Recovered : ParseConfidence::Clean;
    det.box.validate();
    out.push_back(det);
  }
  if (out.empty()) {
    throw NoDetectionError("no parseable coordinate tuple in reply");
  }
  return out;
}

std::string format_box(const BoundingBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "[%.17g,%.17g,%.17g,%.17g]", box.x1, box.y1, box.x2, box.y2);
  return buf;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::pair<BoundingBox, ImagePoint> aggregate_detections(
    const std::vector<std::vector<Detection>>& per_prompt, AggregationStrategy strategy) {
  // Only the first box of each prompt participates; the task is single-object.
  std::vector<BoundingBox> boxes;
  for (const auto& dets : per_prompt) {
    if (!dets.empty()) boxes.push_back(dets.front().box);
  }
  if (boxes.empty()) throw NoDetectionError("every prompt came back without a detection");

  BoundingBox box;
  switch (strategy) {
    case AggregationStrategy::FirstSuccess:
      box = boxes.front();
      break;
    case AggregationStrategy::MedianBox: {
      std::vector<double> x1, y1, x2, y2;
      for (const auto& b : boxes) {
        x1.push_back(b.x1);
        y1.push_back(b.y1);
        x2.push_back(b.x2);
        y2.push_back(b.y2);
      }
      box = {median(x1), median(y1), median(x2), median(y2)};
      break;
    }
    case AggregationStrategy::UnionBox: {
      box = boxes.front();
      for (const auto& b : boxes) {
        box.x1 = std::min(box.x1, b.x1);
        box.y1 = std::min(box.y1, b.y1);
        box.x2 = std::max(box.x2, b.x2);
        box.y2 = std::max(box.y2, b.y2);
      }
      break;
    }
  }
  box.validate();
  return {box, bbox_center(box)};
}

ReplyCache::ReplyCache(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  std::ifstream in(file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[make_key(j.at("image_sha256"), j.at("prompt_sha256"), j.at("service_id"))] =
          j.at("raw_text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // Torn tail line from an interrupted run; later inserts rewrite it.
    }
  }
}

std::string ReplyCache::make_key(const std::string& image_sha256, const std::string& prompt_sha256,
                            const std::string& service_id) {
  return image_sha256 + "|" + prompt_sha256 + "|" + service_id;
}

std::optional<std::string> ReplyCache::lookup(const std::string& image_sha256,
                                              const std::string& prompt_sha256,
                                              const std::string& service_id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto it = entries_.find(make_key(image_sha256, prompt_sha256, service_id));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplyCache::insert(const std::string& image_sha256, const std::string& prompt_sha256,
                        const std::string& service_id, const std::string& raw_text) {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto [it, fresh] =
      entries_.emplace(make_key(image_sha256, prompt_sha256, service_id), raw_text);
  if (!fresh) return;
  nlohmann::ordered_json j;
  j["image_sha256"] = image_sha256;
  j["prompt_sha256"] = prompt_sha256;
  j["service_id"] = service_id;
  j["raw_text"] = raw_text;
  const auto now = std::chrono::system_clock::now();
  j["timestamp"] = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  std::ofstream out(file_, std::ios::app);
  out << j.dump() << "\n";
  out.flush();
}

std::size_t ReplyCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

DetectorClient::DetectorClient(std::shared_ptr<DetectorService> service, std::shared_ptr<ReplyCache> cache)
    : service_(std::move(service)), cache_(std::move(cache)) {
  if (!service_) throw PreconditionError("detector client needs a service");
  info_ = service_->describe();
}

DetectorReply DetectorClient::query(const Image& image, const std::string& prompt) {
  if (prompt.empty()) throw PreconditionError("empty prompt");
  const std::string prompt_sha = sha256_hex(prompt);
  if (cache_) {
    if (auto hit = cache_->lookup(image.sha256, prompt_sha, info_.id)) {
      return {prompt, *hit, 0.0, true};
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::string raw = service_->query(image, prompt);
  const auto t1 = std::chrono::steady_clock::now();
  if (cache_) cache_->insert(image.sha256, prompt_sha, info_.id, raw);
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return {prompt, std::move(raw), ms, false};
}

}  // namespace covp
