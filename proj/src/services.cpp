#include "covp/services.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <thread>

#include <httplib.h>

namespace covp {

void sleep_ms(int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_http_url(const std::string& url) {
  const std::string prefix = "http://";
  if (url.rfind(prefix, 0) != 0) throw PreconditionError("endpoint is not an http:// url: " + url);
  std::string rest = url.substr(prefix.size());
  ParsedUrl out;
  auto slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  out.path = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = authority.find(':');
  if (colon == std::string::npos) {
    out.host = authority;
  } else {
    out.host = authority.substr(0, colon);
    out.port = std::stoi(authority.substr(colon + 1));
  }
  if (out.host.empty()) throw PreconditionError("endpoint has no host: " + url);
  return out;
}

class HttpJsonTransport final : public JsonTransport {
 public:
  HttpJsonTransport(std::string url, int timeout_sec) : url_(std::move(url)), timeout_sec_(timeout_sec) {
    parsed_ = parse_http_url(url_);
  }

  std::string id() const override { return url_; }

  nlohmann::json roundtrip(const nlohmann::json& request) override {
    httplib::Client client(parsed_.host, parsed_.port);
    client.set_connection_timeout(timeout_sec_, 0);
    client.set_read_timeout(timeout_sec_, 0);
    client.set_write_timeout(timeout_sec_, 0);
    auto res = client.Post(parsed_.path, request.dump(), "application/json");
    if (!res) {
      throw ServiceError("http transport failure: " + httplib::to_string(res.error()) + " (" + url_ + ")",
                         /*retriable=*/true);
    }
    if (res->status < 200 || res->status >= 300) {
      const bool retriable = res->status >= 500;
      throw ServiceError("http status " + std::to_string(res->status) + " from " + url_, retriable);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ServiceError(std::string("malformed json reply: ") + e.what(), /*retriable=*/false);
    }
  }

 private:
  std::string url_;
  int timeout_sec_;
  ParsedUrl parsed_;
};

// Line-delimited JSON over a child process' stdin/stdout. The child is
// spawned lazily and respawned after a broken pipe so retries can succeed.
class SubprocessJsonTransport final : public JsonTransport {
 public:
  explicit SubprocessJsonTransport(std::string command) : command_(std::move(command)) {
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });
  }

  ~SubprocessJsonTransport() override { stop(); }

  std::string id() const override { return "exec:" + command_; }

  nlohmann::json roundtrip(const nlohmann::json& request) override {
    std::lock_guard<std::mutex> lock(mutex_);
    if (pid_ < 0) start();
    const std::string line = request.dump() + "\n";
    if (!write_all(line)) {
      stop();
      throw ServiceError("subprocess pipe closed while writing (" + command_ + ")", /*retriable=*/true);
    }
    std::string reply;
    if (!read_line(reply)) {
      stop();
      throw ServiceError("subprocess produced no reply (" + command_ + ")", /*retriable=*/true);
    }
    try {
      return nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception& e) {
      throw ServiceError(std::string("malformed json line from subprocess: ") + e.what(),
                         /*retriable=*/false);
    }
  }

 private:
  void start() {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error("pipe() failed");
    pid_ = fork();
    if (pid_ < 0) throw Error("fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    buffer_.clear();
  }

  void stop() {
    if (in_fd_ >= 0) close(in_fd_);
    if (out_fd_ >= 0) close(out_fd_);
    in_fd_ = out_fd_ = -1;
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      int status = 0;
      waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }

  bool write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      ssize_t n = write(in_fd_, data.data() + off, data.size() - off);
      if (n <= 0) return false;
      off += static_cast<std::size_t>(n);
    }
    return true;
  }

  bool read_line(std::string& out) {
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        out = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return true;
      }
      char chunk[4096];
      ssize_t n = read(out_fd_, chunk, sizeof(chunk));
      if (n <= 0) return false;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

}  // namespace

std::unique_ptr<JsonTransport> make_http_transport(const std::string& url, int timeout_sec) {
  return std::make_unique<HttpJsonTransport>(url, timeout_sec);
}

std::unique_ptr<JsonTransport> make_subprocess_transport(const std::string& command) {
  return std::make_unique<SubprocessJsonTransport>(command);
}

bool is_mock_endpoint(const std::string& endpoint) { return endpoint.rfind("mock:", 0) == 0; }

std::unique_ptr<JsonTransport> make_transport(const std::string& endpoint) {
  if (is_mock_endpoint(endpoint)) return nullptr;
  if (endpoint.rfind("http://", 0) == 0) return make_http_transport(endpoint);
  if (endpoint.rfind("exec:", 0) == 0) return make_subprocess_transport(endpoint.substr(5));
  throw PreconditionError("unsupported endpoint (expect http://, exec: or mock:): " + endpoint);
}

nlohmann::json detector_request_json(const Image& image, const std::string& prompt) {
  return {{"image", base64_encode(image.png)}, {"prompt", prompt}};
}

nlohmann::json extractor_request_json(const Image& image, const ResizePolicy& policy) {
  return {{"image", base64_encode(image.png)},
          {"resize_policy", {{"short_side", policy.short_side}, {"mode", policy.mode}}}};
}

nlohmann::json segmenter_request_json(const Image& image, const std::vector<ImagePoint>& points,
                                      const std::optional<BoundingBox>& box) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"x", p.x}, {"y", p.y}, {"label", p.label == PointLabel::Positive ? 1 : 0}});
  }
  nlohmann::json req = {{"image", base64_encode(image.png)}, {"points", pts}};
  if (box) {
    req["box"] = {{"x1", box->x1}, {"y1", box->y1}, {"x2", box->x2}, {"y2", box->y2}};
  }
  return req;
}

namespace {

std::string floats_to_le_bytes(const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    bytes[i * 4 + 0] = static_cast<char>(u & 0xff);
    bytes[i * 4 + 1] = static_cast<char>((u >> 8) & 0xff);
    bytes[i * 4 + 2] = static_cast<char>((u >> 16) & 0xff);
    bytes[i * 4 + 3] = static_cast<char>((u >> 24) & 0xff);
  }
  return bytes;
}

std::vector<float> le_bytes_to_floats(const std::string& bytes) {
  if (bytes.size() % 4 != 0) throw ServiceError("float payload not a multiple of 4 bytes", false);
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + 0]))) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + 1])) << 8) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + 2])) << 16) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + 3])) << 24);
    values[i] = std::bit_cast<float>(u);
  }
  return values;
}

}  // namespace

nlohmann::json feature_map_to_reply(const FeatureMap& fm) {
  fm.validate();
  return {{"h", fm.height},
          {"w", fm.width},
          {"d", fm.dim},
          {"patch_size", fm.patch_size},
          {"data", base64_encode(floats_to_le_bytes(fm.data))}};
}

FeatureMap feature_map_from_reply(const nlohmann::json& reply) {
  FeatureMap fm;
  try {
    fm.height = reply.at("h").get<int>();
    fm.width = reply.at("w").get<int>();
    fm.dim = reply.at("d").get<int>();
    fm.patch_size = reply.at("patch_size").get<int>();
    fm.data = le_bytes_to_floats(base64_decode(reply.at("data").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed feature map reply: ") + e.what(), /*retriable=*/false);
  }
  fm.validate();
  return fm;
}

nlohmann::json candidates_to_reply(const std::vector<MaskCandidate>& candidates) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : candidates) {
    arr.push_back({{"mask", base64_encode(encode_mask_png(c.mask))}, {"confidence", c.confidence}});
  }
  return {{"candidates", arr}};
}

std::vector<MaskCandidate> candidates_from_reply(const nlohmann::json& reply) {
  std::vector<MaskCandidate> out;
  try {
    for (const auto& e : reply.at("candidates")) {
      MaskCandidate c;
      c.mask = decode_soft_mask_png(base64_decode(e.at("mask").get<std::string>()));
      c.confidence = e.at("confidence").get<double>();
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed segmenter reply: ") + e.what(), /*retriable=*/false);
  }
  if (out.empty()) throw ServiceError("segmenter returned no candidates", /*retriable=*/false);
  return out;
}

namespace {

class RemoteDetector final : public DetectorService {
 public:
  RemoteDetector(std::shared_ptr<JsonTransport> transport, RetryPolicy retry)
      : transport_(std::move(transport)), retry_(retry) {}

  ServiceInfo describe() const override { return {"detector@" + transport_->id(), 4}; }

  std::string query(const Image& image, const std::string& prompt) override {
    if (prompt.empty()) throw PreconditionError("empty prompt");
    const auto request = detector_request_json(image, prompt);
    return with_retries(retry_, [&] {
      const auto reply = transport_->roundtrip(request);
      try {
        return reply.at("text").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ServiceError(std::string("malformed detector reply: ") + e.what(), /*retriable=*/false);
      }
    });
  }

 private:
  std::shared_ptr<JsonTransport> transport_;
  RetryPolicy retry_;
};

class RemoteExtractor final : public FeatureExtractorService {
 public:
  RemoteExtractor(std::shared_ptr<JsonTransport> transport, RetryPolicy retry)
      : transport_(std::move(transport)), retry_(retry) {}

  ServiceInfo describe() const override { return {"extractor@" + transport_->id(), 2}; }

  FeatureMap extract(const Image& image, const ResizePolicy& policy) override {
    const auto request = extractor_request_json(image, policy);
    return with_retries(retry_, [&] { return feature_map_from_reply(transport_->roundtrip(request)); });
  }

 private:
  std::shared_ptr<JsonTransport> transport_;
  RetryPolicy retry_;
};

class RemoteSegmenter final : public SegmenterService {
 public:
  RemoteSegmenter(std::shared_ptr<JsonTransport> transport, RetryPolicy retry)
      : transport_(std::move(transport)), retry_(retry) {}

  ServiceInfo describe() const override { return {"segmenter@" + transport_->id(), 2}; }

  std::vector<MaskCandidate> segment(const Image& image, const std::vector<ImagePoint>& points,
                                     const std::optional<BoundingBox>& box) override {
    if (points.empty() && !box) throw PreconditionError("segment needs at least one point or a box");
    const auto request = segmenter_request_json(image, points, box);
    return with_retries(retry_, [&] { return candidates_from_reply(transport_->roundtrip(request)); });
  }

 private:
  std::shared_ptr<JsonTransport> transport_;
  RetryPolicy retry_;
};

}  // namespace

std::unique_ptr<DetectorService> make_remote_detector(std::shared_ptr<JsonTransport> transport,
                                                      RetryPolicy retry) {
  return std::make_unique<RemoteDetector>(std::move(transport), retry);
}

std::unique_ptr<FeatureExtractorService> make_remote_extractor(std::shared_ptr<JsonTransport> transport,
                                                               RetryPolicy retry) {
  return std::make_unique<RemoteExtractor>(std::move(transport), retry);
}

std::unique_ptr<SegmenterService> make_remote_segmenter(std::shared_ptr<JsonTransport> transport,
                                                        RetryPolicy retry) {
  return std::make_unique<RemoteSegmenter>(std::move(transport), retry);
}

}  // namespace covp
