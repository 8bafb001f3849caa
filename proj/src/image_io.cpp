#include "covp/image_io.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "covp/errors.hpp"

namespace covp {

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& data) { return sha256_hex(data.data(), data.size()); }

namespace {
const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= size; i += 3) {
    std::uint32_t v = (p[i] << 16) | (p[i + 1] << 8) | p[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
  }
  if (i + 1 == size) {
    std::uint32_t v = p[i] << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == size) {
    std::uint32_t v = (p[i] << 16) | (p[i + 1] << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string base64_encode(const std::string& data) { return base64_encode(data.data(), data.size()); }

std::string base64_decode(const std::string& text) {
  std::string out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = b64_value(c);
    if (v < 0) throw PreconditionError("invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((acc >> bits) & 0xff));
    }
  }
  return out;
}

Image Image::load(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image: " + path.string());
  return from_mat(bgr);
}

Image Image::from_mat(const cv::Mat& bgr) {
  if (bgr.empty()) throw PreconditionError("empty image");
  cv::Mat m = bgr;
  if (m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", m, buf)) throw Error("png encode failed");
  Image img;
  img.bgr = m;
  img.png.assign(buf.begin(), buf.end());
  img.sha256 = sha256_hex(img.png);
  return img;
}

Image Image::from_png(const std::string& png_bytes) {
  std::vector<unsigned char> buf(png_bytes.begin(), png_bytes.end());
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode png buffer");
  Image img;
  img.bgr = bgr;
  img.png = png_bytes;
  img.sha256 = sha256_hex(png_bytes);
  return img;
}

namespace {

std::string encode_gray_png(const cv::Mat& gray) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", gray, buf)) throw Error("png encode failed");
  return std::string(buf.begin(), buf.end());
}

cv::Mat decode_gray_png(const std::string& png_bytes) {
  std::vector<unsigned char> buf(png_bytes.begin(), png_bytes.end());
  cv::Mat gray = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error("cannot decode mask png");
  return gray;
}

}  // namespace

std::string encode_mask_png(const SoftMask& mask) {
  mask.validate();
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int r = 0; r < mask.height; ++r) {
    auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width; ++c) {
      row[c] = static_cast<std::uint8_t>(std::lround(mask.at(r, c) * 255.0f));
    }
  }
  return encode_gray_png(gray);
}

std::string encode_mask_png(const BinaryMask& mask) {
  mask.validate();
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int r = 0; r < mask.height; ++r) {
    auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width; ++c) row[c] = mask.at(r, c) ? 255 : 0;
  }
  return encode_gray_png(gray);
}

SoftMask decode_soft_mask_png(const std::string& png_bytes) {
  cv::Mat gray = decode_gray_png(png_bytes);
  SoftMask mask{gray.rows, gray.cols, {}};
  mask.values.resize(static_cast<size_t>(gray.rows) * gray.cols);
  for (int r = 0; r < gray.rows; ++r) {
    const auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < gray.cols; ++c) mask.at(r, c) = static_cast<float>(row[c]) / 255.0f;
  }
  return mask;
}

BinaryMask decode_binary_mask_png(const std::string& png_bytes, int threshold) {
  cv::Mat gray = decode_gray_png(png_bytes);
  BinaryMask mask{gray.rows, gray.cols, {}};
  mask.values.resize(static_cast<size_t>(gray.rows) * gray.cols);
  for (int r = 0; r < gray.rows; ++r) {
    const auto* row = gray.ptr<std::uint8_t>(r);
    for (int c = 0; c < gray.cols; ++c) mask.at(r, c) = row[c] >= threshold ? 1 : 0;
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const SoftMask& mask) {
  write_file(path, encode_mask_png(mask));
}

SoftMask read_soft_mask_png(const std::filesystem::path& path) {
  return decode_soft_mask_png(read_file(path));
}

BinaryMask read_binary_mask_png(const std::filesystem::path& path, int threshold) {
  return decode_binary_mask_png(read_file(path), threshold);
}

SoftMask resize_soft_mask(const SoftMask& mask, int height, int width) {
  mask.validate();
  if (mask.height == height && mask.width == width) return mask;
  cv::Mat src(mask.height, mask.width, CV_32FC1, const_cast<float*>(mask.values.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  SoftMask out{height, width, {}};
  out.values.resize(static_cast<size_t>(height) * width);
  for (int r = 0; r < height; ++r) {
    const float* row = dst.ptr<float>(r);
    for (int c = 0; c < width; ++c) out.at(r, c) = std::clamp(row[c], 0.0f, 1.0f);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("short write: " + path.string());
}

}  // namespace covp
