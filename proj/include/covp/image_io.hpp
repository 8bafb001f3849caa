#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>

#include "covp/geometry.hpp"

namespace covp {

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& data);

std::string base64_encode(const void* data, std::size_t size);
std::string base64_encode(const std::string& data);
std::string base64_decode(const std::string& text);

// Decoded image plus the canonical PNG bytes sent to services. The content
// hash is over those bytes, so cache keys stay stable across source formats.
struct Image {
  cv::Mat bgr;
  std::string png;
  std::string sha256;

  int height() const { return bgr.rows; }
  int width() const { return bgr.cols; }

  static Image load(const std::filesystem::path& path);
  static Image from_mat(const cv::Mat& bgr);
  static Image from_png(const std::string& png_bytes);
};

// Masks serialize as 8-bit single-channel PNG: 0 background, 255 foreground,
// soft values scaled linearly.
std::string encode_mask_png(const SoftMask& mask);
std::string encode_mask_png(const BinaryMask& mask);
SoftMask decode_soft_mask_png(const std::string& png_bytes);
BinaryMask decode_binary_mask_png(const std::string& png_bytes, int threshold = 128);

void write_mask_png(const std::filesystem::path& path, const SoftMask& mask);
SoftMask read_soft_mask_png(const std::filesystem::path& path);
BinaryMask read_binary_mask_png(const std::filesystem::path& path, int threshold = 128);

// Bilinear resize used when prediction and ground-truth resolutions differ.
SoftMask resize_soft_mask(const SoftMask& mask, int height, int width);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data);

}  // namespace covp
