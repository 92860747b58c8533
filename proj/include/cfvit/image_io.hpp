// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfvit/tensor.hpp"

namespace cfvit::io {

struct Standardization {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};  // ImageNet RGB
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

// Binary PPM (P6, maxval 255). Pixels are scaled to [0, 1] and then
// standardized per channel: (v - mean[c]) / std[c]. Returns [3 x H x W].
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes, const Standardization& norm = {});
std::vector<std::uint8_t> encode_ppm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb);

// Raw tensor image: "CFTI", then C, H, W as u32, then C*H*W little-endian
// f32 values in CHW order. Values are used as-is.
inline constexpr char kRawImageMagic[4] = {'C', 'F', 'T', 'I'};
Tensor decode_raw_image(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_raw_image(const Tensor& image);

// Dispatches on the leading magic ("P6" or "CFTI").
Tensor load_image(const std::filesystem::path& path, const Standardization& norm = {});

}  // namespace cfvit::io
