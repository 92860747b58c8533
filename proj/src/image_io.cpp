// SPDX-License-Identifier: Apache-2.0
#include "cfvit/image_io.hpp"

#include <cctype>
#include <cstring>
#include <string>

#include "cfvit/weights_io.hpp"

namespace cfvit::io {

namespace {

class PpmHeader {
 public:
  explicit PpmHeader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (++digits > 9) throw Error(ErrorKind::Parse, std::string("PPM ") + what + " too large");
    }
    if (digits == 0) throw Error(ErrorKind::Parse, std::string("PPM header: missing ") + what);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes, const Standardization& norm) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw Error(ErrorKind::Parse, "not a binary PPM (P6)");
  PpmHeader h(bytes);
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) throw Error(ErrorKind::Parse, "PPM has zero extent");
  if (maxval != 255) throw Error(ErrorKind::Parse, "PPM maxval must be 255, got " + std::to_string(maxval));
  if (h.pos() >= bytes.size() || !std::isspace(bytes[h.pos()])) {
    throw Error(ErrorKind::Parse, "PPM header not terminated by whitespace");
  }
  h.advance();
  const std::size_t need = 3 * width * height;
  if (bytes.size() - h.pos() < need) {
    throw Error(ErrorKind::Parse, "truncated PPM pixel data: needs " + std::to_string(need) + " bytes, has " +
                                      std::to_string(bytes.size() - h.pos()));
  }
  Tensor img({3, height, width});
  const std::uint8_t* px = bytes.data() + h.pos();
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = static_cast<float>(px[(y * width + x) * 3 + c]) / 255.0f;
        img[(c * height + y) * width + x] = (v - norm.mean[c]) / norm.std[c];
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_ppm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != 3 * width * height) throw Error(ErrorKind::Dimension, "PPM pixel buffer size mismatch");
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Tensor decode_raw_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw Error(ErrorKind::Parse, "truncated CFTI header: needs 16 bytes");
  if (std::memcmp(bytes.data(), kRawImageMagic, 4) != 0) throw Error(ErrorKind::Parse, "bad magic (expected \"CFTI\")");
  std::uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 4, 12);
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw Error(ErrorKind::Parse, "CFTI has zero extent");
  const std::uint64_t numel = static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() - 16 != 4 * numel) {
    throw Error(ErrorKind::Parse, "CFTI payload is " + std::to_string(bytes.size() - 16) + " bytes, header implies " +
                                      std::to_string(4 * numel));
  }
  std::vector<float> data(numel);
  std::memcpy(data.data(), bytes.data() + 16, 4 * numel);
  return Tensor({dims[0], dims[1], dims[2]}, std::move(data));
}

std::vector<std::uint8_t> encode_raw_image(const Tensor& image) {
  if (image.rank() != 3) throw Error(ErrorKind::Dimension, "CFTI images are rank 3 (C x H x W)");
  std::vector<std::uint8_t> out(16 + 4 * image.size());
  std::memcpy(out.data(), kRawImageMagic, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto e = static_cast<std::uint32_t>(image.extent(i));
    std::memcpy(out.data() + 4 + 4 * i, &e, 4);
  }
  std::memcpy(out.data() + 16, image.data().data(), 4 * image.size());
  return out;
}

Tensor load_image(const std::filesystem::path& path, const Standardization& norm) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kRawImageMagic, 4) == 0) return decode_raw_image(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, norm);
  throw Error(ErrorKind::Parse, "'" + path.string() + "' is neither a P6 PPM nor a CFTI tensor");
}

}  // namespace cfvit::io
