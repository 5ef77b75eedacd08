#include "polypeval/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "polypeval/errors.hpp"
#include "polypeval/hash.hpp"

namespace polypeval {

namespace {

Image from_bgr(const cv::Mat& decoded) {
  cv::Mat rgb;
  if (decoded.channels() == 1) {
    cv::cvtColor(decoded, rgb, cv::COLOR_GRAY2RGB);
  } else if (decoded.channels() == 4) {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
  }
  Image img;
  img.width = rgb.cols;
  img.height = rgb.rows;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3, img.pixels.begin() + img.index(0, y));
  }
  return img;
}

cv::Mat to_bgr(const Image& img) {
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  pixels.resize(static_cast<std::size_t>(w > 0 ? w : 0) * (h > 0 ? h : 0) * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat decoded = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw IoError("cannot decode image " + path.string());
  if (decoded.depth() != CV_8U) {
    decoded.convertTo(decoded, CV_8U, decoded.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  return from_bgr(decoded);
}

void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw IoError("refusing to write empty image " + path.string());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), to_bgr(img));
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

std::vector<std::uint8_t> encode_png(const Image& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_bgr(img), out)) throw IoError("PNG encoding failed");
  return out;
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  cv::Mat decoded = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw IoError("cannot decode in-memory image");
  return from_bgr(decoded);
}

std::string image_digest(const Image& img) {
  std::vector<std::uint8_t> buf;
  buf.reserve(img.pixels.size() + 8);
  for (int v : {img.width, img.height}) {
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<std::uint8_t>((static_cast<std::uint32_t>(v) >> s) & 0xff));
  }
  buf.insert(buf.end(), img.pixels.begin(), img.pixels.end());
  return sha256_hex(buf);
}

}  // namespace polypeval
