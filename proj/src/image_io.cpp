#include "dualface/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace dualface {
namespace {

GrayImage from_mat(const cv::Mat& mat) {
  GrayImage out(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* src = mat.ptr<std::uint8_t>(y);
    std::copy(src, src + mat.cols, out.row(y).begin());
  }
  return out;
}

cv::Mat to_mat(const GrayImage& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    auto row = image.row(y);
    std::copy(row.begin(), row.end(), mat.ptr<std::uint8_t>(y));
  }
  return mat;
}

}  // namespace

GrayImage read_gray8(const std::filesystem::path& path, bool allow_color) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot read raster " + path.string());
  if (mat.depth() != CV_8U) throw IoError(path.string() + ": expected an 8-bit raster");
  if (mat.channels() != 1) {
    if (!allow_color) throw IoError(path.string() + ": expected a single-channel raster");
    cv::Mat gray;
    cv::cvtColor(mat, gray, mat.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    mat = gray;
  }
  return from_mat(mat);
}

void write_gray8(const std::filesystem::path& path, const GrayImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_mat(image))) throw IoError("cannot write raster " + path.string());
}

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(image), bytes)) throw IoError("png encoding failed");
  return bytes;
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes) {
  cv::Mat mat = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw IoError("png decoding failed");
  return from_mat(mat);
}

GrayImage to_gray8(const BinaryRaster& raster) {
  GrayImage out(raster.size());
  auto src = raster.cells();
  auto dst = out.cells();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 255 : 0;
  return out;
}

BinaryRaster from_gray8(const GrayImage& image) {
  BinaryRaster out(image.size());
  auto src = image.cells();
  auto dst = out.cells();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= 128 ? 1 : 0;
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

}  // namespace dualface
