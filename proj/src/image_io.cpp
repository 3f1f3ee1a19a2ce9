#include "repsim/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "repsim/error.hpp"

namespace repsim {
namespace fs = std::filesystem;

namespace {

cv::Mat decode_unchanged(const fs::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode '" + path.string() + "': " + e.what());
  }
  if (raw.empty()) throw IoError("cannot decode image '" + path.string() + "'");
  if (raw.depth() == CV_16U) {
    cv::Mat narrowed;
    raw.convertTo(narrowed, CV_8U, 1.0 / 257.0);
    raw = narrowed;
  } else if (raw.depth() != CV_8U) {
    throw IoError("'" + path.string() + "': unsupported pixel depth");
  }
  return raw;
}

}  // namespace

ImageTensor read_image(const fs::path& path) {
  const cv::Mat raw = decode_unchanged(path);
  const int channels = raw.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw IoError("'" + path.string() + "': unsupported channel count " + std::to_string(channels));
  }
  const int out_channels = channels == 1 ? 1 : 3;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(raw.rows) *
                                   static_cast<std::size_t>(raw.cols) *
                                   static_cast<std::size_t>(out_channels));
  std::size_t k = 0;
  for (int y = 0; y < raw.rows; ++y) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) {
      const std::uint8_t* px = row + static_cast<std::ptrdiff_t>(x) * channels;
      if (out_channels == 1) {
        pixels[k++] = px[0];
      } else {
        // OpenCV stores BGR(A).
        pixels[k++] = px[2];
        pixels[k++] = px[1];
        pixels[k++] = px[0];
      }
    }
  }
  return ImageTensor(raw.rows, raw.cols, out_channels, std::move(pixels), path.stem().string());
}

void write_png(const ImageTensor& image, const fs::path& path) {
  const int type = image.channels() == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat out(image.height(), image.width(), type);
  for (int y = 0; y < image.height(); ++y) {
    std::uint8_t* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) {
      if (image.channels() == 1) {
        row[x] = image.at(y, x, 0);
      } else {
        row[3 * x + 0] = image.at(y, x, 2);
        row[3 * x + 1] = image.at(y, x, 1);
        row[3 * x + 2] = image.at(y, x, 0);
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write '" + path.string() + "': " + e.what());
  }
  if (!ok) throw IoError("cannot write '" + path.string() + "'");
}

BinaryMask read_mask(const fs::path& path) {
  const cv::Mat raw = decode_unchanged(path);
  if (raw.channels() != 1) {
    throw ValidationError("mask '" + path.string() + "' is not single-channel (" +
                          std::to_string(raw.channels()) + " channels)");
  }
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(raw.rows) *
                                 static_cast<std::size_t>(raw.cols));
  std::size_t k = 0;
  for (int y = 0; y < raw.rows; ++y) {
    const std::uint8_t* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) bits[k++] = row[x] > 127 ? 1 : 0;
  }
  return BinaryMask(raw.rows, raw.cols, std::move(bits));
}

}  // namespace repsim
