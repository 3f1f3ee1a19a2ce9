#include "repsim/variant_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "repsim/error.hpp"
#include "repsim/image_io.hpp"
#include "repsim/parallel.hpp"

namespace repsim {
namespace fs = std::filesystem;

namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw ValidationError("image dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
}

std::size_t area(int height, int width) {
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<std::uint8_t> pixels,
                         std::string sample_id)
    : height_(height),
      width_(width),
      channels_(channels),
      pixels_(std::move(pixels)),
      sample_id_(std::move(sample_id)) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) {
    throw ValidationError("channel count must be 1 or 3, got " + std::to_string(channels));
  }
  if (pixels_.size() != area(height, width) * static_cast<std::size_t>(channels)) {
    throw ValidationError("pixel buffer size does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
}

ImageTensor::ImageTensor(int height, int width, int channels, std::uint8_t value,
                         std::string sample_id)
    : ImageTensor(height, width, channels,
                  std::vector<std::uint8_t>(area(std::max(height, 0), std::max(width, 0)) *
                                                static_cast<std::size_t>(std::max(channels, 0)),
                                            value),
                  std::move(sample_id)) {}

bool ImageTensor::same_pixels(const ImageTensor& other) const {
  return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_ &&
         pixels_ == other.pixels_;
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  check_dims(height, width);
  if (bits_.size() != area(height, width)) {
    throw ValidationError("mask buffer size does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  for (const auto b : bits_) {
    if (b > 1) throw ValidationError("mask is not binary (found value " + std::to_string(b) + ")");
  }
}

BinaryMask::BinaryMask(int height, int width, bool value)
    : BinaryMask(height, width,
                 std::vector<std::uint8_t>(area(std::max(height, 0), std::max(width, 0)),
                                           value ? 1 : 0)) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
  std::vector<std::uint8_t> flipped(bits_.size());
  std::transform(bits_.begin(), bits_.end(), flipped.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(1 - b); });
  return BinaryMask(height_, width_, std::move(flipped));
}

BinaryMask circular_mask(int height, int width, double radius_fraction) {
  check_dims(height, width);
  if (!(radius_fraction > 0.0 && radius_fraction <= 1.0)) {
    throw ValidationError("radius_fraction must lie in (0, 1], got " +
                          std::to_string(radius_fraction));
  }
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double r = radius_fraction * std::min(height, width) / 2.0;
  const double r2 = r * r;
  std::vector<std::uint8_t> bits(area(height, width));
  for (int y = 0; y < height; ++y) {
    const double dy = y - cy;
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx;
      bits[area(y, width) + static_cast<std::size_t>(x)] = (dx * dx + dy * dy <= r2) ? 1 : 0;
    }
  }
  return BinaryMask(height, width, std::move(bits));
}

ImageTensor apply_mask(const ImageTensor& img, const BinaryMask& mask,
                       std::span<const std::uint8_t> fill) {
  if (mask.height() != img.height() || mask.width() != img.width()) {
    throw ValidationError("mask is " + std::to_string(mask.height()) + "x" +
                          std::to_string(mask.width()) + " but image is " +
                          std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  const int c = img.channels();
  if (fill.size() != 1 && fill.size() != static_cast<std::size_t>(c)) {
    throw ValidationError("fill has " + std::to_string(fill.size()) +
                          " values for a " + std::to_string(c) + "-channel image");
  }
  ImageTensor out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (mask.at(y, x)) continue;
      for (int ch = 0; ch < c; ++ch) {
        out.set(y, x, ch, fill.size() == 1 ? fill[0] : fill[static_cast<std::size_t>(ch)]);
      }
    }
  }
  return out;
}

VariantPair make_variants(const ImageTensor& img, const BinaryMask& mask,
                          std::span<const std::uint8_t> fill) {
  return {apply_mask(img, mask, fill), apply_mask(img, mask.complement(), fill)};
}

VariantPair make_variants(const ImageTensor& img, const MaskSpec& spec) {
  if (spec.kind == MaskKind::Circular) {
    return make_variants(img, circular_mask(img.height(), img.width(), spec.radius_fraction),
                         spec.fill);
  }
  if (spec.mask_path.empty()) throw ValidationError("segmentation spec has no mask path");
  return make_variants(img, read_mask(spec.mask_path), spec.fill);
}

std::pair<std::string, std::string> variant_pair_names(MaskKind kind) {
  if (kind == MaskKind::Circular) return {"center", "border"};
  return {"foreground", "background"};
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

enum class Outcome { Processed, Skipped, Error };

struct ImageResult {
  Outcome outcome = Outcome::Error;
  std::string message;
};

}  // namespace

PipelineSummary run_variant_pipeline(const PipelineOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(options.input_dir, ec)) {
    throw IoError("cannot read input directory '" + options.input_dir.string() + "'");
  }
  if (options.spec.kind == MaskKind::Segmentation && !fs::is_directory(options.mask_dir, ec)) {
    throw IoError("cannot read mask directory '" + options.mask_dir.string() + "'");
  }
  if (options.spec.kind == MaskKind::Circular) {
    // Surface a bad radius once instead of per image.
    circular_mask(1, 1, options.spec.radius_fraction);
  }
  fs::create_directories(options.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + options.output_dir.string() +
                  "': " + ec.message());
  }

  std::vector<fs::path> inputs;
  try {
    for (const auto& entry : fs::directory_iterator(options.input_dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) inputs.push_back(entry.path());
    }
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("cannot list input directory: ") + e.what());
  }
  std::sort(inputs.begin(), inputs.end());

  const auto [kept_name, complement_name] = variant_pair_names(options.spec.kind);
  std::vector<ImageResult> results(inputs.size());

  parallel_for(inputs.size(), [&](std::size_t i) {
    const fs::path& input = inputs[i];
    const std::string stem = input.stem().string();
    ImageResult& result = results[i];
    MaskSpec spec = options.spec;
    if (spec.kind == MaskKind::Segmentation) {
      spec.mask_path = options.mask_dir / (stem + ".png");
      if (!fs::exists(spec.mask_path)) {
        result = {Outcome::Skipped, stem};
        return;
      }
    }
    try {
      const ImageTensor img = read_image(input);
      const VariantPair pair = make_variants(img, spec);
      write_png(pair.kept, options.output_dir / (stem + "." + kept_name + ".png"));
      write_png(pair.complement, options.output_dir / (stem + "." + complement_name + ".png"));
      result = {Outcome::Processed, {}};
    } catch (const std::exception& e) {
      result = {Outcome::Error, input.filename().string() + ": " + e.what()};
    }
  });

  PipelineSummary summary;
  for (const auto& r : results) {
    switch (r.outcome) {
      case Outcome::Processed:
        ++summary.processed;
        break;
      case Outcome::Skipped:
        ++summary.skipped;
        summary.skipped_ids.push_back(r.message);
        std::cerr << "variants: skipping '" << r.message << "' (no mask)\n";
        break;
      case Outcome::Error:
        ++summary.errors;
        summary.error_messages.push_back(r.message);
        std::cerr << "variants: " << r.message << '\n';
        break;
    }
  }

  nlohmann::ordered_json doc;
  doc["processed"] = summary.processed;
  doc["skipped"] = summary.skipped;
  doc["errors"] = summary.errors;
  doc["kind"] = options.spec.kind == MaskKind::Circular ? "circular" : "segmentation";
  if (options.spec.kind == MaskKind::Circular) {
    doc["radius_fraction"] = options.spec.radius_fraction;
  }
  doc["fill"] = options.spec.fill;
  doc["skipped_ids"] = summary.skipped_ids;
  doc["error_messages"] = summary.error_messages;
  const fs::path summary_path = options.output_dir / "summary.json";
  std::ofstream out(summary_path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + summary_path.string() + "'");
  out << doc.dump(2) << '\n';
  return summary;
}

}  // namespace repsim
