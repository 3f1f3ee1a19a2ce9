#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace repsim {

/// H x W x C interleaved 8-bit image, C in {1, 3}. Colour images are RGB.
class ImageTensor {
 public:
  ImageTensor(int height, int width, int channels, std::vector<std::uint8_t> pixels,
              std::string sample_id = {});
  /// Image filled with a constant value on every channel.
  ImageTensor(int height, int width, int channels, std::uint8_t value = 0,
              std::string sample_id = {});

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  const std::string& sample_id() const { return sample_id_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }

  std::uint8_t at(int y, int x, int c) const {
    return pixels_[index(y, x, c)];
  }
  void set(int y, int x, int c, std::uint8_t value) { pixels_[index(y, x, c)] = value; }

  bool same_pixels(const ImageTensor& other) const;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_;
  int width_;
  int channels_;
  std::vector<std::uint8_t> pixels_;
  std::string sample_id_;
};

/// H x W indicator grid; 1 marks pixels kept by the mask.
class BinaryMask {
 public:
  /// Throws ValidationError if any value is not 0 or 1.
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);
  BinaryMask(int height, int width, bool value);

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int y, int x) const {
    return bits_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                 static_cast<std::size_t>(x)] != 0;
  }
  std::size_t count() const;
  BinaryMask complement() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

enum class MaskKind { Circular, Segmentation };

struct MaskSpec {
  MaskKind kind = MaskKind::Circular;
  /// Circle radius as a fraction of min(H, W) / 2. Circular only.
  double radius_fraction = 0.5;
  /// One value broadcast to every channel, or one value per channel.
  std::vector<std::uint8_t> fill = {0};
  /// Single-channel mask image, value > 127 is foreground. Segmentation only.
  std::filesystem::path mask_path;
};

/// mask(y, x) = 1 iff (x - cx)^2 + (y - cy)^2 <= r^2 with cx = (w - 1) / 2,
/// cy = (h - 1) / 2 and r = radius_fraction * min(h, w) / 2.
BinaryMask circular_mask(int height, int width, double radius_fraction);

/// Pixels where the mask is 1 are copied from img, the rest take `fill`.
ImageTensor apply_mask(const ImageTensor& img, const BinaryMask& mask,
                       std::span<const std::uint8_t> fill);

struct VariantPair {
  ImageTensor kept;        // Center or Foreground
  ImageTensor complement;  // Border or Background
};

VariantPair make_variants(const ImageTensor& img, const BinaryMask& mask,
                          std::span<const std::uint8_t> fill);

/// Builds the mask from the spec (loading mask_path for Segmentation) and
/// splits the image into the complementary pair.
VariantPair make_variants(const ImageTensor& img, const MaskSpec& spec);

/// Variant names used for output files: {"center", "border"} or
/// {"foreground", "background"}.
std::pair<std::string, std::string> variant_pair_names(MaskKind kind);

struct PipelineOptions {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir;
  std::filesystem::path mask_dir;  // required for Segmentation
  MaskSpec spec;
};

struct PipelineSummary {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::size_t errors = 0;
  std::vector<std::string> skipped_ids;
  std::vector<std::string> error_messages;
};

/// Writes `<stem>.<variant>.png` for both variants of every decodable image
/// and `summary.json` into output_dir. Images without a mask (Segmentation)
/// are skipped; undecodable images are counted as errors. Throws IoError if
/// the input directory cannot be listed.
PipelineSummary run_variant_pipeline(const PipelineOptions& options);

}  // namespace repsim
