#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace llapa::maskgrid {

/// Binary H x W pixel mask.
struct PixelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  PixelMask() = default;
  PixelMask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  bool any() const;

  friend bool operator==(const PixelMask&, const PixelMask&) = default;
};

/// Binary patch-grid weights for `images` images, each side x side, stored
/// image-major then row-major. This is also the token order of a FeatureMap.
struct PatchWeights {
  std::size_t side = 0;
  std::size_t images = 0;
  std::vector<std::uint8_t> values;

  PatchWeights() = default;
  PatchWeights(std::size_t side_, std::size_t images_)
      : side(side_), images(images_), values(side_ * side_ * images_, 0) {}

  std::size_t tokens() const { return values.size(); }
  std::size_t tokens_per_image() const { return side * side; }
  std::uint8_t& at(std::size_t image, std::size_t r, std::size_t c) {
    return values[(image * side + r) * side + c];
  }
  std::uint8_t at(std::size_t image, std::size_t r, std::size_t c) const {
    return values[(image * side + r) * side + c];
  }
  bool any() const;
  std::size_t count() const;
  PatchWeights image(std::size_t i) const;

  friend bool operator==(const PatchWeights&, const PatchWeights&) = default;
};

/// Adaptive max pooling of a pixel mask onto a P x P grid. Throws ConfigError
/// unless both image dimensions are multiples of P.
PatchWeights pool_mask(const PixelMask& mask, std::size_t grid);

/// Elementwise OR. Throws ContractError on an empty list, DimensionError on
/// mismatched shapes.
PatchWeights aggregate_or(std::span<const PatchWeights> weights);

/// Per image, OR over clauses, then images concatenated in order.
/// `per_clause[i][j]` holds the single-image weights of clause j on image i.
PatchWeights build_global_mask(const std::vector<std::vector<PatchWeights>>& per_clause);

/// Same aggregation restricted to the clause indices in `ctrf_indices`;
/// an empty set yields the all-zero mask.
PatchWeights build_ctrf_mask(const std::vector<std::vector<PatchWeights>>& per_clause,
                             const std::set<std::size_t>& ctrf_indices);

// Portable graymap (binary P5) dumps for inspection.
std::string to_pgm(const PixelMask& mask);
std::string to_pgm(const PatchWeights& weights, std::size_t image, std::size_t cell_pixels = 8);

}  // namespace llapa::maskgrid
