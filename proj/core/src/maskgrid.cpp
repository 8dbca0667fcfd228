#include "llapa/maskgrid.hpp"

#include <algorithm>

#include "llapa/error.hpp"

namespace llapa::maskgrid {

bool PixelMask::any() const {
  return std::any_of(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; });
}

bool PatchWeights::any() const {
  return std::any_of(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; });
}

std::size_t PatchWeights::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

PatchWeights PatchWeights::image(std::size_t i) const {
  if (i >= images) throw ContractError("image index " + std::to_string(i) + " out of range");
  PatchWeights out(side, 1);
  std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i * tokens_per_image()), tokens_per_image(),
              out.values.begin());
  return out;
}

PatchWeights pool_mask(const PixelMask& mask, std::size_t grid) {
  if (grid == 0 || mask.height % grid != 0 || mask.width % grid != 0) {
    throw ConfigError("mask of " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                      " pixels does not tile into a " + std::to_string(grid) + "x" + std::to_string(grid) + " grid");
  }
  const std::size_t bh = mask.height / grid, bw = mask.width / grid;
  PatchWeights out(grid, 1);
  for (std::size_t r = 0; r < mask.height; ++r) {
    for (std::size_t c = 0; c < mask.width; ++c) {
      if (mask.at(r, c)) out.at(0, r / bh, c / bw) = 1;
    }
  }
  return out;
}

PatchWeights aggregate_or(std::span<const PatchWeights> weights) {
  if (weights.empty()) throw ContractError("aggregate_or of an empty list");
  PatchWeights out = weights.front();
  for (const auto& w : weights.subspan(1)) {
    if (w.side != out.side || w.images != out.images) {
      throw DimensionError("aggregate_or shape mismatch: " + std::to_string(w.images) + "x" +
                           std::to_string(w.side) + "^2 vs " + std::to_string(out.images) + "x" +
                           std::to_string(out.side) + "^2");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] |= w.values[i];
  }
  return out;
}

namespace {

void check_rectangular(const std::vector<std::vector<PatchWeights>>& per_clause) {
  if (per_clause.empty()) throw DimensionError("per-clause weights cover no images");
  const std::size_t clauses = per_clause.front().size();
  if (clauses == 0) throw DimensionError("per-clause weights cover no clauses");
  for (const auto& row : per_clause) {
    if (row.size() != clauses) throw DimensionError("ragged per-clause weights");
    for (const auto& w : row) {
      if (w.images != 1 || w.side != row.front().side || w.side != per_clause.front().front().side) {
        throw DimensionError("per-clause weights must be single-image grids of equal side");
      }
    }
  }
}

PatchWeights concat_images(const std::vector<PatchWeights>& per_image) {
  PatchWeights out(per_image.front().side, per_image.size());
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    std::copy(per_image[i].values.begin(), per_image[i].values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(i * out.tokens_per_image()));
  }
  return out;
}

}  // namespace

PatchWeights build_global_mask(const std::vector<std::vector<PatchWeights>>& per_clause) {
  check_rectangular(per_clause);
  std::vector<PatchWeights> per_image;
  for (const auto& clauses : per_clause) per_image.push_back(aggregate_or(clauses));
  return concat_images(per_image);
}

PatchWeights build_ctrf_mask(const std::vector<std::vector<PatchWeights>>& per_clause,
                             const std::set<std::size_t>& ctrf_indices) {
  check_rectangular(per_clause);
  const std::size_t clauses = per_clause.front().size();
  for (std::size_t k : ctrf_indices) {
    if (k >= clauses) {
      throw ContractError("counterfactual clause index " + std::to_string(k) + " out of range for " +
                          std::to_string(clauses) + " clauses");
    }
  }
  std::vector<PatchWeights> per_image;
  for (const auto& row : per_clause) {
    PatchWeights acc(row.front().side, 1);
    for (std::size_t k : ctrf_indices) {
      for (std::size_t t = 0; t < acc.values.size(); ++t) acc.values[t] |= row[k].values[t];
    }
    per_image.push_back(std::move(acc));
  }
  return concat_images(per_image);
}

std::string to_pgm(const PixelMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (std::uint8_t v : mask.values) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

std::string to_pgm(const PatchWeights& weights, std::size_t image, std::size_t cell_pixels) {
  const std::size_t px = weights.side * cell_pixels;
  std::string out = "P5\n" + std::to_string(px) + " " + std::to_string(px) + "\n255\n";
  for (std::size_t r = 0; r < px; ++r) {
    for (std::size_t c = 0; c < px; ++c) {
      out.push_back(static_cast<char>(weights.at(image, r / cell_pixels, c / cell_pixels) ? 255 : 0));
    }
  }
  return out;
}

}  // namespace llapa::maskgrid
