#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/parameters.hpp"
#include "llapa/tensor.hpp"
#include "llapa/worldgen.hpp"

namespace llapa::encoders {

inline constexpr std::size_t kDescriptorDim = 11;  // mean RGB + 8 positional terms
inline const std::string kTextEmbed = "text.embed";

struct FeatureConfig {
  std::size_t patch_grid = 8;  // P
  std::size_t channels = 32;   // C
  std::uint64_t seed = 0x5EEDF00DULL;
};

/// Image tokens, (m * P^2) x C, image-major then row-major (same order as PatchWeights).
struct FeatureMap {
  std::size_t images = 0;
  std::size_t side = 0;
  Tensor tokens;

  std::size_t channels() const { return tokens.cols(); }
  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Raw per-patch descriptor: mean colour in [0, 1] followed by
/// sin/cos(pi r / P), sin/cos(2 pi r / P) and the same for the column.
std::array<double, kDescriptorDim> patch_descriptor(const worldgen::Image& image, std::size_t grid, std::size_t r,
                                                    std::size_t c);

/// Fixed kDescriptorDim x C map, drawn from `seed`.
Tensor featurizer_matrix(const FeatureConfig& config);

FeatureMap encode_image(const worldgen::Scene& scene, const FeatureConfig& config);

/// Splits on '.', ';', '!' and '?', trims whitespace and drops empty pieces.
std::vector<std::string> segment_clauses(std::string_view text);

/// Lowercase alphanumeric words.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Template words and class names.
  static Vocabulary clause_default();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t unk() const { return unk_; }
  // Exact match, then a trailing-"s" plural of a known word, else UNK.
  std::size_t index(std::string_view word) const;
  std::vector<std::size_t> encode(std::string_view text) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::size_t unk_ = 0;
};

struct ClauseEmbedding {
  std::size_t index = 0;
  Tensor vector;  // 1 x C
};

/// Mean of the embedding rows of the clause's tokens.
ClauseEmbedding embed_clause(std::string_view clause, const Vocabulary& vocab, const ParameterStore& params,
                             std::size_t index = 0);
Var embed_clause(Tape& tape, ParameterStore& params, const std::vector<std::size_t>& token_ids);

}  // namespace llapa::encoders
