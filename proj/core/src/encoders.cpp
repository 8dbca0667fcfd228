#include "llapa/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

#include "llapa/error.hpp"
#include "llapa/rng.hpp"

namespace llapa::encoders {

std::array<double, kDescriptorDim> patch_descriptor(const worldgen::Image& image, std::size_t grid, std::size_t r,
                                                    std::size_t c) {
  const std::size_t bh = image.height / grid, bw = image.width / grid;
  std::array<double, kDescriptorDim> d{};
  for (std::size_t y = r * bh; y < (r + 1) * bh; ++y) {
    for (std::size_t x = c * bw; x < (c + 1) * bw; ++x) {
      const std::uint8_t* px = image.pixel(y, x);
      for (int ch = 0; ch < 3; ++ch) d[ch] += px[ch];
    }
  }
  for (int ch = 0; ch < 3; ++ch) d[ch] /= 255.0 * static_cast<double>(bh * bw);
  const double pr = std::numbers::pi * static_cast<double>(r) / static_cast<double>(grid);
  const double pc = std::numbers::pi * static_cast<double>(c) / static_cast<double>(grid);
  d[3] = std::sin(pr);
  d[4] = std::cos(pr);
  d[5] = std::sin(2 * pr);
  d[6] = std::cos(2 * pr);
  d[7] = std::sin(pc);
  d[8] = std::cos(pc);
  d[9] = std::sin(2 * pc);
  d[10] = std::cos(2 * pc);
  return d;
}

Tensor featurizer_matrix(const FeatureConfig& config) {
  Rng rng(config.seed);
  return normal_tensor(rng, kDescriptorDim, config.channels, 1.0 / std::sqrt(static_cast<double>(kDescriptorDim)));
}

FeatureMap encode_image(const worldgen::Scene& scene, const FeatureConfig& config) {
  const std::size_t P = config.patch_grid;
  if (scene.images.empty()) throw ContractError("encode_image needs at least one image");
  for (const auto& img : scene.images) {
    if (P == 0 || img.height % P != 0 || img.width % P != 0) {
      throw ConfigError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                        " is not divisible by patch grid " + std::to_string(P));
    }
  }
  Tensor desc({scene.images.size() * P * P, kDescriptorDim});
  std::size_t row = 0;
  for (const auto& img : scene.images) {
    for (std::size_t r = 0; r < P; ++r) {
      for (std::size_t c = 0; c < P; ++c, ++row) {
        const auto d = patch_descriptor(img, P, r, c);
        std::copy(d.begin(), d.end(), desc.row(row).begin());
      }
    }
  }
  return FeatureMap{scene.images.size(), P, matmul(desc, featurizer_matrix(config))};
}

std::vector<std::string> segment_clauses(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && std::isspace(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == '.' || ch == ';' || ch == '!' || ch == '?') {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  if (out.empty()) throw ParseError("task text contains no clauses", 1, 1);
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!lookup_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token: " + tokens_[i]);
  }
  auto it = lookup_.find(std::string(kUnk));
  if (it == lookup_.end()) throw DataError("vocabulary lacks the " + std::string(kUnk) + " token");
  unk_ = it->second;
}

Vocabulary Vocabulary::clause_default() {
  std::vector<std::string> tokens = {std::string(kUnk), "a",  "burnt", "clean", "contains", "dirty", "discard", "first",
                                     "if",              "in", "is",    "it",    "on",       "put",   "the",     "with"};
  for (ObjectClass c : all_classes()) tokens.emplace_back(class_name(c));
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

std::size_t Vocabulary::index(std::string_view word) const {
  if (auto it = lookup_.find(std::string(word)); it != lookup_.end()) return it->second;
  if (word.size() > 1 && word.back() == 's') {
    if (auto it = lookup_.find(std::string(word.substr(0, word.size() - 1))); it != lookup_.end()) return it->second;
  }
  return unk_;
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : tokenize(text)) ids.push_back(index(w));
  return ids;
}

ClauseEmbedding embed_clause(std::string_view clause, const Vocabulary& vocab, const ParameterStore& params,
                             std::size_t index) {
  const auto ids = vocab.encode(clause);
  if (ids.empty()) throw ContractError("embed_clause needs a clause with at least one token");
  const Tensor& table = params.value(kTextEmbed);
  if (table.rows() != vocab.size()) {
    throw DimensionError("embedding table has " + std::to_string(table.rows()) + " rows for a vocabulary of " +
                         std::to_string(vocab.size()));
  }
  Tensor v({1, table.cols()});
  for (std::size_t id : ids) {
    for (std::size_t c = 0; c < table.cols(); ++c) v(0, c) += table(id, c);
  }
  for (double& x : v.data()) x /= static_cast<double>(ids.size());
  return ClauseEmbedding{index, std::move(v)};
}

Var embed_clause(Tape& tape, ParameterStore& params, const std::vector<std::size_t>& token_ids) {
  if (token_ids.empty()) throw ContractError("embed_clause needs a clause with at least one token");
  return mean_rows(gather_rows(tape.parameter(params, kTextEmbed), token_ids));
}

}  // namespace llapa::encoders
