#pragma once

#include <array>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/parameters.hpp"

namespace llapa::assembly {

enum class Segment : std::uint8_t { kRerank, kPrompt, kCtrf, kText };

inline const std::string kPromptToken = "s_cf";

// proj.w1 (C x hidden), proj.b1, proj.w2 (hidden x D), proj.b2, the prompt
// vector s_cf (1 x D) and the text map text_map.w (C x D), text_map.b.
void add_params(ParameterStore& store, Rng& rng, std::size_t channels, std::size_t model_width,
                std::size_t hidden = 64);

/// Row-wise GELU MLP shared by the rerank and counterfactual tokens.
Tensor project(const Tensor& tokens, const ParameterStore& params);
Var project(Tape& tape, ParameterStore& params, const Var& tokens);

/// Clause token embeddings (L x C) mapped to the model width.
Tensor map_text(const Tensor& tokens, const ParameterStore& params);
Var map_text(Tape& tape, ParameterStore& params, const Var& tokens);

struct InputSequence {
  Tensor tokens;  // N x D
  std::vector<Segment> tags;
  std::array<std::size_t, 4> lengths{};  // rerank, prompt, ctrf, text

  std::size_t size() const { return tags.size(); }
};

struct InputVar {
  Var tokens;
  std::vector<Segment> tags;
  std::array<std::size_t, 4> lengths{};
};

/// [Proj(v_rerank); s_cf; Proj(v_cf); text]. `text` is already D wide. When
/// `zero_ctrf` is set the projected counterfactual rows are replaced by zeros.
InputSequence assemble_input(const Tensor& v_rerank, const Tensor& s_cf, const Tensor& v_cf, const Tensor& text,
                             const ParameterStore& params, bool zero_ctrf = false);
InputVar assemble_input(Tape& tape, ParameterStore& params, const Var& v_rerank, const Var& v_cf, const Var& text,
                        bool zero_ctrf = false);

}  // namespace llapa::assembly
