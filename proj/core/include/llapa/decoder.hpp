#pragma once

#include <string>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/parameters.hpp"
#include "llapa/planeval.hpp"

namespace llapa::decoder {

/// Closed action vocabulary: predicates, object classes, '(', ')', ';', BOS, EOS.
class ActionVocab {
 public:
  static const ActionVocab& standard();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t id(const std::string& token) const;
  std::size_t bos() const { return bos_; }
  std::size_t eos() const { return eos_; }
  std::size_t open_paren() const { return open_; }
  std::size_t close_paren() const { return close_; }
  std::size_t separator() const { return sep_; }
  bool is_predicate(std::size_t id) const { return id < planeval::kNumPredicates; }
  bool is_object(std::size_t id) const;

  /// "pred ( obj ) ;" per action followed by EOS. Throws VocabularyError for
  /// objects outside the class vocabulary.
  std::vector<std::size_t> encode(const planeval::ActionSequence& plan) const;

 private:
  ActionVocab();
  std::vector<std::string> tokens_;
  std::size_t open_, close_, sep_, bos_, eos_;
};

struct ParsedTokens {
  planeval::ActionSequence plan;
  std::size_t dropped = 0;  // tokens after the last well-formed action
};

/// Parses up to the first EOS. A malformed fragment ends parsing; the rest is
/// dropped and reported through diagnostic().
ParsedTokens parse_tokens(const std::vector<std::size_t>& tokens);

/// Row-wise argmax; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

struct DecoderConfig {
  std::size_t width = 32;   // D
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t ff = 128;
  std::size_t positions = 512;  // learned positional table size
};

void add_params(ParameterStore& store, Rng& rng, const DecoderConfig& config);

/// Logits for every generated position. `inputs` starts with BOS; row t of the
/// result predicts inputs[t + 1] (or the token after the last input).
/// Prefix rows attend bidirectionally among themselves; generated rows see the
/// whole prefix and earlier generated rows.
Var logits(Tape& tape, ParameterStore& params, const DecoderConfig& config, const Var& prefix,
           const std::vector<std::size_t>& inputs);

/// Same computation without a tape.
Tensor teacher_forced_logits(const Tensor& prefix, const ParameterStore& params, const DecoderConfig& config,
                             const std::vector<std::size_t>& inputs);

struct DecodeResult {
  std::vector<std::size_t> tokens;  // generated, EOS included when emitted
  Tensor step_logits;               // one row per generated token
  planeval::ActionSequence plan;
};

/// Greedy decoding from BOS until EOS or `max_len` tokens, reusing cached
/// prefix keys and values.
DecodeResult greedy_decode(const Tensor& prefix, const ParameterStore& params, const DecoderConfig& config,
                           std::size_t max_len);

/// -(1/N) sum [y log p + (1 - y) log(1 - p)], p clamped to [1e-12, 1 - 1e-12].
double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels);

/// Mean negative log-likelihood of `targets` under row-wise softmax.
double lm_loss(const Tensor& logits, const std::vector<std::size_t>& targets);

}  // namespace llapa::decoder
