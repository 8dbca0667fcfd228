#include "llapa/decoder.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

#include "llapa/diagnostics.hpp"
#include "llapa/error.hpp"

namespace llapa::decoder {

namespace {

std::string block_name(std::size_t b, const char* leaf) { return "dec.block" + std::to_string(b) + "." + leaf; }

std::shared_ptr<const Tensor> prefix_causal_bias(std::size_t prefix, std::size_t generated) {
  const std::size_t n = prefix + generated;
  auto bias = std::make_shared<Tensor>(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool visible = i < prefix ? j < prefix : j <= i;
      (*bias)(i, j) = visible ? 0.0 : -1e9;
    }
  }
  return bias;
}

void check_inputs(const Tensor& prefix, const ParameterStore& params, const DecoderConfig& config,
                  const std::vector<std::size_t>& inputs) {
  if (prefix.rank() != 2 || prefix.cols() != config.width) {
    throw DimensionError("decoder prefix has shape " + shape_str(prefix.shape()) + ", expected width " +
                         std::to_string(config.width));
  }
  if (inputs.empty()) throw ContractError("decoder needs at least the BOS input");
  const std::size_t n = prefix.rows() + inputs.size();
  if (n > params.value("dec.pos").rows()) {
    throw DimensionError("sequence of " + std::to_string(n) + " positions exceeds the positional table of " +
                         std::to_string(params.value("dec.pos").rows()));
  }
  const std::size_t vocab = params.value("dec.tok").rows();
  for (std::size_t id : inputs) {
    if (id >= vocab) throw ContractError("decoder input token " + std::to_string(id) + " outside the vocabulary");
  }
}

// Plain-tensor helpers for the inference path.
void add_rows(Tensor& x, const Tensor& b) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += b[c];
  }
}

void add_into(Tensor& x, const Tensor& y) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

Tensor layer_norm_plain(const Tensor& x, const ParameterStore& params, const std::string& base) {
  Tensor out;
  kernels::layer_norm_rows(x, params.value(base + ".g"), params.value(base + ".b"), 1e-5, out);
  return out;
}

Tensor feed_forward_plain(const Tensor& x, const ParameterStore& params, std::size_t b) {
  Tensor h = matmul(layer_norm_plain(x, params, block_name(b, "ln2")), params.value(block_name(b, "ff.w1")));
  add_rows(h, params.value(block_name(b, "ff.b1")));
  for (double& v : h.data()) v = kernels::gelu(v);
  Tensor out = matmul(h, params.value(block_name(b, "ff.w2")));
  add_rows(out, params.value(block_name(b, "ff.b2")));
  return out;
}

Tensor output_logits_plain(const Tensor& h, const ParameterStore& params) {
  Tensor out = matmul(layer_norm_plain(h, params, "dec.lnf"), params.value("dec.out.w"));
  add_rows(out, params.value("dec.out.b"));
  return out;
}

Tensor rows_of(const Tensor& t, std::size_t begin, std::size_t count) {
  const auto d = t.data().subspan(begin * t.cols(), count * t.cols());
  return Tensor({count, t.cols()}, std::vector<double>(d.begin(), d.end()));
}

void append_rows(std::vector<double>& buffer, const Tensor& rows) {
  buffer.insert(buffer.end(), rows.data().begin(), rows.data().end());
}

}  // namespace

ActionVocab::ActionVocab() {
  for (planeval::Predicate p : planeval::all_predicates()) tokens_.emplace_back(planeval::predicate_name(p));
  for (ObjectClass c : all_classes()) tokens_.emplace_back(class_name(c));
  open_ = tokens_.size();
  tokens_.emplace_back("(");
  close_ = tokens_.size();
  tokens_.emplace_back(")");
  sep_ = tokens_.size();
  tokens_.emplace_back(";");
  bos_ = tokens_.size();
  tokens_.emplace_back("<bos>");
  eos_ = tokens_.size();
  tokens_.emplace_back("<eos>");
}

const ActionVocab& ActionVocab::standard() {
  static const ActionVocab vocab;
  return vocab;
}

std::size_t ActionVocab::id(const std::string& token) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end()) throw VocabularyError("unknown action token \"" + token + "\"", token);
  return static_cast<std::size_t>(it - tokens_.begin());
}

bool ActionVocab::is_object(std::size_t id) const {
  return id >= planeval::kNumPredicates && id < planeval::kNumPredicates + kNumClasses;
}

std::vector<std::size_t> ActionVocab::encode(const planeval::ActionSequence& plan) const {
  std::vector<std::size_t> out;
  for (const auto& a : plan) {
    const std::size_t obj = id(a.object);
    if (!is_object(obj)) throw VocabularyError("\"" + a.object + "\" is not an object token", a.object);
    out.insert(out.end(), {static_cast<std::size_t>(a.predicate), open_, obj, close_, sep_});
  }
  out.push_back(eos_);
  return out;
}

ParsedTokens parse_tokens(const std::vector<std::size_t>& tokens) {
  const ActionVocab& v = ActionVocab::standard();
  ParsedTokens out;
  std::size_t end = std::find(tokens.begin(), tokens.end(), v.eos()) - tokens.begin();
  std::size_t i = 0;
  while (i < end) {
    if (i + 3 >= end || !v.is_predicate(tokens[i]) || tokens[i + 1] != v.open_paren() || !v.is_object(tokens[i + 2]) ||
        tokens[i + 3] != v.close_paren()) {
      break;
    }
    out.plan.push_back({static_cast<planeval::Predicate>(tokens[i]), v.token(tokens[i + 2])});
    i += 4;
    if (i < end && tokens[i] == v.separator()) ++i;
  }
  if (i < end) {
    out.dropped = end - i;
    diagnostic("dropped " + std::to_string(out.dropped) + " malformed trailing decoder tokens");
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

void add_params(ParameterStore& store, Rng& rng, const DecoderConfig& config) {
  const std::size_t D = config.width, V = ActionVocab::standard().size();
  if (config.heads == 0 || D % config.heads != 0) {
    throw ConfigError("decoder width " + std::to_string(D) + " is not divisible into " + std::to_string(config.heads) +
                      " heads");
  }
  const double sd = 0.02, proj_sd = 1.0 / std::sqrt(static_cast<double>(D));
  store.add("dec.tok", normal_tensor(rng, V, D, sd));
  store.add("dec.pos", normal_tensor(rng, config.positions, D, sd));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    store.add(block_name(b, "ln1.g"), Tensor({1, D}, 1.0));
    store.add(block_name(b, "ln1.b"), Tensor({1, D}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      store.add(block_name(b, w), normal_tensor(rng, D, D, proj_sd));
    }
    store.add(block_name(b, "ln2.g"), Tensor({1, D}, 1.0));
    store.add(block_name(b, "ln2.b"), Tensor({1, D}));
    store.add(block_name(b, "ff.w1"), normal_tensor(rng, D, config.ff, proj_sd));
    store.add(block_name(b, "ff.b1"), Tensor({1, config.ff}));
    store.add(block_name(b, "ff.w2"), normal_tensor(rng, config.ff, D, 1.0 / std::sqrt(static_cast<double>(config.ff))));
    store.add(block_name(b, "ff.b2"), Tensor({1, D}));
  }
  store.add("dec.lnf.g", Tensor({1, D}, 1.0));
  store.add("dec.lnf.b", Tensor({1, D}));
  store.add("dec.out.w", normal_tensor(rng, D, V, proj_sd));
  store.add("dec.out.b", Tensor({1, V}));
}

Var logits(Tape& tape, ParameterStore& params, const DecoderConfig& config, const Var& prefix,
           const std::vector<std::size_t>& inputs) {
  check_inputs(prefix.value(), params, config, inputs);
  auto P = [&](const std::string& name) { return tape.parameter(params, name); };
  const std::size_t lp = prefix.rows(), n = lp + inputs.size();
  Var h = add(concat_rows({prefix, gather_rows(P("dec.tok"), inputs)}), slice_rows(P("dec.pos"), 0, n));
  const auto bias = prefix_causal_bias(lp, inputs.size());
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const Var a = layer_norm(h, P(block_name(b, "ln1.g")), P(block_name(b, "ln1.b")));
    const Var att = attention(matmul(a, P(block_name(b, "attn.wq"))), matmul(a, P(block_name(b, "attn.wk"))),
                              matmul(a, P(block_name(b, "attn.wv"))), config.heads, bias);
    h = add(h, matmul(att, P(block_name(b, "attn.wo"))));
    const Var f = layer_norm(h, P(block_name(b, "ln2.g")), P(block_name(b, "ln2.b")));
    const Var ff = linear(gelu(linear(f, P(block_name(b, "ff.w1")), P(block_name(b, "ff.b1")))),
                          P(block_name(b, "ff.w2")), P(block_name(b, "ff.b2")));
    h = add(h, ff);
  }
  const Var g = layer_norm(slice_rows(h, lp, inputs.size()), P("dec.lnf.g"), P("dec.lnf.b"));
  return linear(g, P("dec.out.w"), P("dec.out.b"));
}

Tensor teacher_forced_logits(const Tensor& prefix, const ParameterStore& params, const DecoderConfig& config,
                             const std::vector<std::size_t>& inputs) {
  check_inputs(prefix, params, config, inputs);
  const std::size_t lp = prefix.rows(), n = lp + inputs.size(), D = config.width;
  const Tensor& tok = params.value("dec.tok");
  const Tensor& pos = params.value("dec.pos");
  Tensor h({n, D});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < D; ++c) h(r, c) = (r < lp ? prefix(r, c) : tok(inputs[r - lp], c)) + pos(r, c);
  }
  const auto bias = prefix_causal_bias(lp, inputs.size());
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const Tensor a = layer_norm_plain(h, params, block_name(b, "ln1"));
    Tensor att;
    kernels::attention_forward(matmul(a, params.value(block_name(b, "attn.wq"))),
                               matmul(a, params.value(block_name(b, "attn.wk"))),
                               matmul(a, params.value(block_name(b, "attn.wv"))), config.heads, bias.get(), att,
                               nullptr);
    add_into(h, matmul(att, params.value(block_name(b, "attn.wo"))));
    add_into(h, feed_forward_plain(h, params, b));
  }
  return output_logits_plain(rows_of(h, lp, inputs.size()), params);
}

namespace {

Tensor single_query_attention(const Tensor& q, const std::vector<double>& keys, const std::vector<double>& values,
                              std::size_t heads) {
  const std::size_t D = q.cols(), n = keys.size() / D, dh = D / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({1, D});
  std::vector<double> w(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double* k = &keys[j * D + off];
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q[off + c] * k[c];
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (double& x : w) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < n; ++j) {
      const double p = w[j] / z;
      const double* v = &values[j * D + off];
      for (std::size_t c = 0; c < dh; ++c) out[off + c] += p * v[c];
    }
  }
  return out;
}

}  // namespace

DecodeResult greedy_decode(const Tensor& prefix, const ParameterStore& params, const DecoderConfig& config,
                           std::size_t max_len) {
  const ActionVocab& vocab = ActionVocab::standard();
  check_inputs(prefix, params, config, {vocab.bos()});
  if (max_len == 0) throw ContractError("max_len must be at least 1");
  const std::size_t lp = prefix.rows(), D = config.width;
  const Tensor& tok = params.value("dec.tok");
  const Tensor& pos = params.value("dec.pos");
  const std::size_t limit = std::min(max_len, pos.rows() - lp);

  // Prefix rows never attend to generated rows, so their keys and values are final.
  std::vector<std::vector<double>> keys(config.blocks), values(config.blocks);
  Tensor h = prefix;
  for (std::size_t r = 0; r < lp; ++r) {
    for (std::size_t c = 0; c < D; ++c) h(r, c) += pos(r, c);
  }
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const Tensor a = layer_norm_plain(h, params, block_name(b, "ln1"));
    const Tensor k = matmul(a, params.value(block_name(b, "attn.wk")));
    const Tensor v = matmul(a, params.value(block_name(b, "attn.wv")));
    Tensor att;
    kernels::attention_forward(matmul(a, params.value(block_name(b, "attn.wq"))), k, v, config.heads, nullptr, att,
                               nullptr);
    append_rows(keys[b], k);
    append_rows(values[b], v);
    add_into(h, matmul(att, params.value(block_name(b, "attn.wo"))));
    add_into(h, feed_forward_plain(h, params, b));
  }

  DecodeResult out;
  std::vector<double> logit_rows;
  std::size_t current = vocab.bos();
  for (std::size_t t = 0; t < limit; ++t) {
    Tensor x({1, D});
    for (std::size_t c = 0; c < D; ++c) x[c] = tok(current, c) + pos(lp + t, c);
    for (std::size_t b = 0; b < config.blocks; ++b) {
      const Tensor a = layer_norm_plain(x, params, block_name(b, "ln1"));
      append_rows(keys[b], matmul(a, params.value(block_name(b, "attn.wk"))));
      append_rows(values[b], matmul(a, params.value(block_name(b, "attn.wv"))));
      const Tensor att =
          single_query_attention(matmul(a, params.value(block_name(b, "attn.wq"))), keys[b], values[b], config.heads);
      add_into(x, matmul(att, params.value(block_name(b, "attn.wo"))));
      add_into(x, feed_forward_plain(x, params, b));
    }
    const Tensor step = output_logits_plain(x, params);
    append_rows(logit_rows, step);
    current = argmax_rows(step).front();
    out.tokens.push_back(current);
    if (current == vocab.eos()) break;
  }
  out.step_logits = Tensor({out.tokens.size(), vocab.size()}, std::move(logit_rows));
  out.plan = parse_tokens(out.tokens).plan;
  return out;
}

double bce_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw ContractError("bce_loss needs equal, non-empty probability and label lists");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("bce_loss labels must be 0 or 1");
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    loss -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(probs.size());
}

double lm_loss(const Tensor& logits, const std::vector<std::size_t>& targets) {
  if (targets.empty() || logits.rows() != targets.size()) {
    throw ContractError("lm_loss: " + std::to_string(logits.rows()) + " logit rows for " +
                        std::to_string(targets.size()) + " targets");
  }
  double loss = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    auto row = logits.row(r);
    if (targets[r] >= row.size()) throw ContractError("lm_loss target outside the vocabulary");
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    loss -= row[targets[r]] - mx - std::log(s);
  }
  return loss / static_cast<double>(targets.size());
}

}  // namespace llapa::decoder
