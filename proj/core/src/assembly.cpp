#include "llapa/assembly.hpp"

#include <cmath>

#include "llapa/error.hpp"

namespace llapa::assembly {

namespace {

void check_width(const Tensor& t, std::size_t width, const char* what) {
  if (t.rank() != 2 || t.cols() != width) {
    throw DimensionError(std::string(what) + " has shape " + shape_str(t.shape()) + ", expected width " +
                         std::to_string(width));
  }
}

void add_bias_rows(Tensor& x, const Tensor& b) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += b[c];
  }
}

std::vector<Segment> make_tags(const std::array<std::size_t, 4>& lengths) {
  std::vector<Segment> tags;
  for (std::size_t s = 0; s < 4; ++s) tags.insert(tags.end(), lengths[s], static_cast<Segment>(s));
  return tags;
}

}  // namespace

void add_params(ParameterStore& store, Rng& rng, std::size_t channels, std::size_t model_width, std::size_t hidden) {
  store.add("proj.w1", normal_tensor(rng, channels, hidden, 1.0 / std::sqrt(static_cast<double>(channels))));
  store.add("proj.b1", Tensor({1, hidden}));
  store.add("proj.w2", normal_tensor(rng, hidden, model_width, 1.0 / std::sqrt(static_cast<double>(hidden))));
  store.add("proj.b2", Tensor({1, model_width}));
  store.add(kPromptToken, normal_tensor(rng, 1, model_width, 0.02));
  store.add("text_map.w", normal_tensor(rng, channels, model_width, 1.0 / std::sqrt(static_cast<double>(channels))));
  store.add("text_map.b", Tensor({1, model_width}));
}

Tensor project(const Tensor& tokens, const ParameterStore& params) {
  check_width(tokens, params.value("proj.w1").rows(), "projector input");
  Tensor h = matmul(tokens, params.value("proj.w1"));
  add_bias_rows(h, params.value("proj.b1"));
  for (double& x : h.data()) x = kernels::gelu(x);
  Tensor out = matmul(h, params.value("proj.w2"));
  add_bias_rows(out, params.value("proj.b2"));
  return out;
}

Var project(Tape& tape, ParameterStore& params, const Var& tokens) {
  check_width(tokens.value(), params.value("proj.w1").rows(), "projector input");
  const Var h = gelu(linear(tokens, tape.parameter(params, "proj.w1"), tape.parameter(params, "proj.b1")));
  return linear(h, tape.parameter(params, "proj.w2"), tape.parameter(params, "proj.b2"));
}

Tensor map_text(const Tensor& tokens, const ParameterStore& params) {
  check_width(tokens, params.value("text_map.w").rows(), "text embeddings");
  Tensor out = matmul(tokens, params.value("text_map.w"));
  add_bias_rows(out, params.value("text_map.b"));
  return out;
}

Var map_text(Tape& tape, ParameterStore& params, const Var& tokens) {
  check_width(tokens.value(), params.value("text_map.w").rows(), "text embeddings");
  return linear(tokens, tape.parameter(params, "text_map.w"), tape.parameter(params, "text_map.b"));
}

InputSequence assemble_input(const Tensor& v_rerank, const Tensor& s_cf, const Tensor& v_cf, const Tensor& text,
                             const ParameterStore& params, bool zero_ctrf) {
  const std::size_t D = params.value("proj.w2").cols();
  check_width(s_cf, D, "prompt token");
  check_width(text, D, "text embeddings");
  if (s_cf.rows() != 1) throw DimensionError("prompt token must be a single row, got " + shape_str(s_cf.shape()));
  Tensor rerank = project(v_rerank, params);
  Tensor ctrf = zero_ctrf ? Tensor::zeros(v_cf.rows(), D) : project(v_cf, params);
  InputSequence seq;
  seq.lengths = {rerank.rows(), 1, ctrf.rows(), text.rows()};
  seq.tags = make_tags(seq.lengths);
  seq.tokens = Tensor::zeros(seq.tags.size(), D);
  std::size_t row = 0;
  for (const Tensor* part : std::initializer_list<const Tensor*>{&rerank, &s_cf, &ctrf, &text}) {
    for (std::size_t r = 0; r < part->rows(); ++r, ++row) {
      std::copy(part->row(r).begin(), part->row(r).end(), seq.tokens.row(row).begin());
    }
  }
  return seq;
}

InputVar assemble_input(Tape& tape, ParameterStore& params, const Var& v_rerank, const Var& v_cf, const Var& text,
                        bool zero_ctrf) {
  const std::size_t D = params.value("proj.w2").cols();
  check_width(text.value(), D, "text embeddings");
  const Var rerank = project(tape, params, v_rerank);
  const Var ctrf = zero_ctrf ? tape.constant(Tensor::zeros(v_cf.value().rows(), D)) : project(tape, params, v_cf);
  InputVar out;
  out.lengths = {rerank.rows(), 1, ctrf.rows(), text.rows()};
  out.tags = make_tags(out.lengths);
  out.tokens = concat_rows({rerank, tape.parameter(params, kPromptToken), ctrf, text});
  return out;
}

}  // namespace llapa::assembly
