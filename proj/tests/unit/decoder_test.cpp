#include <cmath>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "llapa/decoder.hpp"
#include "llapa/diagnostics.hpp"
#include "llapa/error.hpp"

using namespace llapa;
using namespace llapa::decoder;
using planeval::Action;
using planeval::Predicate;

namespace {

struct Small {
  DecoderConfig cfg{8, 2, 2, 16, 40};
  ParameterStore params;
  Tensor prefix;
  explicit Small(std::uint64_t seed, std::size_t prefix_rows = 6) {
    Rng rng(seed);
    add_params(params, rng, cfg);
    prefix = normal_tensor(rng, prefix_rows, cfg.width, 1.0);
  }
};

}  // namespace

TEST(Losses, BceExamples) {
  EXPECT_NEAR(bce_loss({0.5}, {1}), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss({0.9, 0.2}, {1, 0}), -(std::log(0.9) + std::log(0.8)) / 2.0, 1e-12);
  EXPECT_NEAR(bce_loss({0.9, 0.2}, {1, 0}), 0.16425, 1e-5);
  EXPECT_TRUE(std::isfinite(bce_loss({0.0, 1.0}, {1, 0})));
  EXPECT_THROW(bce_loss({0.5}, {2}), ContractError);
}

TEST(Losses, LmLossUniformIsLogV) {
  const std::size_t V = ActionVocab::standard().size();
  EXPECT_NEAR(lm_loss(Tensor({3, V}), {0, 4, V - 1}), std::log(static_cast<double>(V)), 1e-12);
}

TEST(Losses, LmLossMatchesSoftmaxOracle) {
  Rng rng(51);
  const Tensor z = normal_tensor(rng, 4, 7, 3.0);
  const std::vector<std::size_t> y{1, 6, 0, 3};
  double expect = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += std::exp(z(r, c));
    expect -= std::log(std::exp(z(r, y[r])) / s);
  }
  EXPECT_NEAR(lm_loss(z, y), expect / 4.0, 1e-12);
}

TEST(ActionVocab, Layout) {
  const auto& v = ActionVocab::standard();
  EXPECT_EQ(v.size(), 26u);
  EXPECT_TRUE(v.is_predicate(v.id("pick")));
  EXPECT_TRUE(v.is_object(v.id("microwave")));
  EXPECT_FALSE(v.is_object(v.eos()));
}

TEST(ActionVocab, EncodeParseRoundTrip) {
  const planeval::ActionSequence plan{{Predicate::kFind, "cookie"}, {Predicate::kPick, "cookie"},
                                      {Predicate::kPlace, "table"}};
  const auto tokens = ActionVocab::standard().encode(plan);
  EXPECT_EQ(tokens.size(), 3 * 5 + 1);
  EXPECT_EQ(tokens.back(), ActionVocab::standard().eos());
  const auto parsed = parse_tokens(tokens);
  EXPECT_EQ(parsed.plan, plan);
  EXPECT_EQ(parsed.dropped, 0u);
}

TEST(ActionVocab, UnknownObjectRejected) {
  EXPECT_THROW(ActionVocab::standard().encode({{Predicate::kPick, "spaceship"}}), VocabularyError);
}

TEST(ParseTokens, MalformedTailDropped) {
  const auto& v = ActionVocab::standard();
  std::vector<std::size_t> t = v.encode({{Predicate::kOpen, "cabinet"}});
  t.pop_back();
  t.insert(t.end(), {v.id("pick"), v.id("("), v.id(")"), v.eos()});
  std::vector<std::string> msgs;
  set_diagnostic_sink([&](const std::string& m) { msgs.push_back(m); });
  const auto parsed = parse_tokens(t);
  set_diagnostic_sink(nullptr);
  ASSERT_EQ(parsed.plan.size(), 1u);
  EXPECT_EQ(parsed.plan[0].object, "cabinet");
  EXPECT_EQ(parsed.dropped, 3u);
  EXPECT_EQ(msgs.size(), 1u);
}

TEST(ArgmaxRows, TiesGoLow) {
  EXPECT_EQ(argmax_rows(Tensor::from_rows({{1.0, 3.0, 3.0}, {2.0, 2.0, 0.0}})), (std::vector<std::size_t>{1, 0}));
}

TEST(Decoder, TapeMatchesPlain) {
  Small s(52);
  const std::vector<std::size_t> inputs{ActionVocab::standard().bos(), 3, 9, 21};
  Tape tape;
  const Var l = logits(tape, s.params, s.cfg, tape.constant(s.prefix), inputs);
  EXPECT_LT(max_abs_diff(l.value(), teacher_forced_logits(s.prefix, s.params, s.cfg, inputs)), 1e-12);
  EXPECT_EQ(l.value().rows(), inputs.size());
}

TEST(Decoder, GeneratedRowsAreCausal) {
  Small s(53);
  const std::size_t bos = ActionVocab::standard().bos();
  const Tensor a = teacher_forced_logits(s.prefix, s.params, s.cfg, {bos, 3, 9, 21});
  const Tensor b = teacher_forced_logits(s.prefix, s.params, s.cfg, {bos, 3, 14, 2});
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) EXPECT_EQ(a(r, c), b(r, c));
  }
  EXPECT_GT(max_abs_diff(a, b), 1e-9);
}

TEST(Decoder, PrefixIsBidirectional) {
  Small s(54);
  const std::size_t bos = ActionVocab::standard().bos();
  // The first generated row sees every prefix row, including the last.
  Tensor changed = s.prefix;
  changed(s.prefix.rows() - 1, 0) += 1.0;
  const Tensor a = teacher_forced_logits(s.prefix, s.params, s.cfg, {bos});
  const Tensor b = teacher_forced_logits(changed, s.params, s.cfg, {bos});
  EXPECT_GT(max_abs_diff(a, b), 1e-9);
}

TEST(Decoder, GreedyMatchesTeacherForcedArgmax) {
  for (std::uint64_t seed : {55, 56, 57}) {
    Small s(seed);
    set_diagnostic_sink(nullptr);
    const DecodeResult r = greedy_decode(s.prefix, s.params, s.cfg, 12);
    ASSERT_FALSE(r.tokens.empty());
    std::vector<std::size_t> inputs{ActionVocab::standard().bos()};
    inputs.insert(inputs.end(), r.tokens.begin(), r.tokens.end() - 1);
    const Tensor tf = teacher_forced_logits(s.prefix, s.params, s.cfg, inputs);
    EXPECT_LT(max_abs_diff(tf, r.step_logits), 1e-9);
    EXPECT_EQ(argmax_rows(tf), r.tokens);
  }
}

TEST(Decoder, GreedyIsDeterministic) {
  Small s(58);
  set_diagnostic_sink(nullptr);
  const auto a = greedy_decode(s.prefix, s.params, s.cfg, 20);
  const auto b = greedy_decode(s.prefix, s.params, s.cfg, 20);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.step_logits, b.step_logits);
  EXPECT_LE(a.tokens.size(), 20u);
}

TEST(Decoder, GradientsMatchFiniteDifferences) {
  Small s(59, 4);
  s.params.add("prefix", s.prefix);
  const std::size_t bos = ActionVocab::standard().bos();
  const auto r = llapa::testing::grad_check(
      s.params,
      [&](Tape& t, ParameterStore& p) {
        const Var l = logits(t, p, s.cfg, t.parameter(p, "prefix"), {bos, 3, 11});
        return cross_entropy(l, {3, 11, ActionVocab::standard().eos()});
      },
      {"dec.", "prefix"});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Decoder, PrefixTooLongRejected) {
  Small s(60, 39);
  EXPECT_THROW(teacher_forced_logits(s.prefix, s.params, s.cfg, {1, 2, 3}), DimensionError);
  EXPECT_THROW(teacher_forced_logits(s.prefix, s.params, s.cfg, {}), ContractError);
}
