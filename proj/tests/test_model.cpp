#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "corrkg/decoder.hpp"
#include "corrkg/encoder.hpp"
#include "test_support.hpp"

using namespace corrkg;
using fixtures::toy_config;

namespace {

struct Toy {
  ModelConfig cfg;
  ParamStore<double> store;
  Tape<double> tape{false};
  ModelWeights<double> w;

  explicit Toy(std::uint64_t seed, ModelConfig c = toy_config())
      : cfg(c), store(init_params<double>(model_param_specs(c), seed)) {
    w = bind_model(tape, std::as_const(store));
  }
};

std::vector<double> row(const Var<double>& m, std::size_t r) {
  auto v = m.value();
  return {v.begin() + static_cast<std::ptrdiff_t>(r * m.cols()),
          v.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols())};
}

DocumentContext<double> context_for(const Toy& t, const std::vector<TokenId>& ext_ids, std::size_t ext_size) {
  std::vector<TokenId> ids;
  for (TokenId id : ext_ids) ids.push_back(id < t.cfg.vocab_size ? id : Vocab::kUnk);
  return make_document_context(encode(ids, t.w), ext_ids, ext_size, t.w);
}

}  // namespace

TEST(Encoder, SingleTokenShape) {
  Toy t(1);
  auto enc = encode<double>({7}, t.w);
  EXPECT_EQ(enc.length(), 1u);
  EXPECT_EQ(enc.memory.cols(), 2 * t.cfg.hidden);
  EXPECT_EQ(enc.final_fwd.size(), t.cfg.hidden);
  EXPECT_EQ(enc.final_bwd.size(), t.cfg.hidden);
  // With one token both directions see the same single input from zero state.
  EXPECT_EQ(row(enc.memory, 0), concat<double>({enc.final_fwd, enc.final_bwd}).to_vector());
  EXPECT_THROW(encode<double>({}, t.w), std::invalid_argument);
}

TEST(Encoder, RepeatedTokensGetDifferentContexts) {
  Toy t(2);
  auto enc = encode<double>({5, 6, 5, 7, 5}, t.w);
  EXPECT_NE(row(enc.memory, 0), row(enc.memory, 2));
  EXPECT_NE(row(enc.memory, 2), row(enc.memory, 4));
}

TEST(Encoder, ReversingInputSwapsDirections) {
  Toy a(3);
  // Second store with the forward and backward GRU weights exchanged.
  ParamStore<double> swapped = a.store;
  for (const char* part : {".input", ".recur_rz", ".recur_c", ".bias"}) {
    std::swap(swapped.at(std::string("enc.fwd") + part).value, swapped.at(std::string("enc.bwd") + part).value);
  }
  Tape<double> tape(false);
  auto ws = bind_model(tape, std::as_const(swapped));
  const std::vector<TokenId> x{5, 9, 11, 5, 17, 6};
  std::vector<TokenId> rx(x.rbegin(), x.rend());
  auto e = encode(x, a.w);
  auto r = encode(rx, ws);
  const std::size_t H = a.cfg.hidden, T = x.size();
  for (std::size_t i = 0; i < T; ++i) {
    auto hi = row(e.memory, i), hr = row(r.memory, T - 1 - i);
    for (std::size_t k = 0; k < H; ++k) {
      EXPECT_EQ(hr[k], hi[H + k]);
      EXPECT_EQ(hr[H + k], hi[k]);
    }
  }
  EXPECT_EQ(r.final_fwd.to_vector(), e.final_bwd.to_vector());
  EXPECT_EQ(r.final_bwd.to_vector(), e.final_fwd.to_vector());
}

TEST(Encoder, ExtendedIdsEmbedAsUnk) {
  Toy t(4);
  auto a = encode<double>({5, 25, 6, 31}, t.w);
  auto b = encode<double>({5, Vocab::kUnk, 6, Vocab::kUnk}, t.w);
  EXPECT_EQ(a.memory.to_vector(), b.memory.to_vector());
}

TEST(SourceAttention, SingletonAndCoverageFree) {
  Toy t(5);
  auto doc = context_for(t, {8}, t.cfg.vocab_size);
  auto s = constant(std::vector<double>(t.cfg.hidden, 0.3));
  auto att = source_attention(doc, s, zeros<double>(1), t.w, true);
  EXPECT_EQ(att.weights.item(), 1.0);
  EXPECT_EQ(att.context.to_vector(), row(doc.encoding.memory, 0));

  // w_c = 0: coverage has no effect.
  t.store.at("attn.coverage").value.fill(0.0);
  auto doc2 = context_for(t, {8, 9, 10, 8}, t.cfg.vocab_size);
  auto a1 = source_attention(doc2, s, zeros<double>(4), t.w, true);
  auto a2 = source_attention(doc2, s, constant(std::vector<double>{3.0, 0.1, 7.5, 2.0}), t.w, true);
  EXPECT_EQ(a1.weights.to_vector(), a2.weights.to_vector());
  EXPECT_THROW(source_attention(doc2, s, zeros<double>(3), t.w, true), std::invalid_argument);
}

TEST(SourceAttention, IdenticalMemoryGivesUniformWeights) {
  Toy t(6);
  const std::size_t T = 5, M = 2 * t.cfg.hidden;
  std::vector<double> mem;
  for (std::size_t j = 0; j < T; ++j)
    for (std::size_t k = 0; k < M; ++k) mem.push_back(0.01 * static_cast<double>(k));
  SourceEncoding<double> enc{constant(Tensor<double>({T, M}, mem)), zeros<double>(t.cfg.hidden),
                             zeros<double>(t.cfg.hidden)};
  auto doc = make_document_context(enc, std::vector<TokenId>(T, 6), t.cfg.vocab_size, t.w);
  auto att = source_attention(doc, constant(std::vector<double>(t.cfg.hidden, -0.2)),
                              constant(std::vector<double>(T, 0.4)), t.w, true);
  for (double a : att.weights.value()) EXPECT_NEAR(a, 0.2, 1e-15);
}

TEST(ReviewAttention, Cases) {
  Toy t(7);
  const std::size_t H = t.cfg.hidden;
  auto s_prev = constant(std::vector<double>(H, 0.1));
  auto empty = review_attention<double>({}, {}, s_prev, t.w);
  for (double x : empty.value()) EXPECT_EQ(x, 0.0);

  std::vector<double> v0(H), v1(H);
  for (std::size_t i = 0; i < H; ++i) {
    v0[i] = std::sin(static_cast<double>(i));
    v1[i] = std::cos(static_cast<double>(i));
  }
  auto key = [&](const Var<double>& s) { return matvec(t.w.review_memory, s); };
  auto s0 = constant(v0), s1 = constant(v1);
  EXPECT_EQ(review_attention<double>({s0}, {key(s0)}, s_prev, t.w).to_vector(), v0);
  auto both = review_attention<double>({s0, s0}, {key(s0), key(s0)}, s_prev, t.w);
  for (std::size_t i = 0; i < H; ++i) EXPECT_NEAR(both[i], v0[i], 1e-15);
  // Distinct states: a convex combination, strictly between per coordinate.
  auto mix = review_attention<double>({s0, s1}, {key(s0), key(s1)}, s_prev, t.w);
  for (std::size_t i = 0; i < H; ++i) {
    EXPECT_GE(mix[i], std::min(v0[i], v1[i]) - 1e-15);
    EXPECT_LE(mix[i], std::max(v0[i], v1[i]) + 1e-15);
  }
}

TEST(Coverage, UpdateExamples) {
  auto c = update_coverage(zeros<double>(3), constant(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}));
  for (double x : c.value()) EXPECT_EQ(x, 1.0 / 3);
}

TEST(InitState, RangeDeterminismAndZeroWeights) {
  Toy t(8);
  auto enc = encode<double>({5, 6, 7}, t.w);
  auto s0 = init_phrase_state(enc, t.w);
  for (double x : s0.value()) {
    EXPECT_GT(x, -1.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_EQ(init_phrase_state(enc, t.w).to_vector(), s0.to_vector());
  t.store.at("init.weight").value.fill(0.0);
  t.store.at("init.bias").value.fill(0.0);
  const auto zero = init_phrase_state(enc, t.w);
  for (double x : zero.value()) EXPECT_EQ(x, 0.0);
}

TEST(DecoderStep, DistributionInvariantsOnRandomSteps) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    Toy t(100 + trial);
    auto inst = fixtures::random_instance(rng, t.cfg.vocab_size, 1 + trial % 7, 1, 2, trial % 3);
    const std::size_t ext = t.cfg.vocab_size + inst.oov_words.size();
    auto doc = context_for(t, inst.source_ext_ids, ext);
    auto state = initial_decode_state<double>(doc.length());
    Var<double> s = init_phrase_state(doc.encoding, t.w);
    TokenId y = Vocab::kBos;
    for (int k = 0; k < 4; ++k) {
      auto out = decoder_step(y, s, doc, state, t.w, Mode::kFull);
      double asum = 0;
      for (double a : out.attn.value()) asum += a;
      EXPECT_NEAR(asum, 1.0, 1e-12);
      auto d = extended_distribution(out.logits, doc);
      double total = 0;
      for (std::size_t i = 0; i < ext; ++i) {
        EXPECT_EQ(d.probs[i], d.gen_mass[i] + d.copy_mass[i]);
        if (i >= t.cfg.vocab_size) {
          EXPECT_EQ(d.gen_mass[i], 0.0);
        }
        const bool in_source = std::count(inst.source_ext_ids.begin(), inst.source_ext_ids.end(), i) > 0;
        if (!in_source) {
          EXPECT_EQ(d.copy_mass[i], 0.0);
        }
        total += d.probs[i];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      commit_step(state, s, out.attn, t.w, Mode::kFull);
      s = out.state;
      y = inst.source_ext_ids[static_cast<std::size_t>(k) % doc.length()];
    }
  }
}

TEST(DecoderStep, CopyMassSumsTheWordsPositions) {
  // Word 9 sits at source positions 2 and 5 only.
  Toy t(31);
  const std::vector<TokenId> src{5, 6, 9, 7, 8, 9, 10};
  auto doc = context_for(t, src, t.cfg.vocab_size);
  auto state = initial_decode_state<double>(src.size());
  auto s0 = init_phrase_state(doc.encoding, t.w);
  auto out = decoder_step(Vocab::kBos, s0, doc, state, t.w, Mode::kFull);

  // Direct evaluation with plain loops.
  std::vector<double> feat;
  for (auto* part : {&t.store.at("embedding").value}) {
    for (std::size_t k = 0; k < t.cfg.embed; ++k) feat.push_back(part->at(Vocab::kBos, k));
  }
  for (auto x : out.state.value()) feat.push_back(x);
  for (auto x : out.context_enc.value()) feat.push_back(x);
  for (auto x : out.context_rev.value()) feat.push_back(x);
  ASSERT_EQ(feat.size(), t.cfg.features());
  const auto& Wo = t.store.at("out.weight").value;
  const auto& bo = t.store.at("out.bias").value;
  const auto& Wc = t.store.at("copy.weight").value;
  const std::size_t V = t.cfg.vocab_size, F = feat.size(), M = 2 * t.cfg.hidden;
  std::vector<double> scores;
  for (std::size_t i = 0; i < V; ++i) {
    double a = bo[i];
    for (std::size_t f = 0; f < F; ++f) a += Wo.at(i, f) * feat[f];
    scores.push_back(a);
  }
  auto mem = doc.encoding.memory.value();
  for (std::size_t j = 0; j < src.size(); ++j) {
    double a = 0;
    for (std::size_t f = 0; f < F; ++f) {
      double g = 0;
      for (std::size_t m = 0; m < M; ++m) g += mem[j * M + m] * Wc.at(f, m);
      a += 1 / (1 + std::exp(-g)) * feat[f];
    }
    scores.push_back(a);
  }
  double z = 0;
  for (double x : scores) z += std::exp(x);
  auto d = extended_distribution(out.logits, doc);
  EXPECT_NEAR(d.copy_mass[9], (std::exp(scores[V + 2]) + std::exp(scores[V + 5])) / z, 1e-14);
  EXPECT_NEAR(d.gen_mass[9], std::exp(scores[9]) / z, 1e-14);
  EXPECT_EQ(d.copy_mass[11], 0.0);
}

TEST(DecoderStep, RejectsTokensOutsideExtendedVocab) {
  Toy t(9);
  auto doc = context_for(t, {5, 20}, t.cfg.vocab_size + 1);
  auto state = initial_decode_state<double>(2);
  auto s0 = init_phrase_state(doc.encoding, t.w);
  EXPECT_NO_THROW(decoder_step(20, s0, doc, state, t.w, Mode::kFull));
  EXPECT_THROW(decoder_step(21, s0, doc, state, t.w, Mode::kFull), std::invalid_argument);
  EXPECT_THROW(target_indices(22, doc), std::invalid_argument);
}

TEST(DecoderStep, TargetIndices) {
  Toy t(10);
  auto doc = context_for(t, {5, 20, 5, 21}, t.cfg.vocab_size + 2);
  EXPECT_EQ(target_indices(5, doc), (std::vector<std::size_t>{5, 20, 22}));
  EXPECT_EQ(target_indices(21, doc), (std::vector<std::size_t>{23}));
  EXPECT_EQ(target_indices(Vocab::kEos, doc), (std::vector<std::size_t>{Vocab::kEos}));
}

TEST(DecoderStep, CopyOnlyIgnoresCoverageAndReviewParameters) {
  std::mt19937_64 rng(3);
  Toy a(41), b(41);
  for (const char* name : {"attn.coverage", "review.memory", "review.state", "review.v", "dec.context1"}) {
    for (double& x : b.store.at(name).value.values()) x = std::uniform_real_distribution<double>(-2, 2)(rng);
  }
  const std::vector<TokenId> src{5, 6, 7, 6, 9};
  auto da = context_for(a, src, a.cfg.vocab_size);
  auto db = context_for(b, src, b.cfg.vocab_size);
  auto sa = initial_decode_state<double>(src.size()), sb = sa;
  Var<double> xa = init_phrase_state(da.encoding, a.w), xb = init_phrase_state(db.encoding, b.w);
  for (TokenId y : {Vocab::kBos, TokenId{6}, TokenId{7}, Vocab::kEos, TokenId{9}}) {
    auto oa = decoder_step(y, xa, da, sa, a.w, Mode::kCopyOnly);
    auto ob = decoder_step(y, xb, db, sb, b.w, Mode::kCopyOnly);
    EXPECT_EQ(oa.logits.to_vector(), ob.logits.to_vector());
    for (double x : oa.context_rev.value()) EXPECT_EQ(x, 0.0);
    commit_step(sa, xa, oa.attn, a.w, Mode::kCopyOnly);
    commit_step(sb, xb, ob.attn, b.w, Mode::kCopyOnly);
    xa = oa.state;
    xb = ob.state;
  }
}
