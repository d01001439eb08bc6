#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "corrkg/beam.hpp"
#include "corrkg/generate.hpp"
#include "test_support.hpp"

using namespace corrkg;
using Seq = std::vector<TokenId>;

namespace {

// A language model given by an explicit table: the next-token distribution
// is a deterministic pseudo-random function of the prefix.
struct TableModel {
  std::size_t vocab;
  std::uint64_t seed;
  TokenId eos;

  std::vector<double> logprobs(const Seq& prefix) const {
    std::uint64_t h = seed;
    for (TokenId t : prefix) h = h * 1000003ULL + t + 1;
    std::mt19937_64 rng(h);
    std::gamma_distribution<double> g(0.7);
    std::vector<double> p(vocab);
    double z = 0;
    for (double& x : p) z += (x = g(rng) + 1e-12);
    for (double& x : p) x = std::log(x / z);
    return p;
  }
};

constexpr TokenId kTableBos = 1000;  // outside every table vocabulary

// The state is the full token path so far.
BeamResult<Seq> run_beam(const TableModel& m, std::size_t beam, std::size_t depth) {
  auto expand = [&](const Seq& path, TokenId last) {
    Seq next = path;
    if (last != kTableBos) next.push_back(last);
    return std::make_pair(m.logprobs(next), next);
  };
  return beam_search(std::make_shared<const Seq>(), expand, BeamConfig{beam, depth, kTableBos, m.eos});
}

struct Scored {
  Seq tokens;
  double score;
};

// Every EOS-terminated sequence of length <= depth, scored left to right.
std::vector<Scored> enumerate_finished(const TableModel& m, std::size_t depth) {
  std::vector<Scored> out;
  std::vector<Scored> frontier{{{}, 0.0}};
  for (std::size_t d = 0; d < depth; ++d) {
    std::vector<Scored> next;
    for (const auto& f : frontier) {
      const auto lp = m.logprobs(f.tokens);
      for (TokenId w = 0; w < m.vocab; ++w) {
        Scored s{f.tokens, f.score + lp[w]};
        s.tokens.push_back(w);
        (w == m.eos ? out : next).push_back(s);
      }
    }
    frontier = std::move(next);
  }
  return out;
}

bool oracle_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

TEST(Beam, FullWidthBeamFindsExhaustiveArgmax) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t V = 2 + seed % 4;  // 2..5
    const std::size_t depth = 1 + seed % 4;
    TableModel m{V, seed, static_cast<TokenId>(seed % V)};
    std::size_t width = 1;
    for (std::size_t d = 0; d < depth; ++d) width *= V;
    auto beam = run_beam(m, width, depth);
    auto all = enumerate_finished(m, depth);
    std::sort(all.begin(), all.end(), oracle_before);
    ASSERT_EQ(beam.finished.size(), all.size()) << "seed " << seed;
    for (std::size_t i = 0; i < all.size(); ++i) {
      EXPECT_EQ(beam.finished[i].tokens, all[i].tokens) << "seed " << seed << " rank " << i;
      EXPECT_EQ(beam.finished[i].score, all[i].score);
    }
  }
}

TEST(Beam, WidthOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableModel m{7, seed, 3};
    auto beam = run_beam(m, 1, 6);
    Seq greedy;
    double score = 0;
    bool finished = false;
    for (std::size_t d = 0; d < 6 && !finished; ++d) {
      auto lp = m.logprobs(greedy);
      const TokenId best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      score += lp[best];
      greedy.push_back(best);
      finished = best == m.eos;
    }
    const auto& got = finished ? beam.finished : beam.unfinished;
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].tokens, greedy);
    EXPECT_EQ(got[0].score, score);
    EXPECT_EQ((finished ? beam.unfinished : beam.finished).size(), 0u);
  }
}

TEST(Beam, HighEndProbabilityGivesEmptyPhrase) {
  auto expand = [](const int&, TokenId) {
    std::vector<double> lp(6, std::log(0.02));
    lp[Vocab::kEos] = std::log(0.9);
    return std::make_pair(lp, 0);
  };
  auto r = beam_search(std::make_shared<const int>(0), expand, BeamConfig{4, 3});
  ASSERT_FALSE(r.finished.empty());
  EXPECT_EQ(r.finished[0].tokens, Seq{Vocab::kEos});
  EXPECT_EQ(r.finished[0].score, std::log(0.9));
}

TEST(Beam, RankingIsNonIncreasingAndHypothesesLeaveWhenFinished) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TableModel m{9, seed + 50, 3};
    auto r = run_beam(m, 5, 6);
    for (std::size_t i = 1; i < r.finished.size(); ++i) {
      EXPECT_GE(r.finished[i - 1].score, r.finished[i].score);
    }
    for (std::size_t i = 1; i < r.unfinished.size(); ++i) {
      EXPECT_GE(r.unfinished[i - 1].score, r.unfinished[i].score);
    }
    for (const auto& h : r.finished) {
      EXPECT_EQ(h.tokens.back(), m.eos);
      EXPECT_EQ(std::count(h.tokens.begin(), h.tokens.end(), m.eos), 1);
    }
    for (const auto& h : r.unfinished) EXPECT_EQ(h.tokens.size(), 6u);
  }
}

TEST(Beam, NoEndTokenLeavesOnlyUnfinished) {
  auto expand = [](const int&, TokenId) {
    std::vector<double> lp(5, std::log(0.25));
    lp[Vocab::kEos] = -std::numeric_limits<double>::infinity();
    return std::make_pair(lp, 0);
  };
  auto r = beam_search(std::make_shared<const int>(0), expand, BeamConfig{3, 4});
  EXPECT_TRUE(r.finished.empty());
  ASSERT_EQ(r.unfinished.size(), 3u);
  // Ties fall back to lexicographic order.
  EXPECT_EQ(r.unfinished[0].tokens, (Seq{0, 0, 0, 0}));
}

TEST(Beam, RejectsZeroWidthOrDepth) {
  auto expand = [](const int&, TokenId) { return std::make_pair(std::vector<double>(5, -1.6), 0); };
  EXPECT_THROW(beam_search(std::make_shared<const int>(0), expand, BeamConfig{0, 3}), std::invalid_argument);
  EXPECT_THROW(beam_search(std::make_shared<const int>(0), expand, BeamConfig{3, 0}), std::invalid_argument);
}

TEST(DedupFilter, Examples) {
  using P = std::vector<std::vector<std::string>>;
  EXPECT_EQ(dedup_filter(P{{"multi", "agent", "systems"}, {"multi", "agent"}}),
            (P{{"multi", "agent", "systems"}}));
  EXPECT_EQ(dedup_filter(P{{"a", "b"}, {"c", "d"}}), (P{{"a", "b"}, {"c", "d"}}));
  EXPECT_EQ(dedup_filter(P{{"x"}, {"x"}}), (P{{"x"}}));
  // Shorter first: the later, longer phrase contains it and is dropped.
  EXPECT_EQ(dedup_filter(P{{"agent"}, {"multi", "agent"}, {"norm"}}), (P{{"agent"}, {"norm"}}));
  // Containment is contiguous, not a subset test.
  EXPECT_EQ(dedup_filter(P{{"a", "b", "c"}, {"a", "c"}}), (P{{"a", "b", "c"}, {"a", "c"}}));
}

// ---------------------------------------------------------------------------
// Multi-phrase generation on a small random model.

namespace {

struct GenFixture {
  ModelConfig cfg = fixtures::toy_config();
  Vocab vocab;
  ParamStore<double> store;
  TrainingInstance src;

  explicit GenFixture(std::uint64_t seed) : store(init_params<double>(model_param_specs(cfg), seed, 0.5)) {
    for (std::size_t i = Vocab::kReserved; i < cfg.vocab_size; ++i) vocab.add("w" + std::to_string(i));
    std::mt19937_64 rng(seed);
    src = fixtures::random_instance(rng, cfg.vocab_size, 6, 1, 1, 2);
    src.phrases.clear();
  }
};

GenerationConfig gen_config(Mode mode, std::size_t k) {
  GenerationConfig g;
  g.beam_size = 6;
  g.beam_depth = 4;
  g.num_phrases = k;
  g.mode = mode;
  return g;
}

}  // namespace

TEST(Generate, CoverageAndReviewAccounting) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenFixture f(seed);
    for (Mode m : {Mode::kFull, Mode::kCoverageOnly, Mode::kReviewOnly, Mode::kCopyOnly}) {
      auto r = generate_keyphrases(f.src, f.store, f.vocab, gen_config(m, 5));
      std::size_t steps = 0;
      for (const auto& p : r.phrases) steps += p.tokens.size() + (p.unfinished ? 0 : 1);
      EXPECT_EQ(r.total_steps, steps);
      EXPECT_NEAR(r.coverage_sum, static_cast<double>(steps), 1e-9);
      EXPECT_EQ(r.review_size, steps);
    }
  }
}

TEST(Generate, NoDuplicatesAndAtMostK) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenFixture f(seed + 20);
    for (bool joint : {false, true}) {
      auto g = gen_config(Mode::kFull, 8);
      g.joint_beam = joint;
      auto r = generate_keyphrases(f.src, f.store, f.vocab, g);
      EXPECT_LE(r.phrases.size(), 8u);
      std::set<std::string> seen;
      for (const auto& p : r.phrases) {
        EXPECT_FALSE(p.tokens.empty());
        EXPECT_TRUE(seen.insert(p.text()).second) << p.text();
      }
    }
  }
}

TEST(Generate, SinglePhraseIsTopNonemptyBeamResult) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenFixture f(seed + 40);
    auto g = gen_config(Mode::kFull, 1);
    auto r = generate_keyphrases(f.src, f.store, f.vocab, g);
    ASSERT_EQ(r.phrases.size(), 1u);

    Tape<double> tape(false);
    auto w = bind_model(tape, std::as_const(f.store));
    auto doc = make_document_context(encode(f.src.source_ids, w), f.src.source_ext_ids,
                                     f.src.extended_size(f.vocab), w);
    auto beam = generate_phrase(doc, initial_decode_state<double>(doc.length()),
                                init_phrase_state(doc.encoding, w), w, g);
    const Hypothesis<PhraseState<double>>* top = nullptr;
    for (const auto& h : beam.finished)
      if (h.tokens.size() > 1) {
        top = &h;
        break;
      }
    if (!top) top = &beam.unfinished.front();
    EXPECT_EQ(r.phrases[0].score, top->score);
    Seq body = top->tokens;
    if (top->finished) body.pop_back();
    EXPECT_EQ(r.phrases[0].tokens, render_tokens(body, f.vocab, f.src.oov_words));
  }
}

TEST(Generate, CopyOnlyIgnoresCoverageAndReviewParameters) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenFixture a(seed + 60), b(seed + 60);
    std::mt19937_64 rng(seed);
    for (const char* name : {"attn.coverage", "review.memory", "review.state", "review.v", "dec.context1"}) {
      for (double& x : b.store.at(name).value.values()) x = std::uniform_real_distribution<double>(-3, 3)(rng);
    }
    auto ra = generate_keyphrases(a.src, a.store, a.vocab, gen_config(Mode::kCopyOnly, 5));
    auto rb = generate_keyphrases(b.src, b.store, b.vocab, gen_config(Mode::kCopyOnly, 5));
    ASSERT_EQ(ra.phrases.size(), rb.phrases.size());
    for (std::size_t i = 0; i < ra.phrases.size(); ++i) {
      EXPECT_EQ(ra.phrases[i].tokens, rb.phrases[i].tokens);
      EXPECT_EQ(ra.phrases[i].score, rb.phrases[i].score);
    }
  }
}

TEST(Generate, DedupFilterKeepsFirstOfContainedPhrases) {
  GenFixture f(80);
  auto g = gen_config(Mode::kFull, 10);
  auto plain = generate_keyphrases(f.src, f.store, f.vocab, g);
  g.dedup_filter = true;
  auto filtered = generate_keyphrases(f.src, f.store, f.vocab, g);
  std::vector<std::vector<std::string>> toks;
  for (const auto& p : plain.phrases) toks.push_back(p.tokens);
  const auto expect = dedup_filter(toks);
  ASSERT_EQ(filtered.phrases.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(filtered.phrases[i].tokens, expect[i]);
}

TEST(Generate, RejectsMismatchedVocabAndBadConfig) {
  GenFixture f(90);
  Vocab small;
  EXPECT_THROW(generate_keyphrases(f.src, f.store, small, gen_config(Mode::kFull, 2)), std::invalid_argument);
  auto g = gen_config(Mode::kFull, 0);
  EXPECT_THROW(generate_keyphrases(f.src, f.store, f.vocab, g), std::invalid_argument);
}
