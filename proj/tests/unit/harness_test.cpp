#include <cmath>

#include "gtest/gtest.h"
#include "rarelab/harness/downstream.hpp"
#include "rarelab/harness/probe.hpp"
#include "rarelab/harness/toy.hpp"
#include "support/fixture.hpp"

namespace rarelab::harness {
namespace {

using rarify::LabeledInstance;
using rarify::RarifiedInstance;

TEST(Mrr, Arithmetic) {
  EXPECT_NEAR(mrr({1, 2, 4}), 7.0 / 12.0, 1e-12);
  EXPECT_EQ(mrr({1, 1, 1}), 1.0);
  EXPECT_NEAR(mrr({2, std::nullopt}), 0.25, 1e-12);
  EXPECT_THROW(mrr({}), DomainError);
}

TEST(Mrr, AddingRankOneNeverLowersBelowMinimum) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::optional<std::size_t>> ranks;
    for (int k = 0; k < 1 + static_cast<int>(rng() % 6); ++k) {
      if (rng() % 4) ranks.push_back(1 + rng() % 150);
      else ranks.push_back(std::nullopt);
    }
    const double before = mrr(ranks);
    ranks.push_back(1);
    EXPECT_GE(mrr(ranks), before);
    EXPECT_LE(mrr(ranks), 1.0);
  }
}

TEST(Rank, TiesGoToLowerIdAndControlsAreSkipped) {
  auto corpus = testing::small_corpus();
  auto vocab = testing::small_vocab(corpus);
  std::vector<float> scores(vocab.size(), 0.0f);
  scores[vocab.mask_id()] = 10.0f;
  const auto a = vocab.id("mat"), b = vocab.id("rug");
  scores[b] = 1.0f;
  EXPECT_EQ(token_rank<float>(scores, b, vocab), 1u);
  scores[a] = 1.0f;
  EXPECT_EQ(token_rank<float>(scores, std::max(a, b), vocab), 2u);
  EXPECT_EQ(token_rank<float>(scores, std::min(a, b), vocab), 1u);
}

TEST(Probe, JsonAndSlotChecks) {
  ClozeProbe p{{"a", "cat", "is", "a", "___"}, "cat", {"pet"}};
  EXPECT_EQ(probe_from_json(to_json(p)), p);
  EXPECT_EQ(p.slot(), 4u);
  EXPECT_THROW((ClozeProbe{{"a", "b"}, "a", {"x"}}.slot()), DomainError);
  EXPECT_THROW((ClozeProbe{{"___", "___"}, "a", {"x"}}.slot()), DomainError);
  EXPECT_THROW(probe_from_json(nlohmann::json{{"pattern", {"___"}}, {"keyword", "a"}, {"targets", nlohmann::json::array()}}),
               DomainError);
}

struct ProbeWorld {
  text::Corpus corpus = testing::small_corpus();
  text::Vocabulary vocab = testing::small_vocab(corpus);
  encoder::EncoderModel<float> enc = testing::tiny_encoder<float>(vocab.size());
  std::vector<ClozeProbe> probes{{{"a", "unicycle", "is", "___"}, "unicycle", {"hard", "sat"}},
                                 {{"the", "___", "is", "red"}, "mat", {"mat"}},
                                 {{"the", "zebra", "is", "a", "___"}, "zebra", {"rug"}}};
};

TEST(RunProbe, PlainRunMatchesDirectRanking) {
  ProbeWorld w;
  auto run = run_probe<float>(w.enc, w.vocab, w.probes, w.corpus, nullptr);
  ASSERT_EQ(run.outcomes.size(), 3u);
  ASSERT_NE(run.report.find("bucket", "rare"), nullptr);
  ASSERT_NE(run.report.find("bucket", "medium"), nullptr);
  EXPECT_EQ(run.report.at("bucket", "rare").count, 3u);
  EXPECT_TRUE(run.outcomes[2].flagged);
  EXPECT_EQ(run.report.details["flagged"], 1);

  // Direct computation for the first probe.
  auto ids = encoder::encode_sentence({"a", "unicycle", "is", "[MASK]"}, w.vocab, 16);
  const std::size_t mask = std::find(ids.begin(), ids.end(), w.vocab.mask_id()) - ids.begin();
  auto scores = w.enc.mlm_logits(core::row(w.enc.forward_ids(ids), mask)).value();
  std::size_t best = 1000;
  for (auto t : {"hard", "sat"}) {
    const auto id = w.vocab.id(t);
    std::size_t r = 1;
    for (std::size_t u = 0; u < w.vocab.size(); ++u) {
      if (u == id || w.vocab.is_control(u)) continue;
      if (scores[u] > scores[id] || (scores[u] == scores[id] && u < id)) ++r;
    }
    best = std::min(best, r);
  }
  ASSERT_TRUE(run.outcomes[0].rank.has_value());
  EXPECT_EQ(*run.outcomes[0].rank, best);
}

TEST(RunProbe, IdentityVectorsForSingleTokenKeywordsChangeNothing) {
  ProbeWorld w;
  std::vector<ClozeProbe> probes{{{"the", "mat", "is", "___"}, "mat", {"the"}},
                                 {{"a", "rug", "is", "___"}, "rug", {"sat"}}};
  auto vectors = piece_mean_vectors(w.enc, w.vocab);
  auto plain = run_probe<float>(w.enc, w.vocab, probes, w.corpus, nullptr);
  auto injected = run_probe<float>(w.enc, w.vocab, probes, w.corpus, &vectors);
  for (std::size_t i = 0; i < probes.size(); ++i) EXPECT_EQ(plain.outcomes[i].rank, injected.outcomes[i].rank);
  EXPECT_GT(injected.outcomes[0].contexts, 0u);
}

TEST(RunProbe, CutoffDropsLowRanks) {
  ProbeWorld w;
  ProbeOptions opts;
  opts.cutoff = 0;
  auto run = run_probe<float>(w.enc, w.vocab, w.probes, w.corpus, nullptr, opts);
  EXPECT_EQ(run.report.at("all", "all").score, 0.0);
}

core::Tensor<float> rows(std::size_t n, std::size_t d) {
  core::Tensor<float> t({n, d});
  for (std::size_t i = 0; i < t.numel(); ++i) t.values()[i] = static_cast<float>(i);
  return t;
}

TEST(InjectReplace, CollapsesSpansAndRestores) {
  // "[CLS] riding a un ##ic ##y ##cle [SEP]" with the four unicycle pieces.
  const auto e = rows(8, 3);
  InjectionPlan<float> plan{{{3, 7, {-1, -2, -3}}}};
  const auto out = inject_replace(e, plan);
  ASSERT_EQ(out.sequence.rows(), 5u);
  EXPECT_EQ(out.positions, (std::vector<std::size_t>{3}));
  EXPECT_EQ(out.sequence(3, 1), -2.0f);
  EXPECT_EQ(out.sequence(4, 0), e(7, 0));
  EXPECT_EQ(restore_replace(out.sequence, plan, e).values(), e.values());

  InjectionPlan<float> single{{{2, 3, {9, 9, 9}}}};
  const auto swapped = inject_replace(e, single).sequence;
  EXPECT_EQ(swapped.rows(), 8u);
  EXPECT_EQ(swapped(2, 0), 9.0f);
  EXPECT_EQ(swapped(1, 0), e(1, 0));
  EXPECT_EQ(restore_replace(swapped, single, e).values(), e.values());

  InjectionPlan<float> two{{{5, 7, {1, 1, 1}}, {1, 3, {2, 2, 2}}}};
  const auto both = inject_replace(e, two);
  EXPECT_EQ(both.sequence.rows(), 6u);
  EXPECT_EQ(both.positions, (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(restore_replace(both.sequence, two, e).values(), e.values());

  EXPECT_THROW(inject_replace(e, InjectionPlan<float>{{{1, 4, {0, 0, 0}}, {3, 5, {0, 0, 0}}}}), DomainError);
  EXPECT_THROW(inject_replace(e, InjectionPlan<float>{{{6, 9, {0, 0, 0}}}}), DomainError);
}

/// Explicit rebuild: copy rows, and after the last row of each span write
/// the slash row and the vector.
core::Tensor<float> slash_oracle(const core::Tensor<float>& e, const InjectionPlan<float>& plan,
                                 const std::vector<float>& slash) {
  std::vector<float> out;
  for (std::size_t r = 0; r < e.rows(); ++r) {
    for (std::size_t c = 0; c < e.cols(); ++c) out.push_back(e(r, c));
    for (const auto& s : plan.spans) {
      if (s.end == r + 1) {
        out.insert(out.end(), slash.begin(), slash.end());
        out.insert(out.end(), s.vector.begin(), s.vector.end());
      }
    }
  }
  return core::Tensor<float>({out.size() / e.cols(), e.cols()}, out);
}

TEST(InjectSlash, AddsTwoRowsPerSpan) {
  const auto e = rows(8, 2);
  const std::vector<float> slash{-5, -5};
  InjectionPlan<float> one{{{3, 7, {7, 7}}}};
  const auto out = inject_slash<float>(e, one, slash);
  ASSERT_EQ(out.sequence.rows(), 10u);
  EXPECT_EQ(out.sequence(7, 0), -5.0f);
  EXPECT_EQ(out.positions, (std::vector<std::size_t>{8}));
  EXPECT_EQ(inject_slash<float>(e, {}, slash).sequence.values(), e.values());

  InjectionPlan<float> two{{{1, 2, {1, 1}}, {4, 6, {2, 2}}}};
  const auto both = inject_slash<float>(e, two, slash);
  EXPECT_EQ(both.sequence.rows(), 12u);
  EXPECT_EQ(both.sequence.values(), slash_oracle(e, two, slash).values());
  EXPECT_EQ(both.positions, (std::vector<std::size_t>{3, 9}));
}

TEST(InjectSlash, CropsAroundSpansWhenTooLong) {
  const auto e = rows(12, 1);
  const std::vector<float> slash{-5};
  InjectionPlan<float> plan{{{8, 9, {100}}}};
  const auto out = inject_slash<float>(e, plan, slash, 8);
  ASSERT_EQ(out.sequence.rows(), 8u);
  EXPECT_EQ(out.sequence(0, 0), 0.0f);
  EXPECT_EQ(out.sequence(7, 0), 11.0f);
  EXPECT_EQ(out.sequence(out.positions[0], 0), 100.0f);
  EXPECT_EQ(out.sequence(out.positions[0] - 1, 0), -5.0f);
  EXPECT_EQ(out.sequence(out.positions[0] - 2, 0), 8.0f);
  InjectionPlan<float> wide{{{1, 2, {1}}, {9, 10, {2}}}};
  EXPECT_THROW(inject_slash<float>(e, wide, slash, 8), DomainError);
}

struct DownstreamWorld {
  text::Corpus corpus = testing::small_corpus();
  text::Vocabulary vocab = testing::small_vocab(corpus);
  rarify::Classifier<float> classifier{testing::tiny_encoder<float>(vocab.size()), 2, 3};
  rarify::SubstitutionLexicon lexicon;
  std::vector<RarifiedInstance> test_set;

  DownstreamWorld() {
    lexicon.add("cat", {"mat"}, "wn");
    lexicon.add("dog", {"rug", "zebroid"}, "msp");
    lexicon.add("red", {"trousers"}, "wn");
    test_set = {
        {{{"the", "mat", "sat"}, {}, 0}, {{1, "cat", "mat"}}, 0},
        {{{"the", "rug", "is", "trousers"}, {}, 1}, {{1, "dog", "rug"}, {3, "red", "trousers"}}, 1},
        {{{"a", "zebroid"}, {"the", "mat"}, 1}, {{1, "dog", "zebroid"}, {3, "cat", "mat"}}, 2},
        {{{"the", "rug", "sat"}, {}, 1}, {{1, "dog", "rug"}}, 3},
    };
  }
};

TEST(Downstream, IdentityInjectionReproducesBaseline) {
  DownstreamWorld w;
  std::vector<RarifiedInstance> single = {w.test_set[0], w.test_set[1], w.test_set[3]};
  auto vectors = piece_mean_vectors(w.classifier.encoder(), w.vocab);
  auto base = eval_downstream<float>(w.classifier, w.vocab, single, w.corpus, w.lexicon, nullptr);
  auto same = eval_downstream<float>(w.classifier, w.vocab, single, w.corpus, w.lexicon, &vectors);
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_EQ(base.instances[i].prediction, same.instances[i].prediction);
    EXPECT_GT(same.instances[i].injected, 0u);
  }
  EXPECT_EQ(base.report.to_json()["slices"], same.report.to_json()["slices"]);
}

TEST(Downstream, SlicesPartitionAndCmaxInfinityIsAll) {
  DownstreamWorld w;
  auto vectors = piece_mean_vectors(w.classifier.encoder(), w.vocab);
  for (auto strategy : {Strategy::Replace, Strategy::Slash}) {
    DownstreamOptions opts;
    opts.strategy = strategy;
    auto run = eval_downstream<float>(w.classifier, w.vocab, w.test_set, w.corpus, w.lexicon, &vectors, opts);
    const auto& rep = run.report;
    EXPECT_EQ(rep.at("c_max", "inf").score, rep.at("all", "all").score);
    EXPECT_EQ(rep.at("c_max", "inf").count, 4u);
    std::map<std::string, std::size_t> per_family;
    for (const auto& s : rep.slices) {
      if (s.family != "c_max") per_family[s.family] += s.count;
      EXPECT_GE(s.score, 0.0);
      EXPECT_LE(s.score, 1.0);
    }
    for (const auto& [family, n] : per_family) EXPECT_EQ(n, 4u) << family;
    EXPECT_EQ(rep.at("kind", "mixed").count, 2u);
    EXPECT_EQ(rep.at("c_max", "1").count, 0u);
    EXPECT_EQ(rep.at("c_max", "4").count, 4u);
  }
}

TEST(Downstream, IndomainAddsContexts) {
  DownstreamWorld w;
  auto vectors = piece_mean_vectors(w.classifier.encoder(), w.vocab);
  DownstreamOptions opts;
  auto plain = eval_downstream<float>(w.classifier, w.vocab, w.test_set, w.corpus, w.lexicon, &vectors, opts);
  opts.indomain = true;
  auto indomain = eval_downstream<float>(w.classifier, w.vocab, w.test_set, w.corpus, w.lexicon, &vectors, opts);
  for (std::size_t i = 0; i < w.test_set.size(); ++i) {
    EXPECT_GT(indomain.instances[i].contexts, plain.instances[i].contexts) << i;
  }
  const auto csv = indomain.report.to_csv("x");
  EXPECT_EQ(csv.substr(0, 26), "run,family,name,count,scor");
}

TEST(Toy, TiersLexiconAndDataset) {
  ToyConfig cfg;
  cfg.classes = 4;
  cfg.sentences = 6000;
  cfg.dataset_size = 100;
  const auto world = generate_toy_world(cfg);
  text::Corpus corpus(world.sentences);
  EXPECT_GE(corpus.size(), 6000u);
  for (const auto& m : world.members) {
    const auto n = corpus.frequency(m.word);
    switch (m.tier) {
      case Tier::Frequent: EXPECT_GE(n, 150u); break;
      case Tier::Medium: EXPECT_TRUE(n >= 10 && n <= 60) << n; break;
      case Tier::Rare: EXPECT_TRUE(n >= 1 && n <= 9) << n; break;
      case Tier::Misspelled: EXPECT_TRUE(n >= 1 && n <= 6) << n; break;
    }
  }
  for (const auto& [word, entry] : world.lexicon.entries()) {
    for (const auto& s : entry.synonyms) EXPECT_LT(corpus.frequency(s), 100u) << s;
    EXPECT_TRUE(entry.kind == "wn" || entry.kind == "msp");
  }
  EXPECT_EQ(world.dataset.size(), 100u);
  for (const auto& p : world.probes) EXPECT_EQ(p.targets.size(), 1u);
  const auto again = generate_toy_world(cfg);
  EXPECT_EQ(again.sentences, world.sentences);
}

}  // namespace
}  // namespace rarelab::harness
