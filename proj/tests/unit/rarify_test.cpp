#include <set>

#include "gtest/gtest.h"
#include "rarelab/rarify/select.hpp"
#include "support/bow_classifier.hpp"
#include "support/fixture.hpp"

namespace rarelab::rarify {
namespace {

LabeledInstance make(Sentence text, int label = 0, Sentence text_b = {}) {
  return {std::move(text), std::move(text_b), label};
}

TEST(MaskWord, ReplacesOnePositionAndRestores) {
  const auto x = make({"a", "b"});
  const auto m = mask_word(x, 0);
  EXPECT_EQ(m.text, (Sentence{"[MASK]", "b"}));
  EXPECT_EQ(m.word_count(), x.word_count());
  auto back = m;
  back.word(0) = x.word(0);
  EXPECT_EQ(back, x);
  EXPECT_THROW(mask_word(x, 2), DomainError);
}

TEST(MaskWord, PositionsSpanBothSegments) {
  const auto x = make({"a", "b"}, 1, {"c", "d"});
  EXPECT_EQ(x.word(3), "d");
  EXPECT_EQ(mask_word(x, 2).text_b, (Sentence{"[MASK]", "d"}));
  EXPECT_EQ(mask_word(x, 2).text, x.text);
}

TEST(Dataset, JsonlRoundTrip) {
  std::vector<LabeledInstance> data{make({"a", "b"}, 1), make({"c"}, 0, {"d", "e"})};
  const auto text = to_jsonl(data);
  EXPECT_EQ(parse_jsonl<LabeledInstance>(text, instance_from_json, "t"), data);
  RarifiedInstance r{make({"x", "b"}, 1), {{0, "a", "x"}}, 4};
  const auto back = rarified_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.instance, r.instance);
  EXPECT_EQ(back.provenance, r.provenance);
  EXPECT_EQ(back.source_index, 4u);
  EXPECT_EQ(back.original(), make({"a", "b"}, 1));
  EXPECT_THROW(parse_jsonl<LabeledInstance>("{\"text\": 3}\n", instance_from_json, "t"), IoError);
}

TEST(Lexicon, ParsesDropsSelfAndFiltersByFrequency) {
  auto lex = SubstitutionLexicon::from_jsonl(
      "{\"word\": \"big\", \"synonyms\": [\"huge\", \"big\", \"vast\"], \"kind\": \"wn\"}\n"
      "{\"word\": \"cat\", \"synonyms\": [\"cta\"], \"kind\": \"msp\"}\n"
      "{\"word\": \"dog\", \"synonyms\": []}\n",
      3);
  EXPECT_EQ(lex.synonyms("big"), (std::vector<std::string>{"huge", "vast"}));
  EXPECT_EQ(lex.kind("cat"), "msp");
  EXPECT_FALSE(lex.substitutable("dog"));
  auto corpus = text::Corpus::from_lines({"huge huge huge", "vast cta"});
  auto rare = lex.filtered(corpus);
  EXPECT_EQ(rare.synonyms("big"), (std::vector<std::string>{"vast"}));
  EXPECT_EQ(rare.synonyms("cat"), (std::vector<std::string>{"cta"}));
  EXPECT_EQ(SubstitutionLexicon::from_jsonl(rare.to_jsonl(), 3).to_jsonl(), rare.to_jsonl());
}

SubstitutionLexicon letters_lexicon() {
  SubstitutionLexicon lex;
  lex.add("s", {"rare_s"});
  return lex;
}

TEST(Split, ThreeInstancesTwoSubstitutable) {
  std::vector<LabeledInstance> data{make({"s"}), make({"f"}), make({"s", "f"})};
  auto split = split_dataset(data, letters_lexicon(), 1);
  EXPECT_EQ(split.train, (std::vector<std::size_t>{1}));
  EXPECT_EQ(split.candidates, (std::vector<std::size_t>{0, 2}));
}

TEST(Split, AllSubstitutableKeepsOneThirdForTraining) {
  std::vector<LabeledInstance> data(9, make({"s"}));
  auto split = split_dataset(data, letters_lexicon(), 3);
  EXPECT_EQ(split.train.size(), 3u);
  EXPECT_EQ(split.candidates.size(), 6u);
}

TEST(Split, PartitionHoldsForManySeeds) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<LabeledInstance> data;
    const std::size_t n = 3 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) data.push_back(make({rng() % 3 ? "s" : "f"}));
    data[0] = make({"s"});
    auto split = split_dataset(data, letters_lexicon(), seed);
    std::set<std::size_t> all(split.train.begin(), split.train.end());
    for (auto c : split.candidates) {
      EXPECT_TRUE(all.insert(c).second);
      EXPECT_EQ(data[c].text[0], "s");
    }
    EXPECT_EQ(all.size(), n);
    EXPECT_GE(split.train.size() * 3, n);
    EXPECT_FALSE(split.candidates.empty());
    auto again = split_dataset(data, letters_lexicon(), seed);
    EXPECT_EQ(again.train, split.train);
  }
}

TEST(Split, NothingSubstitutableIsAnError) {
  std::vector<LabeledInstance> data(4, make({"f"}));
  EXPECT_THROW(split_dataset(data, letters_lexicon(), 1), DomainError);
  EXPECT_THROW(split_dataset({make({"s"})}, letters_lexicon(), 1), DomainError);
}

TEST(Augment, RatesOverManyWords) {
  core::Rng rng(11);
  AugmentStats stats;
  const Sentence words(20, "w");
  while (stats.words < 200000) augment_sentence(words, rng, {}, &stats);
  const auto r = stats.to_json();
  EXPECT_NEAR(r["mask_rate"].get<double>(), 0.05, 0.005);
  EXPECT_NEAR(r["duplicate_rate"].get<double>(), 0.10, 0.01);
  EXPECT_NEAR(r["copy_mask_rate"].get<double>(), 0.25, 0.02);
  EXPECT_EQ(stats.copies, 2 * stats.duplicated);
}

TEST(Augment, DuplicationPattern) {
  core::Rng rng(3);
  const auto out = augment_sentence({"a", "b"}, rng, {0.0, 1.0, 0.0});
  EXPECT_EQ(out, (Sentence{"a", "/", "a", "b", "/", "b"}));
  EXPECT_EQ(augment_sentence({"a", "b"}, rng, {0.0, 0.0, 0.0}), (Sentence{"a", "b"}));
  EXPECT_EQ(augment_sentence({"a", "b"}, rng, {1.0, 0.0, 0.0}), (Sentence{"[MASK]", "[MASK]"}));
}

TEST(Encode, PairSpansAndTruncation) {
  auto corpus = testing::small_corpus();
  auto vocab = testing::small_vocab(corpus);
  auto e = encode_instance({"the", "unicycle"}, {"a", "cat"}, vocab, 32);
  ASSERT_EQ(e.spans.size(), 4u);
  EXPECT_EQ(e.ids.front(), vocab.cls_id());
  EXPECT_EQ(e.spans[0], (std::pair<std::size_t, std::size_t>{1, 2}));
  EXPECT_EQ(e.ids[e.spans[1].second], vocab.sep_id());
  EXPECT_EQ(e.spans[2].first, e.spans[1].second + 1);
  EXPECT_EQ(e.ids.back(), vocab.sep_id());
  auto cut = encode_instance({"the", "unicycle", "is", "hard"}, {}, vocab, 5);
  EXPECT_EQ(cut.ids.size(), 5u);
  EXPECT_EQ(cut.spans[3].first, cut.spans[3].second);
}

struct TinyTask {
  text::Corpus corpus = testing::small_corpus();
  text::Vocabulary vocab = testing::small_vocab(corpus);
  std::vector<LabeledInstance> data{
      make({"the", "cat", "sat"}, 0), make({"a", "cat", "is", "red"}, 0), make({"the", "cat"}, 0),
      make({"the", "dog", "sat"}, 1), make({"a", "dog", "is", "red"}, 1), make({"the", "dog"}, 1)};
};

TEST(Classifier, DistributionAndCheckpoint) {
  TinyTask t;
  Classifier<float> c(testing::tiny_encoder<float>(t.vocab.size()), 3, 4);
  const auto p = c.predict_proba({"the", "cat"}, {"a", "dog"}, t.vocab);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);
  auto back = Classifier<float>::from_checkpoint(core::parse_checkpoint(core::serialize_checkpoint(c.to_checkpoint())));
  EXPECT_EQ(back.predict_proba({"the", "cat"}, {}, t.vocab), c.predict_proba({"the", "cat"}, {}, t.vocab));
  EXPECT_THROW(Classifier<float>(testing::tiny_encoder<float>(t.vocab.size()), 1, 4), ConfigError);
}

TEST(Classifier, FinetuneLearnsAndKeepsEmbeddingLayer) {
  TinyTask t;
  Classifier<float> c(testing::tiny_encoder<float>(t.vocab.size()), 2, 4);
  std::vector<std::vector<float>> before;
  for (auto* p : c.encoder().embedding_parameters()) before.push_back(p->value().values());
  FinetuneConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 3;
  cfg.learning_rate = 1e-2;
  cfg.augment = {0.0, 0.0, 0.0};
  auto report = finetune_baseline(c, t.data, t.vocab, cfg);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());
  EXPECT_EQ(accuracy(BoundClassifier<float>(c, t.vocab), t.data), 1.0);
  std::size_t k = 0;
  for (auto* p : c.encoder().embedding_parameters()) EXPECT_EQ(p->value().values(), before[k++]) << p->name();
  for (const auto* p : std::as_const(c).parameters()) EXPECT_TRUE(p->frozen());
}

TEST(Classifier, FinetuneCountsAugmentation) {
  TinyTask t;
  Classifier<float> c(testing::tiny_encoder<float>(t.vocab.size()), 2, 4);
  FinetuneConfig cfg;
  cfg.epochs = 2;
  auto report = finetune_baseline(c, t.data, t.vocab, cfg);
  EXPECT_EQ(report.augmentation.words, 2u * 18u);
  EXPECT_THROW(finetune_baseline(c, {make({"a"}, 5)}, t.vocab, cfg), DomainError);
}

TEST(Select, SingleDecisiveWordIsReplaced) {
  testing::BowClassifier c;
  c.weights = {{"good", {0.0, 3.0}}, {"fine", {0.0, 0.5}}, {"movie", {0.8, 0.0}}};
  SubstitutionLexicon lex;
  lex.add("good", {"goodish"});
  lex.add("fine", {"finey"});
  lex.add("movie", {"film"});
  const auto x = make({"a", "good", "fine", "movie"}, 1);
  auto sel = select_replacements(x, 0, c, lex, {});
  ASSERT_EQ(sel.outcome, Outcome::Emitted);
  EXPECT_EQ(sel.masked, (std::vector<std::size_t>{1}));
  ASSERT_EQ(sel.result->provenance.size(), 1u);
  EXPECT_EQ(sel.result->instance.text, (Sentence{"a", "goodish", "fine", "movie"}));

  // Same answer as trying every single masking.
  std::size_t best = 0;
  double best_p = 2;
  for (std::size_t j = 0; j < x.word_count(); ++j) {
    if (!lex.substitutable(x.word(j))) continue;
    const double p = c.predict_proba(mask_word(x, j))[1];
    if (p < best_p) best_p = p, best = j;
  }
  EXPECT_EQ(best, 1u);
}

TEST(Select, MisclassifiedAndRobustInstances) {
  testing::BowClassifier c;
  c.weights = {{"good", {0.0, 1.0}}, {"solid", {0.0, 5.0}}};
  SubstitutionLexicon lex;
  lex.add("good", {"goodish"});
  EXPECT_EQ(select_replacements(make({"good"}, 0), 0, c, lex, {}).outcome, Outcome::Misclassified);
  const auto robust = make({"good", "good", "good", "good", "good", "good", "solid"}, 1);
  auto sel = select_replacements(robust, 0, c, lex, {});
  EXPECT_EQ(sel.outcome, Outcome::Discarded);
  EXPECT_EQ(sel.masked.size(), 5u);
  EXPECT_EQ(select_replacements(make({"solid", "good"}, 1), 0, c, lex, {}).outcome, Outcome::Discarded);
}

TEST(Select, TiesGoToLowestPosition) {
  testing::BowClassifier c;
  c.weights = {{"x", {0.0, 1.0}}};
  SubstitutionLexicon lex;
  lex.add("x", {"y"});
  auto sel = select_replacements(make({"x", "x", "x"}, 1), 0, c, lex, {});
  EXPECT_EQ(sel.masked, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Select, MatchesBruteForceOracle) {
  auto world = testing::random_selection_world(21, 300);
  std::size_t emitted = 0, checked = 0;
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    const auto& x = world.instances[i];
    auto sel = select_replacements(x, i, world.classifier, world.lexicon, {});
    if (sel.outcome == Outcome::Misclassified) continue;
    bool flipped = false;
    EXPECT_EQ(sel.masked, testing::brute_force_greedy(x, world.classifier, world.lexicon, 5, &flipped)) << i;
    EXPECT_EQ(sel.outcome == Outcome::Emitted, flipped) << i;
    ++checked;
    if (sel.outcome != Outcome::Emitted) continue;
    ++emitted;
    const auto& r = *sel.result;
    auto remasked = r.instance;
    for (const auto& p : r.provenance) {
      remasked.word(p.position) = "[MASK]";
      const auto& options = world.lexicon.synonyms(p.original);
      EXPECT_NE(std::find(options.begin(), options.end(), p.replacement), options.end());
    }
    EXPECT_NE(argmax(world.classifier.predict_proba(remasked)), x.label);
    EXPECT_EQ(argmax(world.classifier.predict_proba(r.original())), x.label);
    EXPECT_EQ(r.original(), x);
  }
  EXPECT_GE(checked, 200u);
  EXPECT_GT(emitted, 50u);
}

TEST(Select, ClassifierNeverSeesSynonyms) {
  auto world = testing::random_selection_world(5, 80);
  QueryLog<testing::BowClassifier> log(world.classifier);
  std::vector<std::size_t> all(world.instances.size());
  std::iota(all.begin(), all.end(), 0);
  rarify_dataset(world.instances, all, log, world.lexicon, {});
  ASSERT_FALSE(log.queries().empty());
  for (const auto& q : log.queries()) {
    for (std::size_t i = 0; i < q.word_count(); ++i) EXPECT_NE(q.word(i)[0], 'r') << q.word(i);
  }
}

TEST(RarifyDataset, ReportAndDeterminism) {
  auto world = testing::random_selection_world(8, 120);
  std::vector<std::size_t> candidates;
  for (std::size_t i = world.instances.size(); i-- > 0;) candidates.push_back(i);
  auto a = rarify_dataset(world.instances, candidates, world.classifier, world.lexicon, {5, 9});
  auto b = rarify_dataset(world.instances, candidates, world.classifier, world.lexicon, {5, 9});
  const auto& rep = a.report;
  EXPECT_EQ(rep.candidates, 120u);
  EXPECT_EQ(rep.misclassified + rep.processed, rep.candidates);
  EXPECT_EQ(rep.emitted + rep.discarded, rep.processed);
  EXPECT_EQ(rep.misclassified, 12u);
  EXPECT_EQ(a.test_set.size(), rep.emitted);
  EXPECT_EQ(to_jsonl(a.test_set), to_jsonl(b.test_set));
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.test_set.size(); ++i) {
    total += a.test_set[i].provenance.size();
    if (i) EXPECT_LT(a.test_set[i - 1].source_index, a.test_set[i].source_index);
  }
  EXPECT_NEAR(rep.mean_replacements, static_cast<double>(total) / static_cast<double>(rep.emitted), 1e-12);
  EXPECT_GE(rep.mean_replacements, 1.0);
}

}  // namespace
}  // namespace rarelab::rarify
