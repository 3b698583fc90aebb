#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rarelab/bertram/train.hpp"
#include "rarelab/encoder/pretrain.hpp"
#include "rarelab/harness/downstream.hpp"
#include "rarelab/harness/probe.hpp"
#include "rarelab/harness/toy.hpp"
#include "rarelab/harness/vectors.hpp"
#include "rarelab/rarify/classifier.hpp"
#include "rarelab/rarify/select.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rarelab;

namespace {

/// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  json config = json::object();

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config with one section per subcommand")
        ->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "seed overriding every seed in the config");
    app->add_option("--out", out, "output root (default: $RARELAB_OUT, else ./out)");
  }

  /// Reads the config file and settles the output root.
  void resolve() {
    if (!config_path.empty()) config = json::parse(core::read_file(config_path));
    if (out.empty() && config.contains("out")) out = config["out"].get<std::string>();
    if (out.empty()) {
      const char* env = std::getenv("RARELAB_OUT");
      out = env && *env ? env : "out";
    }
  }

  json section(const std::string& name) const {
    return config.contains(name) ? config[name] : json::object();
  }

  std::uint64_t seed_or(const json& j, std::uint64_t fallback) const {
    if (seed) return *seed;
    if (j.contains("seed")) return j["seed"].get<std::uint64_t>();
    return config.value("seed", fallback);
  }

  fs::path path(const std::string& rel) const { return fs::path(out) / rel; }
  fs::path or_default(const std::string& given, const std::string& rel) const {
    return given.empty() ? path(rel) : fs::path(given);
  }
};

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
}

void write_json(const fs::path& p, const json& j) { core::write_file_atomic(p, j.dump(2) + "\n"); }

/// Writes <name>.json and <name>.csv under reports/.
void write_report(const Common& c, const std::string& name, const json& j, const std::string& csv) {
  write_json(c.path("reports/" + name + ".json"), j);
  core::write_file_atomic(c.path("reports/" + name + ".csv"), csv);
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", i + 1, losses[i]);
    out += buf;
  }
  return out;
}

std::string sentences_text(const std::vector<text::Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ' ';
      out += s[i];
    }
    out += '\n';
  }
  return out;
}

encoder::EncoderModel<float> load_encoder(const fs::path& p) {
  require(p, "encoder checkpoint");
  auto enc = encoder::EncoderModel<float>::from_checkpoint(core::load_checkpoint(p));
  enc.set_frozen(true);
  return enc;
}

bertram::BertramModel<float> load_bertram(const fs::path& p) {
  require(p, "bertram checkpoint");
  return bertram::BertramModel<float>::from_checkpoint(core::load_checkpoint(p));
}

text::Corpus load_corpus(const fs::path& p) {
  require(p, "corpus");
  return text::ingest_corpus(p);
}

text::Vocabulary load_vocab(const fs::path& p) {
  require(p, "vocabulary");
  return text::Vocabulary::load(p);
}

rarify::SubstitutionLexicon load_lexicon(const fs::path& p, std::size_t threshold) {
  require(p, "lexicon");
  return rarify::SubstitutionLexicon::from_jsonl(core::read_file(p), threshold);
}

json split_to_json(const rarify::Split& s) { return {{"train", s.train}, {"candidates", s.candidates}}; }

rarify::Split split_from_json(const json& j) {
  return {j.at("train").get<std::vector<std::size_t>>(), j.at("candidates").get<std::vector<std::size_t>>()};
}

// ---------------------------------------------------------------- commands

struct MakeToy {
  Common common;
  std::optional<std::size_t> sentences;

  void run() {
    auto cfg = harness::ToyConfig::from_json(common.section("toy"));
    cfg.seed = common.seed_or(common.section("toy"), cfg.seed);
    if (sentences) cfg.sentences = *sentences;
    const auto world = harness::generate_toy_world(cfg);
    core::write_file_atomic(common.path("toy/corpus.txt"), sentences_text(world.sentences));
    core::write_file_atomic(common.path("toy/lexicon.jsonl"), world.lexicon.to_jsonl());
    core::write_file_atomic(common.path("toy/probes.jsonl"), rarify::to_jsonl(world.probes));
    core::write_file_atomic(common.path("toy/dataset.jsonl"), rarify::to_jsonl(world.dataset));
    json report{{"sentences", world.sentences.size()}, {"members", world.members.size()},
                {"lexicon_entries", world.lexicon.size()}, {"probes", world.probes.size()},
                {"dataset", world.dataset.size()}};
    write_report(common, "make_toy", report,
                 "item,count\nsentences," + std::to_string(world.sentences.size()) + "\nprobes," +
                     std::to_string(world.probes.size()) + "\ndataset," + std::to_string(world.dataset.size()) + "\n");
  }
};

struct Ingest {
  Common common;
  std::string corpus;
  bool lowercase = false;

  void run() {
    const auto section = common.section("ingest");
    const bool lower = lowercase || section.value("lowercase", false);
    const auto source = common.or_default(corpus.empty() ? section.value("corpus", "") : corpus, "toy/corpus.txt");
    require(source, "corpus");
    const auto c = text::ingest_corpus(source, lower);
    core::write_file_atomic(common.path("corpus.txt"), sentences_text(c.sentences()));
    std::size_t buckets[3] = {0, 0, 0};
    for (const auto& [w, n] : c.frequencies()) ++buckets[static_cast<int>(text::frequency_bucket(n))];
    json report{{"sentences", c.size()}, {"tokens", c.token_count()}, {"types", c.type_count()},
                {"types_by_bucket", {{"rare", buckets[0]}, {"medium", buckets[1]}, {"frequent", buckets[2]}}}};
    write_report(common, "ingest", report,
                 "bucket,types\nrare," + std::to_string(buckets[0]) + "\nmedium," + std::to_string(buckets[1]) +
                     "\nfrequent," + std::to_string(buckets[2]) + "\n");
  }
};

struct BuildVocab {
  Common common;
  std::optional<std::size_t> size, min_freq;

  void run() {
    const auto section = common.section("vocab");
    const std::size_t target = size.value_or(section.value("size", std::size_t{600}));
    const std::size_t whole = min_freq.value_or(section.value("min_freq", std::size_t{100}));
    const auto corpus = load_corpus(common.path("corpus.txt"));
    const auto vocab = text::build_vocab(corpus, target, whole);
    vocab.save(common.path("vocab.txt"));
    json report{{"size", vocab.size()}, {"requested", target}, {"min_freq", whole},
                {"fingerprint", vocab.fingerprint()}};
    write_report(common, "vocab", report, "size,fingerprint\n" + std::to_string(vocab.size()) + "," + vocab.fingerprint() + "\n");
  }
};

struct Pretrain {
  Common common;
  std::optional<std::size_t> epochs;

  void run() {
    auto ec = encoder::EncoderConfig::from_json(common.section("encoder"));
    const auto section = common.section("pretrain");
    auto pc = encoder::PretrainConfig::from_json(section);
    pc.seed = common.seed_or(section, pc.seed);
    if (epochs) pc.epochs = *epochs;
    const auto corpus = load_corpus(common.path("corpus.txt"));
    const auto vocab = load_vocab(common.path("vocab.txt"));
    ec.vocab_size = vocab.size();
    encoder::PretrainReport report;
    auto enc = encoder::pretrain_mlm(corpus, vocab, ec, pc, &report);
    enc.set_frozen(true);
    core::save_checkpoint(common.path("encoder.ckpt"), enc.to_checkpoint({{"vocab", vocab.fingerprint()}}));
    auto j = report.to_json();
    j["config"] = ec.to_json();
    write_report(common, "pretrain", j, loss_csv(report.epoch_loss));
  }
};

struct TrainBertram {
  Common common;
  int stage = 1;
  std::string variant;
  std::string init;

  void run() {
    const auto section = common.section("bertram");
    const std::string key = "stage" + std::to_string(stage);
    auto sc = bertram::StageConfig::from_json(section.value(key, json::object()));
    sc.seed = common.seed_or(section.value(key, json::object()), sc.seed);
    const auto v = bertram::parse_variant(variant.empty() ? section.value("variant", "add") : variant);

    const auto corpus = load_corpus(common.path("corpus.txt"));
    const auto vocab = load_vocab(common.path("vocab.txt"));
    const auto enc = load_encoder(common.path("encoder.ckpt"));
    const auto names = bertram::select_training_words(corpus, vocab, section.value("min_frequency", std::size_t{100}));
    const auto words = bertram::build_training_words(names, corpus, vocab, enc,
                                                     section.value("max_contexts", std::size_t{32}), sc.seed);

    bertram::StageReport report;
    fs::path target;
    if (stage == 1) {
      auto bc = bertram::BertramConfig::from_json(section);
      bc.variant = v;
      bc.seed = common.seed_or(section, bc.seed);
      bertram::BertramModel<float> model(bc, enc.hidden(), names);
      report = bertram::train_stage1_context(model, enc, vocab, words, sc);
      target = common.path("bertram/stage1.ckpt");
      core::save_checkpoint(target, model.to_checkpoint());
    } else if (stage == 2) {
      auto model = load_bertram(common.or_default(init, "bertram/stage1.ckpt"));
      report = bertram::train_stage2_form(model, bertram::form_targets(words), sc);
      target = common.path("bertram/stage2.ckpt");
      core::save_checkpoint(target, model.to_checkpoint());
    } else if (stage == 3) {
      auto model = load_bertram(common.or_default(init, "bertram/stage2.ckpt")).with_variant(v);
      report = bertram::train_stage3_combined(model, enc, vocab, words, sc);
      target = common.path(std::string("bertram/") + bertram::variant_name(v) + ".ckpt");
      core::save_checkpoint(target, model.to_checkpoint());
    } else {
      throw ConfigError("--stage must be 1, 2 or 3");
    }
    auto j = report.to_json();
    j["variant"] = bertram::variant_name(v);
    j["training_words"] = words.size();
    j["checkpoint"] = target.filename().string();
    const std::string name = stage == 3 ? "bertram_stage3_" + std::string(bertram::variant_name(v))
                                        : "bertram_stage" + std::to_string(stage);
    write_report(common, name, j, loss_csv(report.epoch_loss));
  }
};

struct Rarify {
  Common common;
  std::string action;
  std::string dataset, lexicon;
  std::optional<std::size_t> epochs;

  void run() {
    const auto section = common.section("rarify");
    const std::size_t threshold = section.value("threshold", std::size_t{100});
    const auto dataset_path = common.or_default(dataset, "toy/dataset.jsonl");
    require(dataset_path, "dataset");
    const auto data = rarify::load_dataset(dataset_path);
    const auto reference = load_corpus(common.path("corpus.txt"));

    if (action == "split") {
      const auto lex = load_lexicon(common.or_default(lexicon, "toy/lexicon.jsonl"), threshold).filtered(reference);
      const auto split = rarify::split_dataset(data, lex, common.seed_or(section, 1));
      core::write_file_atomic(common.path("rarify/lexicon.jsonl"), lex.to_jsonl());
      write_json(common.path("rarify/split.json"), split_to_json(split));
      write_report(common, "rarify_split",
                   {{"instances", data.size()}, {"train", split.train.size()},
                    {"candidates", split.candidates.size()}, {"lexicon_entries", lex.size()}},
                   "part,count\ntrain," + std::to_string(split.train.size()) + "\ncandidates," +
                       std::to_string(split.candidates.size()) + "\n");
      return;
    }

    require(common.path("rarify/split.json"), "split (run 'rarify split' first)");
    const auto split = split_from_json(json::parse(core::read_file(common.path("rarify/split.json"))));
    const auto vocab = load_vocab(common.path("vocab.txt"));

    if (action == "finetune") {
      auto fc = rarify::FinetuneConfig::from_json(section.value("finetune", json::object()));
      fc.seed = common.seed_or(section.value("finetune", json::object()), fc.seed);
      if (epochs) fc.epochs = *epochs;
      int labels = 0;
      for (const auto& x : data) labels = std::max(labels, x.label + 1);
      rarify::Classifier<float> clf(load_encoder(common.path("encoder.ckpt")), static_cast<std::size_t>(labels), fc.seed);
      const auto train = rarify::select(data, split.train);
      const auto report = rarify::finetune_baseline(clf, train, vocab, fc);
      core::save_checkpoint(common.path("rarify/classifier.ckpt"), clf.to_checkpoint());
      const rarify::BoundClassifier<float> bound(clf, vocab);
      json j{{"epoch_loss", report.epoch_loss}, {"steps", report.steps},
             {"augmentation", report.augmentation.to_json()}, {"train_accuracy", rarify::accuracy(bound, train)}};
      write_report(common, "rarify_finetune", j, loss_csv(report.epoch_loss));
      return;
    }

    if (action == "generate") {
      require(common.path("rarify/classifier.ckpt"), "classifier (run 'rarify finetune' first)");
      const auto clf = rarify::Classifier<float>::from_checkpoint(core::load_checkpoint(common.path("rarify/classifier.ckpt")));
      const auto lex = load_lexicon(common.path("rarify/lexicon.jsonl"), threshold);
      rarify::SelectConfig sc;
      sc.max_masked = section.value("max_masked", sc.max_masked);
      sc.seed = common.seed_or(section, sc.seed);
      const rarify::BoundClassifier<float> bound(clf, vocab);
      const auto result = rarify::rarify_dataset(data, split.candidates, bound, lex, sc);
      core::write_file_atomic(common.path("rarify/test.jsonl"), rarify::to_jsonl(result.test_set));
      std::string csv = "replacements,instances\n";
      for (std::size_t k = 0; k < result.report.replacements_histogram.size(); ++k) {
        csv += std::to_string(k) + "," + std::to_string(result.report.replacements_histogram[k]) + "\n";
      }
      write_report(common, "rarify_generate", result.report.to_json(), csv);
      return;
    }
    throw ConfigError("unknown rarify action '" + action + "' (expected split, finetune or generate)");
  }
};

struct Probe {
  Common common;
  std::string probes, bertram_path;
  std::optional<std::size_t> cutoff;

  void run() {
    const auto section = common.section("probe");
    harness::ProbeOptions po;
    po.cutoff = cutoff.value_or(section.value("cutoff", po.cutoff));
    po.max_contexts = section.value("max_contexts", po.max_contexts);
    po.seed = common.seed_or(section, po.seed);
    const auto probe_path = common.or_default(probes.empty() ? section.value("probes", "") : probes, "toy/probes.jsonl");
    require(probe_path, "probe file");
    const auto list = harness::load_probes(probe_path);
    const auto corpus = load_corpus(common.path("corpus.txt"));
    const auto vocab = load_vocab(common.path("vocab.txt"));
    const auto enc = load_encoder(common.path("encoder.ckpt"));

    std::optional<bertram::BertramModel<float>> model;
    std::optional<harness::WordVectors<float>> vectors;
    if (!bertram_path.empty()) {
      model = load_bertram(bertram_path);
      vectors = harness::bertram_vectors(*model, enc, vocab);
    }
    auto run = harness::run_probe<float>(enc, vocab, list, corpus, vectors ? &*vectors : nullptr, po);
    run.report.details["model"] = model ? bertram::variant_name(model->variant()) : "plain";
    const std::string name = model ? std::string("probe_") + bertram::variant_name(model->variant()) : "probe_plain";
    write_report(common, name, run.report.to_json(), run.report.to_csv(name));
  }
};

struct Eval {
  Common common;
  std::string strategy, bertram_path, test;
  bool indomain = false;
  std::optional<std::size_t> rare_threshold;

  void run() {
    const auto section = common.section("eval");
    harness::DownstreamOptions opts;
    opts.strategy = harness::parse_strategy(strategy.empty() ? section.value("strategy", "replace") : strategy);
    opts.indomain = indomain || section.value("indomain", false);
    opts.rare_threshold = rare_threshold.value_or(section.value("rare_threshold", opts.rare_threshold));
    opts.max_contexts = section.value("max_contexts", opts.max_contexts);
    opts.seed = common.seed_or(section, opts.seed);

    const auto test_path = common.or_default(test, "rarify/test.jsonl");
    require(test_path, "rarified test set");
    const auto test_set = rarify::load_rarified(test_path);
    const auto reference = load_corpus(common.path("corpus.txt"));
    const auto vocab = load_vocab(common.path("vocab.txt"));
    require(common.path("rarify/classifier.ckpt"), "classifier");
    const auto clf = rarify::Classifier<float>::from_checkpoint(core::load_checkpoint(common.path("rarify/classifier.ckpt")));
    const auto lex = load_lexicon(common.path("rarify/lexicon.jsonl"), opts.rare_threshold);

    std::optional<encoder::EncoderModel<float>> enc;
    std::optional<bertram::BertramModel<float>> model;
    std::optional<harness::WordVectors<float>> vectors;
    std::string name = "eval_plain";
    if (!bertram_path.empty()) {
      enc = load_encoder(common.path("encoder.ckpt"));
      model = load_bertram(bertram_path);
      vectors = harness::bertram_vectors(*model, *enc, vocab);
      name = std::string("eval_") + bertram::variant_name(model->variant()) + "_" + harness::strategy_name(opts.strategy);
      if (opts.indomain) name += "_indomain";
    }
    auto run = harness::eval_downstream<float>(clf, vocab, test_set, reference, lex, vectors ? &*vectors : nullptr, opts);
    write_report(common, name, run.report.to_json(), run.report.to_csv(name));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rarelab: rare-word embedding laboratory"};
  app.require_subcommand(1);

  MakeToy make_toy;
  auto* mt = app.add_subcommand("make-toy", "generate the toy corpus, lexicon, probes and dataset");
  make_toy.common.add_to(mt);
  mt->add_option("--sentences", make_toy.sentences, "minimum number of sentences");

  Ingest ingest;
  auto* in = app.add_subcommand("ingest", "read a one-sentence-per-line corpus");
  ingest.common.add_to(in);
  in->add_option("--corpus", ingest.corpus, "corpus file (default: <out>/toy/corpus.txt)");
  in->add_flag("--lowercase", ingest.lowercase, "lowercase all text");

  BuildVocab build_vocab;
  auto* bv = app.add_subcommand("build-vocab", "build the wordpiece vocabulary");
  build_vocab.common.add_to(bv);
  bv->add_option("--size", build_vocab.size, "target vocabulary size");
  bv->add_option("--min-freq", build_vocab.min_freq, "minimum frequency for whole-word tokens");

  Pretrain pretrain;
  auto* pt = app.add_subcommand("pretrain", "masked-language-model pretraining");
  pretrain.common.add_to(pt);
  pt->add_option("--epochs", pretrain.epochs, "training epochs");

  TrainBertram train;
  auto* tb = app.add_subcommand("train-bertram", "one stage of form-context training");
  train.common.add_to(tb);
  tb->add_option("--stage", train.stage, "1 context-only, 2 form-only, 3 combined")
      ->required()
      ->check(CLI::IsMember({1, 2, 3}));
  tb->add_option("--variant", train.variant, "shallow, replace or add")
      ->check(CLI::IsMember({"shallow", "replace", "add"}));
  tb->add_option("--init", train.init, "checkpoint of the previous stage");

  Rarify rarify;
  auto* rf = app.add_subcommand("rarify", "dataset rarification");
  rarify.common.add_to(rf);
  rf->add_option("action", rarify.action, "split, finetune or generate")
      ->required()
      ->check(CLI::IsMember({"split", "finetune", "generate"}));
  rf->add_option("--dataset", rarify.dataset, "labelled JSON-lines dataset");
  rf->add_option("--lexicon", rarify.lexicon, "substitution lexicon (split only)");
  rf->add_option("--epochs", rarify.epochs, "finetuning epochs");

  Probe probe;
  auto* pr = app.add_subcommand("probe", "cloze-probe MRR");
  probe.common.add_to(pr);
  pr->add_option("--probes", probe.probes, "JSON-lines probe file");
  pr->add_option("--bertram", probe.bertram_path, "inject embeddings from this bertram checkpoint");
  pr->add_option("--cutoff", probe.cutoff, "ranks beyond this score zero");

  Eval eval;
  auto* ev = app.add_subcommand("eval", "downstream accuracy on a rarified test set");
  eval.common.add_to(ev);
  ev->add_option("--strategy", eval.strategy, "replace or slash")->check(CLI::IsMember({"replace", "slash"}));
  ev->add_flag("--indomain", eval.indomain, "add test texts as contexts");
  ev->add_option("--bertram", eval.bertram_path, "inject embeddings from this bertram checkpoint");
  ev->add_option("--test", eval.test, "rarified test set (default: <out>/rarify/test.jsonl)");
  ev->add_option("--rare-threshold", eval.rare_threshold, "inject words rarer than this");

  CLI11_PARSE(app, argc, argv);

  try {
    auto dispatch = [](auto& cmd) {
      cmd.common.resolve();
      cmd.run();
    };
    if (mt->parsed()) dispatch(make_toy);
    if (in->parsed()) dispatch(ingest);
    if (bv->parsed()) dispatch(build_vocab);
    if (pt->parsed()) dispatch(pretrain);
    if (tb->parsed()) dispatch(train);
    if (rf->parsed()) dispatch(rarify);
    if (pr->parsed()) dispatch(probe);
    if (ev->parsed()) dispatch(eval);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
