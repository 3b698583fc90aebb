#pragma once

#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rarelab/harness/inject.hpp"
#include "rarelab/harness/report.hpp"
#include "rarelab/harness/vectors.hpp"
#include "rarelab/rarify/classifier.hpp"
#include "rarelab/rarify/lexicon.hpp"
#include "rarelab/text/contexts.hpp"

namespace rarelab::harness {

inline constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

inline std::string limit_name(std::size_t c) { return c == kNoLimit ? "inf" : std::to_string(c); }

inline std::vector<std::size_t> default_c_max() { return {1, 2, 4, 8, 16, 32, 64, 128, kNoLimit}; }

struct DownstreamOptions {
  Strategy strategy = Strategy::Replace;
  bool indomain = false;
  /// Substituted words below this reference-corpus count are injected.
  std::size_t rare_threshold = 100;
  std::size_t max_contexts = 32;
  std::uint64_t seed = 0;
  std::vector<std::size_t> c_max = default_c_max();
};

struct DownstreamInstance {
  int prediction = 0;
  bool correct = false;
  /// Largest reference count among the substituted words.
  std::size_t max_count = 0;
  std::size_t injected = 0;
  std::size_t contexts = 0;
  std::string kind;
};

struct DownstreamRun {
  EvalReport report;
  std::vector<DownstreamInstance> instances;
};

/// Unlabelled sentences of a test set, each segment separately.
inline std::vector<text::Sentence> test_texts(const std::vector<rarify::RarifiedInstance>& test_set) {
  std::vector<text::Sentence> out;
  for (const auto& r : test_set) {
    out.push_back(r.instance.text);
    if (r.instance.is_pair()) out.push_back(r.instance.text_b);
  }
  return out;
}

/// Accuracy of `classifier` on a rarified test set. With `vectors`, every
/// substituted word rarer than the threshold is injected by `strategy`;
/// without, the classifier sees plain wordpieces.
template <typename Real>
DownstreamRun eval_downstream(const rarify::Classifier<Real>& classifier, const text::Vocabulary& vocab,
                              const std::vector<rarify::RarifiedInstance>& test_set, const text::Corpus& reference,
                              const rarify::SubstitutionLexicon& lexicon, const WordVectors<Real>* vectors,
                              const DownstreamOptions& options = {}) {
  const auto& enc = classifier.encoder();
  const auto slash = enc.token_row(vocab.slash_id());
  const std::vector<text::Sentence> extra = options.indomain ? test_texts(test_set) : std::vector<text::Sentence>{};
  std::map<std::string, std::pair<std::vector<Real>, std::size_t>> cache;
  auto vector_for = [&](const std::string& word) -> const std::pair<std::vector<Real>, std::size_t>& {
    auto it = cache.find(word);
    if (it != cache.end()) return it->second;
    const auto contexts = text::collect_contexts(word, reference, options.max_contexts, extra, options.seed);
    return cache.emplace(word, std::make_pair((*vectors)(word, contexts), contexts.size())).first->second;
  };

  DownstreamRun run;
  for (const auto& r : test_set) {
    const auto& x = r.instance;
    DownstreamInstance out;
    std::set<std::string> kinds;
    for (const auto& p : r.provenance) {
      out.max_count = std::max(out.max_count, reference.frequency(p.replacement));
      kinds.insert(lexicon.kind(p.original));
    }
    out.kind = kinds.size() == 1 ? *kinds.begin() : (kinds.empty() ? "" : "mixed");
    if (out.kind.empty()) out.kind = "untagged";

    const auto encoded = classifier.encode(x.text, x.text_b, vocab);
    core::Tensor<Real> e = enc.embed_tokens(encoded.ids).value();
    if (vectors) {
      InjectionPlan<Real> plan;
      for (const auto& p : r.provenance) {
        if (reference.frequency(p.replacement) >= options.rare_threshold) continue;
        const auto [b, en] = encoded.spans.at(p.position);
        if (b == en) continue;
        const auto& [v, n_ctx] = vector_for(p.replacement);
        plan.spans.push_back({b, en, v});
        out.contexts += n_ctx;
      }
      out.injected = plan.spans.size();
      if (!plan.spans.empty()) {
        e = options.strategy == Strategy::Replace
                ? inject_replace(e, std::move(plan)).sequence
                : inject_slash(e, std::move(plan), std::span<const Real>(slash), enc.config().max_length).sequence;
      }
    }
    const auto probs = classifier.proba_from_embeddings(core::Var<Real>::constant(std::move(e)));
    out.prediction = rarify::argmax(probs);
    out.correct = out.prediction == x.label;
    run.instances.push_back(std::move(out));
  }

  auto& rep = run.report;
  rep.metric = "accuracy";
  rep.total = test_set.size();
  auto score = [&](auto&& keep) {
    std::size_t n = 0, ok = 0;
    for (const auto& i : run.instances) {
      if (!keep(i)) continue;
      ++n;
      ok += i.correct;
    }
    return std::make_pair(n, n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0);
  };
  auto add = [&](std::string family, std::string name, auto&& keep) {
    auto [n, acc] = score(keep);
    rep.slices.push_back({std::move(family), std::move(name), n, acc});
  };
  add("all", "all", [](const auto&) { return true; });
  std::set<std::string> kinds;
  for (const auto& i : run.instances) kinds.insert(i.kind);
  for (const auto& k : kinds) add("kind", k, [&](const auto& i) { return i.kind == k; });
  for (auto c : options.c_max) add("c_max", limit_name(c), [c](const auto& i) { return c == kNoLimit || i.max_count < c; });
  std::size_t lo = 0;
  for (auto c : options.c_max) {
    add("interval", "[" + std::to_string(lo) + "," + limit_name(c) + ")",
        [lo, c](const auto& i) { return i.max_count >= lo && (c == kNoLimit || i.max_count < c); });
    if (c == kNoLimit) break;
    lo = c;
  }
  if (lo != 0 && options.c_max.back() != kNoLimit) {
    add("interval", "[" + std::to_string(lo) + ",inf)", [lo](const auto& i) { return i.max_count >= lo; });
  }
  std::size_t contexts = 0, injected = 0;
  for (const auto& i : run.instances) {
    contexts += i.contexts;
    injected += i.injected;
  }
  rep.details = {{"strategy", vectors ? strategy_name(options.strategy) : "none"},
                 {"indomain", options.indomain},
                 {"rare_threshold", options.rare_threshold},
                 {"injected_words", injected},
                 {"contexts", contexts}};
  return run;
}

}  // namespace rarelab::harness
