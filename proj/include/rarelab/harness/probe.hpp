#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/encoder/model.hpp"
#include "rarelab/harness/inject.hpp"
#include "rarelab/harness/report.hpp"
#include "rarelab/harness/vectors.hpp"
#include "rarelab/rarify/dataset.hpp"
#include "rarelab/text/contexts.hpp"

namespace rarelab::harness {

inline constexpr std::string_view kSlot = "___";

/// A pattern with one slot, the keyword it is about and the acceptable
/// fillers.
struct ClozeProbe {
  std::vector<std::string> pattern;
  std::string keyword;
  std::vector<std::string> targets;

  std::size_t slot() const {
    std::optional<std::size_t> at;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (pattern[i] != kSlot) continue;
      if (at) throw DomainError("probe pattern has more than one slot");
      at = i;
    }
    if (!at) throw DomainError("probe pattern has no slot");
    return *at;
  }

  bool operator==(const ClozeProbe&) const = default;
};

inline nlohmann::json to_json(const ClozeProbe& p) {
  return {{"pattern", p.pattern}, {"keyword", p.keyword}, {"targets", p.targets}};
}

inline ClozeProbe probe_from_json(const nlohmann::json& j) {
  ClozeProbe p{j.at("pattern").get<std::vector<std::string>>(), j.at("keyword").get<std::string>(),
               j.at("targets").get<std::vector<std::string>>()};
  if (p.targets.empty()) throw DomainError("probe for '" + p.keyword + "' has no targets");
  p.slot();
  return p;
}

inline std::vector<ClozeProbe> load_probes(const std::filesystem::path& path) {
  return rarify::parse_jsonl<ClozeProbe>(core::read_file(path), probe_from_json, path.string());
}

/// Mean reciprocal rank; a missing rank counts as 0.
inline double mrr(const std::vector<std::optional<std::size_t>>& ranks) {
  if (ranks.empty()) throw DomainError("mean reciprocal rank of zero probes");
  double total = 0.0;
  for (const auto& r : ranks) {
    if (!r) continue;
    if (*r == 0) throw DomainError("ranks start at 1");
    total += 1.0 / static_cast<double>(*r);
  }
  return total / static_cast<double>(ranks.size());
}

/// 1-based rank of `target` among the non-control tokens by score; equal
/// scores rank the lower id first.
template <typename Real>
std::size_t token_rank(std::span<const Real> scores, text::TokenId target, const text::Vocabulary& vocab) {
  const Real s = scores[target];
  std::size_t rank = 1;
  for (text::TokenId u = 0; u < scores.size(); ++u) {
    if (u == target || vocab.is_control(u)) continue;
    if (scores[u] > s || (scores[u] == s && u < target)) ++rank;
  }
  return rank;
}

struct ProbeOptions {
  std::size_t cutoff = 100;
  std::size_t max_contexts = 32;
  std::uint64_t seed = 0;
};

struct ProbeOutcome {
  std::optional<std::size_t> rank;
  std::size_t keyword_count = 0;
  std::size_t contexts = 0;
  /// Keyword absent from the corpus; scored with the empty-context fallback.
  bool flagged = false;
};

struct ProbeRun {
  EvalReport report;
  std::vector<ProbeOutcome> outcomes;
};

/// Ranks each probe's targets at its slot. Without `vectors` the keyword
/// enters as its wordpieces; with it every keyword occurrence is collapsed
/// to the vector computed from the keyword's corpus contexts.
template <typename Real>
ProbeRun run_probe(const encoder::EncoderModel<Real>& encoder, const text::Vocabulary& vocab,
                   const std::vector<ClozeProbe>& probes, const text::Corpus& corpus,
                   const WordVectors<Real>* vectors, const ProbeOptions& options = {}) {
  if (probes.empty()) throw DomainError("no probes to run");
  ProbeRun run;
  std::vector<std::optional<std::size_t>> all;
  std::vector<std::vector<std::optional<std::size_t>>> by_bucket(3);
  std::size_t flagged = 0;
  for (const auto& probe : probes) {
    const std::size_t slot = probe.slot();
    std::vector<text::TokenId> targets;
    for (const auto& t : probe.targets) {
      const auto pieces = vocab.tokenize_word(t);
      if (pieces.size() == 1 && !vocab.is_control(pieces[0])) targets.push_back(pieces[0]);
    }
    if (targets.empty()) throw DomainError("probe for '" + probe.keyword + "' has no single-token target");

    auto words = probe.pattern;
    words[slot] = std::string(text::kMask);
    const auto pieces = vocab.tokenize_words(words);
    std::vector<text::TokenId> ids{vocab.cls_id()};
    ids.insert(ids.end(), pieces.ids.begin(), pieces.ids.end());
    ids.push_back(vocab.sep_id());
    if (ids.size() > encoder.config().max_length) {
      throw DomainError("probe for '" + probe.keyword + "' is longer than the encoder input");
    }
    std::size_t mask_row = pieces.spans[slot].first + 1;

    ProbeOutcome outcome;
    outcome.keyword_count = corpus.frequency(probe.keyword);
    outcome.flagged = outcome.keyword_count == 0;
    flagged += outcome.flagged;
    core::Tensor<Real> e = encoder.embed_tokens(ids).value();
    if (vectors) {
      const auto contexts = text::collect_contexts(probe.keyword, corpus, options.max_contexts, {}, options.seed);
      outcome.contexts = contexts.size();
      const auto v = (*vectors)(probe.keyword, contexts);
      InjectionPlan<Real> plan;
      std::size_t removed_before_mask = 0;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] != probe.keyword) continue;
        const auto [b, en] = pieces.spans[i];
        plan.spans.push_back({b + 1, en + 1, v});
        if (i < slot) removed_before_mask += en - b - 1;
      }
      e = inject_replace(e, std::move(plan)).sequence;
      mask_row -= removed_before_mask;
    }
    const auto h = encoder.forward_embeddings(core::Var<Real>::constant(std::move(e)));
    const auto scores = encoder.mlm_logits(core::row(h, mask_row));
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (auto t : targets) best = std::min(best, token_rank<Real>(scores.value().values(), t, vocab));
    if (best <= options.cutoff) outcome.rank = best;
    all.push_back(outcome.rank);
    by_bucket[static_cast<std::size_t>(text::frequency_bucket(outcome.keyword_count))].push_back(outcome.rank);
    run.outcomes.push_back(outcome);
  }
  auto& rep = run.report;
  rep.metric = "mrr";
  rep.total = probes.size();
  rep.slices.push_back({"all", "all", all.size(), mrr(all)});
  for (auto b : {text::FrequencyBucket::Rare, text::FrequencyBucket::Medium, text::FrequencyBucket::Frequent}) {
    const auto& ranks = by_bucket[static_cast<std::size_t>(b)];
    rep.slices.push_back({"bucket", text::bucket_name(b), ranks.size(), ranks.empty() ? 0.0 : mrr(ranks)});
  }
  rep.details = {{"cutoff", options.cutoff}, {"flagged", flagged}, {"injected", vectors != nullptr}};
  return run;
}

}  // namespace rarelab::harness
