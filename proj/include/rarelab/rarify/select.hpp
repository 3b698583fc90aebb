#pragma once

#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/rng.hpp"
#include "rarelab/rarify/classifier.hpp"
#include "rarelab/rarify/dataset.hpp"
#include "rarelab/rarify/lexicon.hpp"

namespace rarelab::rarify {

/// Anything that maps an instance to a distribution over labels.
template <typename C>
concept InstanceClassifier = requires(const C& c, const LabeledInstance& x) {
  { c.predict_proba(x) } -> std::convertible_to<std::vector<double>>;
};

enum class Outcome { Emitted, Discarded, Misclassified };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Emitted: return "emitted";
    case Outcome::Discarded: return "discarded";
    case Outcome::Misclassified: return "misclassified";
  }
  return "?";
}

struct Selection {
  Outcome outcome = Outcome::Discarded;
  /// Positions in the order they were masked.
  std::vector<std::size_t> masked;
  std::optional<RarifiedInstance> result;
};

struct SelectConfig {
  std::size_t max_masked = 5;
  std::uint64_t seed = 1;
};

/// Greedy masking search for one candidate. Each round masks the
/// not-yet-masked substitutable position that minimizes p(y | x) with all
/// earlier maskings kept; the first flip of the prediction emits the
/// instance with every masked position replaced by a random synonym.
template <InstanceClassifier C>
Selection select_replacements(const LabeledInstance& x, std::size_t index, const C& classifier,
                              const SubstitutionLexicon& lexicon, const SelectConfig& config) {
  Selection sel;
  if (argmax(classifier.predict_proba(x)) != x.label) {
    sel.outcome = Outcome::Misclassified;
    return sel;
  }
  const auto y = static_cast<std::size_t>(x.label);
  std::vector<bool> taken(x.word_count(), false);
  LabeledInstance current = x;
  for (std::size_t round = 0; round < config.max_masked; ++round) {
    std::optional<std::size_t> best;
    double best_p = 0.0;
    std::vector<double> best_dist;
    for (std::size_t j = 0; j < x.word_count(); ++j) {
      if (taken[j] || !lexicon.substitutable(x.word(j))) continue;
      auto dist = classifier.predict_proba(mask_word(current, j));
      if (!best || dist.at(y) < best_p) {
        best = j;
        best_p = dist[y];
        best_dist = std::move(dist);
      }
    }
    if (!best) break;
    taken[*best] = true;
    sel.masked.push_back(*best);
    current = mask_word(current, *best);
    if (argmax(best_dist) != x.label) {
      std::vector<std::size_t> positions = sel.masked;
      std::sort(positions.begin(), positions.end());
      core::Rng rng(core::derive_seed(config.seed, index));
      RarifiedInstance r{x, {}, index};
      for (auto p : positions) {
        const auto& options = lexicon.synonyms(x.word(p));
        const auto& pick = options[core::uniform_index(rng, options.size())];
        r.provenance.push_back({p, x.word(p), pick});
        r.instance.word(p) = pick;
      }
      sel.outcome = Outcome::Emitted;
      sel.result = std::move(r);
      return sel;
    }
  }
  sel.outcome = Outcome::Discarded;
  return sel;
}

/// Records every instance shown to the wrapped classifier.
template <InstanceClassifier C>
class QueryLog {
 public:
  explicit QueryLog(const C& inner) : inner_(&inner) {}

  std::vector<double> predict_proba(const LabeledInstance& x) const {
    queries_.push_back(x);
    return inner_->predict_proba(x);
  }

  const std::vector<LabeledInstance>& queries() const { return queries_; }
  void clear() { queries_.clear(); }

 private:
  const C* inner_;
  mutable std::vector<LabeledInstance> queries_;
};

struct RarifyReport {
  std::size_t candidates = 0;
  std::size_t misclassified = 0;
  std::size_t processed = 0;
  std::size_t emitted = 0;
  std::size_t discarded = 0;
  double mean_replacements = 0.0;
  /// replacements_histogram[k] counts emitted instances with k replacements.
  std::vector<std::size_t> replacements_histogram;

  nlohmann::json to_json() const {
    return {{"candidates", candidates}, {"misclassified", misclassified}, {"processed", processed},
            {"emitted", emitted},       {"discarded", discarded},         {"mean_replacements", mean_replacements},
            {"replacements_histogram", replacements_histogram}};
  }
};

struct RarifyResult {
  std::vector<RarifiedInstance> test_set;
  RarifyReport report;
};

/// Runs selection on every candidate; the test set is ordered by source
/// index.
template <InstanceClassifier C>
RarifyResult rarify_dataset(const std::vector<LabeledInstance>& data, const std::vector<std::size_t>& candidates,
                            const C& classifier, const SubstitutionLexicon& lexicon, const SelectConfig& config) {
  RarifyResult out;
  auto& rep = out.report;
  rep.candidates = candidates.size();
  rep.replacements_histogram.assign(config.max_masked + 1, 0);
  std::size_t replaced = 0;
  std::vector<std::size_t> order = candidates;
  std::sort(order.begin(), order.end());
  for (auto i : order) {
    auto sel = select_replacements(data.at(i), i, classifier, lexicon, config);
    switch (sel.outcome) {
      case Outcome::Misclassified: ++rep.misclassified; continue;
      case Outcome::Discarded: ++rep.discarded; break;
      case Outcome::Emitted:
        ++rep.emitted;
        replaced += sel.result->provenance.size();
        ++rep.replacements_histogram[sel.result->provenance.size()];
        out.test_set.push_back(std::move(*sel.result));
        break;
    }
    ++rep.processed;
  }
  rep.mean_replacements = rep.emitted ? static_cast<double>(replaced) / static_cast<double>(rep.emitted) : 0.0;
  return out;
}

}  // namespace rarelab::rarify
