#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "rarelab/rarify/dataset.hpp"
#include "rarelab/rarify/lexicon.hpp"

namespace rarelab::testing {

/// Linear bag-of-words scorer; unknown words and [MASK] contribute nothing.
struct BowClassifier {
  std::size_t labels = 2;
  std::map<std::string, std::vector<double>> weights;

  std::vector<double> predict_proba(const rarify::LabeledInstance& x) const {
    std::vector<double> z(labels, 0.0);
    for (std::size_t i = 0; i < x.word_count(); ++i) {
      auto it = weights.find(x.word(i));
      if (it == weights.end()) continue;
      for (std::size_t c = 0; c < labels; ++c) z[c] += it->second[c];
    }
    double top = z[0];
    for (double v : z) top = std::max(top, v);
    double total = 0.0;
    for (auto& v : z) total += v = std::exp(v - top);
    for (auto& v : z) v /= total;
    return z;
  }
};

/// Random scorer, lexicon and instances for selection checks. Words
/// "s0".."s{n}" are substitutable, "f0".."f{n}" are not.
struct SelectionWorld {
  BowClassifier classifier;
  rarify::SubstitutionLexicon lexicon;
  std::vector<rarify::LabeledInstance> instances;
};

inline SelectionWorld random_selection_world(std::uint64_t seed, std::size_t count, std::size_t labels = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> weight(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  SelectionWorld w;
  w.classifier.labels = labels;
  const std::size_t kinds = 10;
  for (std::size_t k = 0; k < kinds; ++k) {
    for (const char* prefix : {"s", "f"}) {
      std::vector<double> v(labels);
      for (auto& x : v) x = weight(rng);
      w.classifier.weights[prefix + std::to_string(k)] = v;
    }
    w.lexicon.add("s" + std::to_string(k), {"r" + std::to_string(k) + "a", "r" + std::to_string(k) + "b"});
  }
  std::uniform_int_distribution<std::size_t> pick(0, kinds - 1), subs(1, 8), fill(0, 4);
  for (std::size_t i = 0; i < count; ++i) {
    rarify::LabeledInstance x;
    const std::size_t n_sub = subs(rng), n_fill = fill(rng);
    for (std::size_t k = 0; k < n_sub + n_fill; ++k) {
      const bool sub = k < n_sub;
      x.text.push_back((sub ? "s" : "f") + std::to_string(pick(rng)));
    }
    std::shuffle(x.text.begin(), x.text.end(), rng);
    if (coin(rng)) {
      const std::size_t split = x.text.size() / 2;
      x.text_b.assign(x.text.begin() + static_cast<long>(split), x.text.end());
      x.text.resize(split);
      if (x.text.empty()) std::swap(x.text, x.text_b);
    }
    const auto p = w.classifier.predict_proba(x);
    x.label = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (i % 10 == 9) x.label = (x.label + 1) % static_cast<int>(labels);
    w.instances.push_back(std::move(x));
  }
  return w;
}

/// Independent greedy oracle: every step rebuilds each trial instance from
/// the original and scores all remaining positions.
inline std::vector<std::size_t> brute_force_greedy(const rarify::LabeledInstance& x, const BowClassifier& c,
                                                   const rarify::SubstitutionLexicon& lexicon,
                                                   std::size_t max_masked, bool* flipped) {
  std::vector<std::size_t> chosen;
  *flipped = false;
  const auto y = static_cast<std::size_t>(x.label);
  for (std::size_t step = 0; step < max_masked; ++step) {
    double best_p = 2.0;
    std::size_t best = x.word_count();
    bool best_flips = false;
    for (std::size_t j = 0; j < x.word_count(); ++j) {
      if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      if (lexicon.synonyms(x.word(j)).empty()) continue;
      rarify::LabeledInstance trial = x;
      for (auto m : chosen) trial.word(m) = "[MASK]";
      trial.word(j) = "[MASK]";
      const auto p = c.predict_proba(trial);
      if (p[y] < best_p) {
        best_p = p[y];
        best = j;
        best_flips = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) != y;
      }
    }
    if (best == x.word_count()) return chosen;
    chosen.push_back(best);
    if (best_flips) {
      *flipped = true;
      return chosen;
    }
  }
  return chosen;
}

}  // namespace rarelab::testing
