#pragma once

// Synthetic "noisy-hard" classification benchmark: Gaussian class blobs where
// a fraction of training examples closest to a decision boundary carry the
// label of their nearest rival class. Each example also gets a short synthetic
// text whose length and word rarity grow with how close it sits to a boundary,
// so the text-based difficulty measurers have something (imperfect) to see.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "irtcl/error.hpp"
#include "irtcl/model.hpp"

namespace irtcl {

struct BenchmarkConfig {
  std::size_t n_train = 10000;
  std::size_t n_val = 1000;
  std::size_t n_features = 16;
  std::size_t n_classes = 3;
  double separation = 3.0;     // typical distance between class centers (unit noise)
  double noise_frac = 0.10;    // fraction of training labels flipped
  double boundary_frac = 0.25; // flips are drawn from this lowest-margin fraction
  bool noisy_val = false;      // also corrupt the validation split
  std::size_t vocab_size = 5000;
  std::uint64_t seed = 0;

  bool operator==(const BenchmarkConfig&) const = default;

  void validate() const {
    require(n_train >= 1 && n_val >= 1, "benchmark: splits must be non-empty");
    require(n_features >= 1, "benchmark: n_features must be >= 1");
    require(n_classes >= 2, "benchmark: n_classes must be >= 2");
    require(separation > 0, "benchmark: separation must be > 0");
    require(noise_frac >= 0 && noise_frac < 1, "benchmark: noise_frac must lie in [0, 1)");
    require(boundary_frac > 0 && boundary_frac <= 1 && boundary_frac >= noise_frac,
            "benchmark: boundary_frac must lie in [noise_frac, 1]");
    require(vocab_size >= 10, "benchmark: vocab_size must be >= 10");
  }
};

struct Benchmark {
  LabeledDataset train;
  LabeledDataset val;
  std::vector<std::uint8_t> train_flipped;  // 1 where the training label was corrupted
};

namespace detail {

struct BlobSample {
  std::vector<double> x;
  int label = 0;
  int rival = 0;
  double margin = 0.0;  // log-posterior gap between the true class and its rival
};

inline std::vector<BlobSample> draw_blobs(std::size_t n, const std::vector<std::vector<double>>& centers,
                                          std::mt19937_64& rng) {
  const std::size_t k = centers.size();
  const std::size_t d = centers.front().size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(k) - 1);
  std::vector<BlobSample> out(n);
  std::vector<double> score(k);
  for (auto& s : out) {
    s.label = cls(rng);
    s.x.resize(d);
    for (std::size_t c = 0; c < d; ++c) s.x[c] = centers[s.label][c] + normal(rng);
    for (std::size_t j = 0; j < k; ++j) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist += (s.x[c] - centers[j][c]) * (s.x[c] - centers[j][c]);
      score[j] = -0.5 * dist;
    }
    double best_other = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) {
      if (static_cast<int>(j) == s.label) continue;
      if (score[j] > best_other) {
        best_other = score[j];
        s.rival = static_cast<int>(j);
      }
    }
    s.margin = score[s.label] - best_other;
  }
  return out;
}

inline void corrupt_boundary(std::vector<BlobSample>& samples, double noise_frac, double boundary_frac,
                             std::mt19937_64& rng, std::vector<std::uint8_t>& flipped) {
  const std::size_t n = samples.size();
  flipped.assign(n, 0);
  auto n_flip = static_cast<std::size_t>(std::llround(noise_frac * static_cast<double>(n)));
  auto n_band = std::max(n_flip, static_cast<std::size_t>(std::llround(boundary_frac * static_cast<double>(n))));
  if (n_flip == 0) return;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(samples[a].margin) < std::abs(samples[b].margin); });
  idx.resize(n_band);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t k = 0; k < n_flip; ++k) {
    auto& s = samples[idx[k]];
    s.label = s.rival;
    flipped[idx[k]] = 1;
  }
}

inline LabeledDataset to_dataset(const std::vector<BlobSample>& samples, const std::string& prefix,
                                 std::size_t n_classes, std::size_t vocab, std::mt19937_64& rng) {
  LabeledDataset ds;
  ds.n_features = samples.empty() ? 0 : samples.front().x.size();
  ds.n_classes = n_classes;
  const std::size_t width = std::to_string(samples.size()).size();
  // Word w has rank w; the head of the vocabulary is common, the tail rare.
  const std::size_t head = std::max<std::size_t>(vocab / 10, 1);
  std::vector<double> zipf(head);
  for (std::size_t w = 0; w < head; ++w) zipf[w] = 1.0 / static_cast<double>(w + 1);
  std::discrete_distribution<std::size_t> common(zipf.begin(), zipf.end());
  std::uniform_int_distribution<std::size_t> rare(head, vocab - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::string num = std::to_string(k);
    ds.ids.emplace_back(prefix + std::string(width - num.size(), '0') + num);
    ds.features.insert(ds.features.end(), samples[k].x.begin(), samples[k].x.end());
    ds.labels.push_back(samples[k].label);
    double hardness = 1.0 / (1.0 + std::abs(samples[k].margin));
    std::poisson_distribution<int> extra(3.0 + 10.0 * hardness);
    int len = 4 + extra(rng);
    double p_rare = 0.1 + 0.4 * hardness;
    std::string text;
    for (int t = 0; t < len; ++t) {
      std::size_t w = unif(rng) < p_rare ? rare(rng) : common(rng);
      if (t) text.push_back(' ');
      text += "w" + std::to_string(w);
    }
    ds.texts.push_back({std::move(text)});
  }
  return ds;
}

}  // namespace detail

inline Benchmark make_noisy_hard_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centers(cfg.n_classes, std::vector<double>(cfg.n_features));
  // Expected distance between two class centers equals `separation`.
  const double scale = cfg.separation / std::sqrt(2.0 * static_cast<double>(cfg.n_features));
  for (auto& c : centers)
    for (auto& v : c) v = scale * normal(rng);

  auto train = detail::draw_blobs(cfg.n_train, centers, rng);
  auto val = detail::draw_blobs(cfg.n_val, centers, rng);
  Benchmark b;
  detail::corrupt_boundary(train, cfg.noise_frac, cfg.boundary_frac, rng, b.train_flipped);
  if (cfg.noisy_val) {
    std::vector<std::uint8_t> ignored;
    detail::corrupt_boundary(val, cfg.noise_frac, cfg.boundary_frac, rng, ignored);
  }
  b.train = detail::to_dataset(train, "tr", cfg.n_classes, cfg.vocab_size, rng);
  b.val = detail::to_dataset(val, "va", cfg.n_classes, cfg.vocab_size, rng);
  return b;
}

}  // namespace irtcl
