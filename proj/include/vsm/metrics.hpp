// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vsm {

// Unweighted mean over classes with at least one gold instance of
// 2PR / (P + R); a class never predicted correctly scores 0.
double macro_f1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& golds,
                std::size_t num_classes);

struct EpisodeScore {
  std::uint64_t id = 0;
  std::string word_id;
  std::size_t num_senses = 0;
  double macro_f1 = 0.0;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> golds;

  friend bool operator==(const EpisodeScore&, const EpisodeScore&) = default;
};

struct SeedReport {
  std::uint64_t seed = 0;
  std::vector<EpisodeScore> episodes;
  double mean = 0.0;

  friend bool operator==(const SeedReport&, const SeedReport&) = default;
};

struct EvalReport {
  std::string model;
  std::size_t support_size = 0;
  std::vector<SeedReport> seeds;
  // Mean and sample standard deviation (n - 1) of the per-seed means.
  double mean = 0.0;
  double std = 0.0;

  std::size_t num_episodes() const { return seeds.empty() ? 0 : seeds.front().episodes.size(); }
  // Recomputes every mean from the episode scores.
  void finalize();
  void validate() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Line-delimited JSON: a summary line, then one line per (seed, episode).
void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& xs);

struct SenseCountBucket {
  std::size_t num_senses = 0;
  std::size_t episodes = 0;
  double mean = 0.0;
};

// Mean episode macro F1 per word sense count, pooling every seed of every
// report. Buckets are sorted by sense count.
std::vector<SenseCountBucket> breakdown_by_sense_count(const std::vector<EvalReport>& reports);

struct ChanceBand {
  double lower = 0.0;
  double upper = 0.0;
  double observed = 0.0;
  bool contains_observed() const { return observed >= lower && observed <= upper; }
};

// Null distribution of a seed's mean macro F1 obtained by shuffling gold
// labels within each episode; the band holds its central `level` mass.
ChanceBand permutation_chance_band(const SeedReport& seed, std::size_t permutations, std::uint64_t rng_seed,
                                   double level = 0.99);

}  // namespace vsm
