// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vsm/corpus.hpp"

namespace vsm {

enum class EpisodeKind { meta_train, meta_test };

struct LabeledRecord {
  const SentenceRecord* record = nullptr;
  std::size_t class_index = 0;
};

// One few-shot task. Records are borrowed from a Corpus that must outlive
// the episode.
struct Episode {
  std::uint64_t id = 0;
  EpisodeKind kind = EpisodeKind::meta_train;
  std::vector<std::string> classes;
  std::vector<LabeledRecord> support;
  std::vector<LabeledRecord> query;
  // Classes [0, num_support_classes) have support examples. Meta-test words
  // with more senses than |S| can have query-only classes after them; those
  // are never predicted but still count in macro F1.
  std::size_t num_support_classes = 0;
  std::string word_id;  // meta-test only

  std::size_t num_classes() const { return classes.size(); }
  void validate() const;
};

struct SamplerConfig {
  std::size_t support_size = 8;
  std::size_t words_per_episode = 2;
  // 0 picks max(1, |S| / (min_shots * words_per_episode)).
  std::size_t senses_per_word = 0;
  std::size_t min_shots = 2;
  std::size_t num_episodes = 10000;
  std::size_t max_resamples = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

// Caches the per-word sense index of a meta-train corpus so repeated draws
// stay cheap. Every draw is a pure function of (cfg.seed, episode_index).
class EpisodeSampler {
 public:
  EpisodeSampler(const Corpus& corpus, SamplerConfig cfg);

  Episode sample(std::uint64_t episode_index) const;
  const SamplerConfig& config() const { return cfg_; }
  std::size_t senses_per_word() const { return senses_per_word_; }

 private:
  struct WordIndex {
    std::string word_id;
    std::vector<std::string> senses;
    std::vector<std::vector<const SentenceRecord*>> examples;  // parallel to senses
  };
  SamplerConfig cfg_;
  std::size_t senses_per_word_ = 0;
  std::vector<WordIndex> words_;
};

Episode sample_meta_train_episode(const Corpus& corpus, const SamplerConfig& cfg,
                                  std::uint64_t episode_index);

struct MetaTestEpisodes {
  std::vector<Episode> episodes;
  std::vector<std::string> skipped_words;
};

// One episode per word with at least |S|+1 sentences, in word_id order.
MetaTestEpisodes build_meta_test_episodes(const Corpus& corpus, std::size_t support_size,
                                          std::uint64_t seed);

std::map<std::string, std::size_t> episode_label_map(const Episode& episode);

// Line-delimited dumps that reference sentence_ids only.
void dump_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path);
std::vector<Episode> load_episodes(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace vsm
