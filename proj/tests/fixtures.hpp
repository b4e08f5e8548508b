// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vsm/episodes.hpp"
#include "vsm/noise.hpp"

namespace vsm::testing {

// K Gaussian clusters in d dims with one-token sentences; n support and n
// query sentences per class. Records own their storage.
struct ClusterEpisode {
  std::vector<SentenceRecord> records;
  Episode episode;

  ClusterEpisode(std::size_t K, std::size_t n, std::size_t d, double gap = 2.0, std::uint64_t seed = 1,
                 std::size_t length = 1) {
    records.reserve(2 * K * n);
    for (std::size_t c = 0; c < K; ++c) {
      const Tensor centre = NoiseKey(seed).with({7, c}).normals({d});
      for (std::size_t i = 0; i < 2 * n; ++i) {
        SentenceRecord r;
        r.sentence_id = "c" + std::to_string(c) + "_" + std::to_string(i);
        r.word_id = "w";
        r.sense_id = "w.s" + std::to_string(c);
        r.target_index = 0;
        r.embeddings = NoiseKey(seed).with({8, c, i}).normals({length, d});
        for (std::size_t t = 0; t < length; ++t) r.tokens.push_back("t" + std::to_string(t));
        for (std::size_t j = 0; j < d; ++j) {
          r.embeddings.at(0, j) = gap * centre[j] + 0.3 * r.embeddings.at(0, j);
        }
        records.push_back(std::move(r));
      }
    }
    for (std::size_t c = 0; c < K; ++c) episode.classes.push_back("w.s" + std::to_string(c));
    episode.num_support_classes = K;
    for (std::size_t c = 0; c < K; ++c) {
      for (std::size_t i = 0; i < 2 * n; ++i) {
        LabeledRecord lr{&records[c * 2 * n + i], c};
        (i < n ? episode.support : episode.query).push_back(lr);
      }
    }
  }
  ClusterEpisode(const ClusterEpisode&) = delete;
  ClusterEpisode& operator=(const ClusterEpisode&) = delete;
};

}  // namespace vsm::testing
