// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

// Sense-annotated, pre-embedded sentences and their on-disk format.
//
// A corpus is stored as two files:
//
//   metadata (text, one JSON object per line)
//     line 1   {"format":"vsm-corpus","version":1,"split":...,"dim":E,
//               "records":N,"inventory":{word_id:[sense_id,...],...}}
//     line 2.. {"sentence_id":...,"word_id":...,"sense_id":...,
//               "target_index":i,"tokens":[...],"blob_offset":o,
//               "length":L,"dim":E}
//
//   embedding blob (binary, little-endian)
//     bytes 0-7    magic "VSMEMB1\0"
//     bytes 8-15   E (u64)
//     bytes 16-23  record count (u64)
//     bytes 24-31  FNV-1a 64 checksum of the payload (u64)
//     bytes 32..   payload: per record, L x E float64 row-major, located at
//                  blob_offset (absolute file offset)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vsm/tensor.hpp"

namespace vsm {

enum class Split { all, meta_train, meta_validation, meta_test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SentenceRecord {
  std::string sentence_id;
  std::string word_id;
  std::string sense_id;
  std::size_t target_index = 0;
  std::vector<std::string> tokens;
  Tensor embeddings;  // L x E

  std::size_t length() const { return tokens.size(); }
  std::size_t dim() const { return embeddings.cols(); }
  Tensor target_embedding() const { return embeddings.row(target_index); }

  friend bool operator==(const SentenceRecord&, const SentenceRecord&) = default;
};

using SenseInventory = std::map<std::string, std::vector<std::string>>;

struct Corpus {
  std::vector<SentenceRecord> records;
  Split split = Split::all;
  SenseInventory sense_inventory;
  std::size_t dim = 0;

  // Throws FormatError / DimensionError naming the offending record.
  void validate() const;
  std::vector<std::string> word_ids() const;
  std::size_t num_senses() const;
  // Records of one word, in corpus order.
  std::vector<const SentenceRecord*> records_of(const std::string& word_id) const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Builds the inventory from the records (sorted, unique).
SenseInventory inventory_from_records(const std::vector<SentenceRecord>& records);

inline constexpr char kBlobMagic[8] = {'V', 'S', 'M', 'E', 'M', 'B', '1', '\0'};
inline constexpr std::size_t kBlobHeaderBytes = 32;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n);

Corpus load_corpus(const std::filesystem::path& meta_path, const std::filesystem::path& blob_path);
void write_corpus(const Corpus& corpus, const std::filesystem::path& meta_path,
                  const std::filesystem::path& blob_path);

struct SynthSpec {
  std::size_t num_words = 40;
  std::size_t senses_min = 2;
  std::size_t senses_max = 6;
  std::size_t examples_min = 20;
  std::size_t examples_max = 40;
  std::size_t dim = 16;
  // Minimum pairwise distance between the centres of one word's senses.
  double separation = 4.0;
  // Within-sense spread of the target-token embedding.
  double sigma = 0.5;
  std::size_t length_min = 4;
  std::size_t length_max = 10;
  // Context tokens: background_sigma * N(0, I) + context_signal * centre.
  double context_signal = 0.5;
  double background_sigma = 1.0;
  // When > 0, sense centres are jittered copies of a shared pool of
  // archetypes, so distinct words have related senses.
  std::size_t archetypes = 0;
  double archetype_jitter = 0.25;
  // Static-input regime: every occurrence of a word gets the same target
  // embedding and only the context carries the sense.
  bool static_targets = false;
  std::size_t max_retries = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

Corpus synth_corpus(const SynthSpec& spec);

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct CorpusSplits {
  Corpus meta_train;
  Corpus meta_validation;
  Corpus meta_test;
};

// Word-level split: every word's records land in exactly one part.
CorpusSplits split_corpus(const Corpus& corpus, const SplitFractions& fractions, std::uint64_t seed);

}  // namespace vsm
