// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/episodes.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "vsm/errors.hpp"
#include "vsm/log.hpp"
#include "vsm/noise.hpp"

namespace vsm {
namespace {

using json = nlohmann::json;

// Unbiased draw in [0, n) that does not depend on the standard library's
// distribution implementation.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_index(rng, i)]);
}

template <class T>
std::vector<T> choose(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  shuffle(pool, rng);
  pool.resize(std::min(k, pool.size()));
  return pool;
}

bool is_valid_support_size(std::size_t s) { return s == 4 || s == 8 || s == 16 || s == 32; }

}  // namespace

void Episode::validate() const {
  if (classes.empty()) throw ArgumentError("episode " + std::to_string(id) + " has no classes");
  if (num_support_classes > classes.size()) {
    throw ArgumentError("episode " + std::to_string(id) + ": num_support_classes exceeds classes");
  }
  std::set<std::string> unique(classes.begin(), classes.end());
  if (unique.size() != classes.size()) {
    throw ArgumentError("episode " + std::to_string(id) + " repeats a class");
  }
  std::vector<bool> seen(classes.size(), false);
  for (const auto* part : {&support, &query}) {
    for (const auto& lr : *part) {
      if (lr.record == nullptr) throw ArgumentError("episode " + std::to_string(id) + " holds a null record");
      if (lr.class_index >= classes.size()) {
        throw ArgumentError("episode " + std::to_string(id) + ": class index " + std::to_string(lr.class_index) +
                            " out of range for sentence " + lr.record->sentence_id);
      }
      if (classes[lr.class_index] != lr.record->sense_id) {
        throw ArgumentError("episode " + std::to_string(id) + ": sentence " + lr.record->sentence_id +
                            " labelled " + classes[lr.class_index] + " but has sense " + lr.record->sense_id);
      }
    }
  }
  for (const auto& lr : support) seen[lr.class_index] = true;
  for (std::size_t c = 0; c < num_support_classes; ++c) {
    if (!seen[c]) throw ArgumentError("episode " + std::to_string(id) + ": class " + classes[c] + " has no support");
  }
  std::set<std::string> support_ids;
  for (const auto& lr : support) support_ids.insert(lr.record->sentence_id);
  for (const auto& lr : query) {
    if (support_ids.count(lr.record->sentence_id)) {
      throw ArgumentError("episode " + std::to_string(id) + ": sentence " + lr.record->sentence_id +
                          " is in both support and query");
    }
  }
  if (kind == EpisodeKind::meta_train && support.size() != query.size()) {
    throw ArgumentError("meta-train episode " + std::to_string(id) + " has |support| != |query|");
  }
}

void SamplerConfig::validate() const {
  if (!is_valid_support_size(support_size)) {
    throw ConfigError("support_size must be one of 4, 8, 16, 32 (got " + std::to_string(support_size) + ")");
  }
  if (num_episodes < 1) throw ConfigError("num_episodes must be >= 1");
  if (words_per_episode < 1) throw ConfigError("words_per_episode must be >= 1");
  if (min_shots < 1) throw ConfigError("min_shots must be >= 1");
  if (max_resamples < 1) throw ConfigError("max_resamples must be >= 1");
  if (senses_per_word != 0 && senses_per_word * words_per_episode > support_size) {
    throw ConfigError("words_per_episode * senses_per_word exceeds support_size");
  }
}

EpisodeSampler::EpisodeSampler(const Corpus& corpus, SamplerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::map<std::string, std::map<std::string, std::vector<const SentenceRecord*>>> grouped;
  for (const auto& r : corpus.records) grouped[r.word_id][r.sense_id].push_back(&r);
  std::size_t max_senses = 0;
  for (auto& [w, by_sense] : grouped) {
    WordIndex wi;
    wi.word_id = w;
    for (auto& [s, recs] : by_sense) {
      // A sense needs one support and one disjoint query sentence.
      if (recs.size() < 2) continue;
      wi.senses.push_back(s);
      wi.examples.push_back(std::move(recs));
    }
    if (wi.senses.empty()) continue;
    max_senses = std::max(max_senses, wi.senses.size());
    words_.push_back(std::move(wi));
  }
  if (words_.size() < cfg_.words_per_episode) {
    throw SamplerError("corpus has " + std::to_string(words_.size()) + " usable words but episodes need " +
                       std::to_string(cfg_.words_per_episode));
  }
  senses_per_word_ = cfg_.senses_per_word;
  if (senses_per_word_ == 0) {
    senses_per_word_ = std::max<std::size_t>(1, cfg_.support_size / (cfg_.min_shots * cfg_.words_per_episode));
    senses_per_word_ = std::min(senses_per_word_, max_senses);
  }
}

Episode EpisodeSampler::sample(std::uint64_t episode_index) const {
  std::mt19937_64 rng = NoiseKey(cfg_.seed).with(NoiseStream::sampler).with({1, episode_index}).engine();
  std::vector<std::size_t> all_words(words_.size());
  for (std::size_t i = 0; i < all_words.size(); ++i) all_words[i] = i;
  const std::size_t S = cfg_.support_size;

  for (std::size_t attempt = 0; attempt < cfg_.max_resamples; ++attempt) {
    struct Slot {
      const WordIndex* word;
      std::size_t sense;
      std::size_t shots = 0;
    };
    std::vector<Slot> slots;
    for (std::size_t w : choose(all_words, cfg_.words_per_episode, rng)) {
      std::vector<std::size_t> senses(words_[w].senses.size());
      for (std::size_t i = 0; i < senses.size(); ++i) senses[i] = i;
      for (std::size_t s : choose(senses, senses_per_word_, rng)) slots.push_back({&words_[w], s});
    }
    if (slots.size() > S) slots.resize(S);

    // Round-robin shots; each class holds at most half its sentences in
    // support so the query can mirror it.
    std::size_t assigned = 0;
    bool progress = true;
    while (assigned < S && progress) {
      progress = false;
      for (auto& sl : slots) {
        if (assigned == S) break;
        if (2 * (sl.shots + 1) <= sl.word->examples[sl.sense].size()) {
          ++sl.shots;
          ++assigned;
          progress = true;
        }
      }
    }
    if (assigned < S) continue;

    Episode ep;
    ep.id = episode_index;
    ep.kind = EpisodeKind::meta_train;
    for (std::size_t c = 0; c < slots.size(); ++c) {
      const auto& sl = slots[c];
      ep.classes.push_back(sl.word->senses[sl.sense]);
      auto picked = choose(sl.word->examples[sl.sense], 2 * sl.shots, rng);
      for (std::size_t i = 0; i < sl.shots; ++i) {
        ep.support.push_back({picked[i], c});
        ep.query.push_back({picked[sl.shots + i], c});
      }
    }
    ep.num_support_classes = ep.classes.size();
    return ep;
  }
  throw SamplerError("could not fill a |S|=" + std::to_string(S) + " episode (index " +
                     std::to_string(episode_index) + ") after " + std::to_string(cfg_.max_resamples) +
                     " resamples");
}

Episode sample_meta_train_episode(const Corpus& corpus, const SamplerConfig& cfg, std::uint64_t episode_index) {
  return EpisodeSampler(corpus, cfg).sample(episode_index);
}

MetaTestEpisodes build_meta_test_episodes(const Corpus& corpus, std::size_t support_size, std::uint64_t seed) {
  if (!is_valid_support_size(support_size)) {
    throw ConfigError("support_size must be one of 4, 8, 16, 32 (got " + std::to_string(support_size) + ")");
  }
  MetaTestEpisodes out;
  std::uint64_t next_id = 0;
  for (const auto& word : corpus.word_ids()) {
    const auto recs = corpus.records_of(word);
    if (recs.size() < support_size + 1) {
      log_warning("skipping word " + word + ": " + std::to_string(recs.size()) + " sentences, need " +
                  std::to_string(support_size + 1));
      out.skipped_words.push_back(word);
      continue;
    }
    std::mt19937_64 rng = NoiseKey(seed).with(NoiseStream::sampler).with({2, hash_string(word)}).engine();

    std::map<std::string, std::vector<std::size_t>> by_sense;
    for (std::size_t i = 0; i < recs.size(); ++i) by_sense[recs[i]->sense_id].push_back(i);
    std::vector<std::string> senses;
    for (const auto& [s, _] : by_sense) senses.push_back(s);

    // One example per observed sense first (as many senses as |S| allows),
    // then natural sampling from what is left.
    std::vector<bool> in_support(recs.size(), false);
    std::size_t taken = 0;
    for (const auto& s : choose(senses, support_size, rng)) {
      const auto& idx = by_sense[s];
      in_support[idx[draw_index(rng, idx.size())]] = true;
      ++taken;
    }
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (!in_support[i]) rest.push_back(i);
    }
    for (std::size_t i : choose(rest, support_size - taken, rng)) in_support[i] = true;

    Episode ep;
    ep.id = next_id++;
    ep.kind = EpisodeKind::meta_test;
    ep.word_id = word;
    std::set<std::string> support_senses;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (in_support[i]) support_senses.insert(recs[i]->sense_id);
    }
    for (const auto& s : senses) {
      if (support_senses.count(s)) ep.classes.push_back(s);
    }
    ep.num_support_classes = ep.classes.size();
    for (const auto& s : senses) {
      if (!support_senses.count(s)) ep.classes.push_back(s);
    }
    const auto labels = episode_label_map(ep);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      LabeledRecord lr{recs[i], labels.at(recs[i]->sense_id)};
      (in_support[i] ? ep.support : ep.query).push_back(lr);
    }
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

std::map<std::string, std::size_t> episode_label_map(const Episode& episode) {
  std::map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < episode.classes.size(); ++i) {
    if (!m.emplace(episode.classes[i], i).second) {
      throw ArgumentError("episode " + std::to_string(episode.id) + " repeats class " + episode.classes[i]);
    }
  }
  return m;
}

void dump_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& ep : episodes) {
    auto ids = [](const std::vector<LabeledRecord>& part) {
      json a = json::array();
      for (const auto& lr : part) a.push_back({lr.record->sentence_id, lr.class_index});
      return a;
    };
    json j = {{"id", ep.id},
              {"kind", ep.kind == EpisodeKind::meta_train ? "meta-train" : "meta-test"},
              {"word_id", ep.word_id},
              {"classes", ep.classes},
              {"num_support_classes", ep.num_support_classes},
              {"support", ids(ep.support)},
              {"query", ids(ep.query)}};
    out << j.dump() << '\n';
  }
}

std::vector<Episode> load_episodes(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open episode file " + path.string());
  std::unordered_map<std::string, const SentenceRecord*> by_id;
  for (const auto& r : corpus.records) by_id[r.sentence_id] = &r;
  std::vector<Episode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      json j = json::parse(line);
      Episode ep;
      ep.id = j.at("id").get<std::uint64_t>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "meta-train" && kind != "meta-test") throw FormatError(where + ": unknown kind " + kind);
      ep.kind = kind == "meta-train" ? EpisodeKind::meta_train : EpisodeKind::meta_test;
      ep.word_id = j.value("word_id", "");
      ep.classes = j.at("classes").get<std::vector<std::string>>();
      ep.num_support_classes = j.at("num_support_classes").get<std::size_t>();
      for (auto [key, part] : {std::pair{"support", &ep.support}, std::pair{"query", &ep.query}}) {
        for (const auto& e : j.at(key)) {
          const auto sid = e.at(0).get<std::string>();
          auto it = by_id.find(sid);
          if (it == by_id.end()) throw FormatError(where + ": unknown sentence_id " + sid);
          part->push_back({it->second, e.at(1).get<std::size_t>()});
        }
      }
      ep.validate();
      out.push_back(std::move(ep));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const ArgumentError& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vsm
