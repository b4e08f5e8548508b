// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "vsm/errors.hpp"
#include "vsm/noise.hpp"

namespace vsm {

using json = nlohmann::json;

double macro_f1(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& golds,
                std::size_t num_classes) {
  if (predictions.empty()) throw ArgumentError("macro_f1: empty input");
  if (predictions.size() != golds.size()) throw ArgumentError("macro_f1: predictions and golds differ in length");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i] >= num_classes || golds[i] >= num_classes) {
      throw ArgumentError("macro_f1: label " + std::to_string(std::max(predictions[i], golds[i])) + " >= " +
                          std::to_string(num_classes));
    }
    if (predictions[i] == golds[i]) {
      ++tp[golds[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[golds[i]];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (tp[c] + fn[c] == 0) continue;
    ++counted;
    if (tp[c] == 0) continue;
    total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
  }
  return total / static_cast<double>(counted);
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double s = 0.0;
    for (double x : xs) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(xs.size() - 1));
  }
  return r;
}

void EvalReport::finalize() {
  std::vector<double> means;
  for (SeedReport& s : seeds) {
    std::vector<double> scores;
    for (const EpisodeScore& e : s.episodes) scores.push_back(e.macro_f1);
    s.mean = mean_std(scores).mean;
    means.push_back(s.mean);
  }
  const MeanStd ms = mean_std(means);
  mean = ms.mean;
  std = ms.std;
}

void EvalReport::validate() const {
  for (const SeedReport& s : seeds) {
    if (s.episodes.size() != num_episodes()) throw FormatError("eval report: seeds cover different episode counts");
    for (const EpisodeScore& e : s.episodes) {
      if (!(e.macro_f1 >= 0.0 && e.macro_f1 <= 1.0)) {
        throw FormatError("eval report: episode " + std::to_string(e.id) + " score outside [0, 1]");
      }
    }
  }
}

void write_eval_report(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  json seeds = json::array(), means = json::array();
  for (const SeedReport& s : r.seeds) {
    seeds.push_back(s.seed);
    means.push_back(s.mean);
  }
  out << json{{"type", "eval_report"},
              {"model", r.model},
              {"support_size", r.support_size},
              {"episodes", r.num_episodes()},
              {"seeds", seeds},
              {"seed_means", means},
              {"mean", r.mean},
              {"std", r.std}}
             .dump()
      << "\n";
  for (const SeedReport& s : r.seeds) {
    for (const EpisodeScore& e : s.episodes) {
      out << json{{"type", "episode"},
                  {"seed", s.seed},
                  {"id", e.id},
                  {"word_id", e.word_id},
                  {"num_senses", e.num_senses},
                  {"macro_f1", e.macro_f1},
                  {"predictions", e.predictions},
                  {"golds", e.golds}}
                 .dump()
          << "\n";
    }
  }
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  EvalReport r;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::uint64_t, std::size_t> seed_index;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (lineno == 1) {
        if (type != "eval_report") throw FormatError("first line must be the eval_report summary");
        r.model = j.at("model").get<std::string>();
        r.support_size = j.at("support_size").get<std::size_t>();
        const auto seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (std::uint64_t s : seeds) {
          seed_index[s] = r.seeds.size();
          r.seeds.push_back(SeedReport{s, {}, 0.0});
        }
        continue;
      }
      if (type != "episode") throw FormatError("unexpected line type '" + type + "'");
      const auto it = seed_index.find(j.at("seed").get<std::uint64_t>());
      if (it == seed_index.end()) throw FormatError("episode line for an undeclared seed");
      EpisodeScore e;
      e.id = j.at("id").get<std::uint64_t>();
      e.word_id = j.at("word_id").get<std::string>();
      e.num_senses = j.at("num_senses").get<std::size_t>();
      e.macro_f1 = j.at("macro_f1").get<double>();
      e.predictions = j.at("predictions").get<std::vector<std::size_t>>();
      e.golds = j.at("golds").get<std::vector<std::size_t>>();
      r.seeds[it->second].episodes.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (lineno == 0) throw FormatError(path.string() + ": empty report");
  r.finalize();
  r.validate();
  return r;
}

std::vector<SenseCountBucket> breakdown_by_sense_count(const std::vector<EvalReport>& reports) {
  std::map<std::size_t, std::vector<double>> buckets;
  for (const EvalReport& r : reports) {
    for (const SeedReport& s : r.seeds) {
      for (const EpisodeScore& e : s.episodes) buckets[e.num_senses].push_back(e.macro_f1);
    }
  }
  std::vector<SenseCountBucket> out;
  for (const auto& [k, v] : buckets) out.push_back({k, v.size(), mean_std(v).mean});
  return out;
}

ChanceBand permutation_chance_band(const SeedReport& seed, std::size_t permutations, std::uint64_t rng_seed,
                                   double level) {
  if (seed.episodes.empty() || permutations == 0) throw ArgumentError("permutation_chance_band: nothing to permute");
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("permutation_chance_band: level must be in (0, 1)");
  std::vector<double> null_means;
  null_means.reserve(permutations);
  for (std::size_t p = 0; p < permutations; ++p) {
    const NoiseKey key = NoiseKey(rng_seed).with(NoiseStream::permutation).with(p);
    double total = 0.0;
    for (const EpisodeScore& e : seed.episodes) {
      std::vector<std::size_t> golds = e.golds;
      const NoiseKey ek = key.with(e.id);
      for (std::size_t i = golds.size(); i > 1; --i) std::swap(golds[i - 1], golds[ek.bits(i) % i]);
      total += macro_f1(e.predictions, golds, e.num_senses);
    }
    null_means.push_back(total / static_cast<double>(seed.episodes.size()));
  }
  std::sort(null_means.begin(), null_means.end());
  const double tail = (1.0 - level) / 2.0;
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(null_means.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, null_means.size() - 1);
    return null_means[lo] + (pos - static_cast<double>(lo)) * (null_means[hi] - null_means[lo]);
  };
  ChanceBand band;
  band.lower = at(tail);
  band.upper = at(1.0 - tail);
  double observed = 0.0;
  for (const EpisodeScore& e : seed.episodes) observed += e.macro_f1;
  band.observed = observed / static_cast<double>(seed.episodes.size());
  return band;
}

}  // namespace vsm
