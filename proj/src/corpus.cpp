// Copyright 2026 The vsmwsd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vsm/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vsm/errors.hpp"
#include "vsm/noise.hpp"

namespace vsm {

using json = nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::all: return "all";
    case Split::meta_train: return "meta-train";
    case Split::meta_validation: return "meta-validation";
    case Split::meta_test: return "meta-test";
  }
  return "all";
}

Split parse_split(const std::string& s) {
  if (s == "all") return Split::all;
  if (s == "meta-train") return Split::meta_train;
  if (s == "meta-validation") return Split::meta_validation;
  if (s == "meta-test") return Split::meta_test;
  throw FormatError("unknown split '" + s + "'");
}

SenseInventory inventory_from_records(const std::vector<SentenceRecord>& records) {
  std::map<std::string, std::set<std::string>> sets;
  for (const auto& r : records) sets[r.word_id].insert(r.sense_id);
  SenseInventory inv;
  for (auto& [w, s] : sets) inv[w] = std::vector<std::string>(s.begin(), s.end());
  return inv;
}

void Corpus::validate() const {
  std::map<std::string, std::string> sense_word;
  for (const auto& [word, senses] : sense_inventory) {
    for (const auto& s : senses) {
      auto [it, fresh] = sense_word.emplace(s, word);
      if (!fresh && it->second != word) {
        throw FormatError("sense '" + s + "' listed under two words");
      }
    }
  }
  std::set<std::string> ids;
  for (const auto& r : records) {
    const std::string where = "record '" + r.sentence_id + "'";
    if (!ids.insert(r.sentence_id).second) throw FormatError("duplicate sentence_id in " + where);
    if (r.tokens.empty()) throw FormatError(where + ": no tokens");
    if (r.embeddings.rank() != 2 || r.embeddings.rows() != r.tokens.size()) {
      throw DimensionError(where + ": embedding rows do not match token count");
    }
    if (r.embeddings.cols() != dim) {
      throw DimensionError(where + ": embedding dim " + std::to_string(r.embeddings.cols()) +
                           " differs from corpus dim " + std::to_string(dim));
    }
    if (r.target_index >= r.tokens.size()) throw FormatError(where + ": target_index out of range");
    auto it = sense_word.find(r.sense_id);
    if (it == sense_word.end()) throw FormatError(where + ": dangling sense_id '" + r.sense_id + "'");
    if (it->second != r.word_id) {
      throw FormatError(where + ": sense '" + r.sense_id + "' belongs to word '" + it->second + "'");
    }
    if (!r.embeddings.all_finite()) throw FormatError(where + ": non-finite embedding");
  }
}

std::vector<std::string> Corpus::word_ids() const {
  std::vector<std::string> out;
  out.reserve(sense_inventory.size());
  for (const auto& [w, _] : sense_inventory) out.push_back(w);
  return out;
}

std::size_t Corpus::num_senses() const {
  std::size_t n = 0;
  for (const auto& [_, s] : sense_inventory) n += s.size();
  return n;
}

std::vector<const SentenceRecord*> Corpus::records_of(const std::string& word_id) const {
  std::vector<const SentenceRecord*> out;
  for (const auto& r : records) {
    if (r.word_id == word_id) out.push_back(&r);
  }
  return out;
}

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

void put_u64(std::vector<unsigned char>& out, std::size_t at, std::uint64_t v) {
  v = to_little(v);
  std::memcpy(out.data() + at, &v, 8);
}

std::uint64_t get_u64(const std::vector<unsigned char>& in, std::size_t at) {
  std::uint64_t v;
  std::memcpy(&v, in.data() + at, 8);
  return to_little(v);
}

std::vector<unsigned char> read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + p.string() + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& meta_path,
                  const std::filesystem::path& blob_path) {
  corpus.validate();
  std::size_t payload = 0;
  for (const auto& r : corpus.records) payload += r.embeddings.size() * 8;
  std::vector<unsigned char> blob(kBlobHeaderBytes + payload);
  std::memcpy(blob.data(), kBlobMagic, 8);
  put_u64(blob, 8, corpus.dim);
  put_u64(blob, 16, corpus.records.size());

  std::ostringstream meta;
  json header = {{"format", "vsm-corpus"},
                 {"version", 1},
                 {"split", to_string(corpus.split)},
                 {"dim", corpus.dim},
                 {"records", corpus.records.size()},
                 {"inventory", corpus.sense_inventory}};
  meta << header.dump() << '\n';

  std::size_t offset = kBlobHeaderBytes;
  for (const auto& r : corpus.records) {
    json rec = {{"sentence_id", r.sentence_id}, {"word_id", r.word_id},
                {"sense_id", r.sense_id},       {"target_index", r.target_index},
                {"tokens", r.tokens},           {"blob_offset", offset},
                {"length", r.length()},         {"dim", r.dim()}};
    meta << rec.dump() << '\n';
    for (double v : r.embeddings.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(blob, offset, bits);
      offset += 8;
    }
  }
  put_u64(blob, 24, fnv1a64(blob.data() + kBlobHeaderBytes, payload));

  std::ofstream mo(meta_path, std::ios::binary | std::ios::trunc);
  std::ofstream bo(blob_path, std::ios::binary | std::ios::trunc);
  if (!mo || !bo) throw FormatError("cannot open corpus output files for writing");
  const std::string m = meta.str();
  mo.write(m.data(), static_cast<std::streamsize>(m.size()));
  bo.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!mo || !bo) throw FormatError("I/O failure while writing corpus");
}

Corpus load_corpus(const std::filesystem::path& meta_path, const std::filesystem::path& blob_path) {
  if (!std::filesystem::exists(meta_path)) throw FormatError("missing metadata file '" + meta_path.string() + "'");
  if (!std::filesystem::exists(blob_path)) throw FormatError("missing blob file '" + blob_path.string() + "'");
  const std::vector<unsigned char> blob = read_all(blob_path);
  if (blob.size() < kBlobHeaderBytes || std::memcmp(blob.data(), kBlobMagic, 8) != 0) {
    throw FormatError("blob '" + blob_path.string() + "' has no VSMEMB1 header");
  }
  const std::uint64_t blob_dim = get_u64(blob, 8);
  const std::uint64_t blob_count = get_u64(blob, 16);
  const std::uint64_t checksum = get_u64(blob, 24);
  if (fnv1a64(blob.data() + kBlobHeaderBytes, blob.size() - kBlobHeaderBytes) != checksum) {
    throw FormatError("blob checksum mismatch");
  }

  std::ifstream in(meta_path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty metadata file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("metadata header: ") + e.what());
  }
  if (header.value("format", "") != "vsm-corpus" || header.value("version", 0) != 1) {
    throw FormatError("metadata header is not a version-1 vsm-corpus header");
  }
  Corpus corpus;
  corpus.split = parse_split(header.at("split").get<std::string>());
  corpus.dim = header.at("dim").get<std::size_t>();
  corpus.sense_inventory = header.at("inventory").get<SenseInventory>();
  const std::size_t expected = header.at("records").get<std::size_t>();
  if (expected != blob_count) throw FormatError("metadata record count differs from blob header");

  std::size_t payload = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(std::string("metadata record: ") + e.what());
    }
    SentenceRecord r;
    r.sentence_id = rec.at("sentence_id").get<std::string>();
    const std::string where = "record '" + r.sentence_id + "'";
    r.word_id = rec.at("word_id").get<std::string>();
    r.sense_id = rec.at("sense_id").get<std::string>();
    r.target_index = rec.at("target_index").get<std::size_t>();
    r.tokens = rec.at("tokens").get<std::vector<std::string>>();
    const std::size_t offset = rec.at("blob_offset").get<std::size_t>();
    const std::size_t len = rec.at("length").get<std::size_t>();
    const std::size_t dim = rec.at("dim").get<std::size_t>();
    if (dim != blob_dim) {
      throw DimensionError(where + ": embedding dim " + std::to_string(dim) +
                           " differs from blob header dim " + std::to_string(blob_dim));
    }
    if (len != r.tokens.size()) throw FormatError(where + ": length differs from token count");
    const std::size_t bytes = len * dim * 8;
    if (offset < kBlobHeaderBytes || offset + bytes > blob.size()) {
      throw FormatError(where + ": blob range out of bounds");
    }
    std::vector<double> data(len * dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint64_t bits = get_u64(blob, offset + 8 * i);
      std::memcpy(&data[i], &bits, 8);
    }
    r.embeddings = Tensor::matrix(len, dim, std::move(data));
    payload += bytes;
    corpus.records.push_back(std::move(r));
  }
  if (corpus.records.size() != expected) throw FormatError("metadata record count mismatch");
  // Checked after the records so a mismatch is reported against the first
  // record it affects.
  if (corpus.dim != blob_dim) throw DimensionError("metadata dim differs from blob header dim");
  if (payload + kBlobHeaderBytes != blob.size()) {
    throw FormatError("blob payload size differs from the sum of record sizes");
  }
  corpus.validate();
  return corpus;
}

void SynthSpec::validate() const {
  if (num_words < 1 || senses_min < 1 || examples_min < 1 || dim < 1 || length_min < 1) {
    throw ConfigError("SynthSpec: counts must be >= 1");
  }
  if (senses_max < senses_min || examples_max < examples_min || length_max < length_min) {
    throw ConfigError("SynthSpec: max below min");
  }
  if (!(separation >= 0.0) || !(sigma >= 0.0) || !(background_sigma >= 0.0)) {
    throw ConfigError("SynthSpec: separation and spreads must be >= 0");
  }
}

namespace {

// Centre directions are drawn with per-coordinate scale chosen so that two
// independent draws sit ~1.5 apart on average; separation then rescales.
Tensor draw_direction(const NoiseKey& key, std::size_t dim) {
  const double kappa = 1.5 / std::sqrt(2.0 * static_cast<double>(dim));
  Tensor t = key.normals({dim});
  for (double& v : t.span()) v *= kappa;
  return t;
}

double distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

Corpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  const NoiseKey root = NoiseKey(spec.seed).with(NoiseStream::synth);
  std::mt19937_64 counts = root.with(1).engine();

  // Unit-scale directions; the final centre is separation * direction, so
  // the pairwise-distance test on directions is ">= 1".
  std::vector<Tensor> pool;
  for (std::size_t a = 0; a < spec.archetypes; ++a) {
    bool placed = false;
    for (std::size_t t = 0; t < spec.max_retries && !placed; ++t) {
      Tensor cand = draw_direction(root.with({2, a, t}), spec.dim);
      placed = std::all_of(pool.begin(), pool.end(), [&](const Tensor& p) { return distance(p, cand) >= 1.0; });
      if (placed) pool.push_back(std::move(cand));
    }
    if (!placed) throw GenerationError("could not place archetype " + std::to_string(a));
  }

  Corpus corpus;
  corpus.dim = spec.dim;
  std::uniform_int_distribution<std::size_t> n_senses(spec.senses_min, spec.senses_max);
  std::uniform_int_distribution<std::size_t> n_examples(spec.examples_min, spec.examples_max);
  std::uniform_int_distribution<std::size_t> n_len(spec.length_min, spec.length_max);
  std::uniform_int_distribution<int> ctx_vocab(0, 499);

  const int word_digits = static_cast<int>(std::to_string(spec.num_words).size());
  for (std::size_t w = 0; w < spec.num_words; ++w) {
    std::string wid = std::to_string(w);
    wid = "w" + std::string(word_digits - std::min<int>(word_digits, static_cast<int>(wid.size())), '0') + wid;
    const NoiseKey wkey = root.with({3, w});
    const std::size_t k = n_senses(counts);
    if (spec.archetypes > 0 && k > spec.archetypes) {
      throw GenerationError("word " + wid + " needs more senses than there are archetypes");
    }

    std::vector<Tensor> dirs;
    std::vector<std::size_t> used;
    std::mt19937_64 pick = wkey.with(9).engine();
    for (std::size_t s = 0; s < k; ++s) {
      bool placed = false;
      for (std::size_t t = 0; t < spec.max_retries && !placed; ++t) {
        Tensor cand;
        std::size_t arch = 0;
        if (spec.archetypes > 0) {
          arch = std::uniform_int_distribution<std::size_t>(0, spec.archetypes - 1)(pick);
          if (std::find(used.begin(), used.end(), arch) != used.end()) continue;
          cand = pool[arch];
          Tensor jit = draw_direction(wkey.with({4, s, t}), spec.dim);
          for (std::size_t i = 0; i < cand.size(); ++i) cand[i] += spec.archetype_jitter * jit[i];
        } else {
          cand = draw_direction(wkey.with({4, s, t}), spec.dim);
        }
        placed = std::all_of(dirs.begin(), dirs.end(), [&](const Tensor& p) { return distance(p, cand) >= 1.0; });
        if (placed) {
          dirs.push_back(std::move(cand));
          used.push_back(arch);
        }
      }
      if (!placed) throw GenerationError("could not place sense " + std::to_string(s) + " of " + wid);
    }

    std::vector<std::string> senses;
    Tensor word_vec = draw_direction(wkey.with(5), spec.dim);
    for (double& v : word_vec.span()) v *= spec.separation;
    for (std::size_t s = 0; s < k; ++s) {
      const std::string sid = wid + ".s" + std::to_string(s);
      senses.push_back(sid);
      Tensor centre = dirs[s];
      for (double& v : centre.span()) v *= spec.separation;
      const std::size_t n = n_examples(counts);
      for (std::size_t e = 0; e < n; ++e) {
        const NoiseKey ekey = wkey.with({6, s, e});
        std::mt19937_64 lr = ekey.engine();
        const std::size_t len = n_len(lr);
        const std::size_t target = std::uniform_int_distribution<std::size_t>(0, len - 1)(lr);
        SentenceRecord r;
        r.sentence_id = sid + ".e" + std::to_string(e);
        r.word_id = wid;
        r.sense_id = sid;
        r.target_index = target;
        Tensor emb(Shape{len, spec.dim});
        Tensor noise = ekey.with(7).normals({len, spec.dim});
        for (std::size_t t = 0; t < len; ++t) {
          if (t == target) {
            r.tokens.push_back(wid);
            for (std::size_t i = 0; i < spec.dim; ++i) {
              emb.at(t, i) = spec.static_targets ? word_vec[i] : centre[i] + spec.sigma * noise.at(t, i);
            }
          } else {
            r.tokens.push_back("ctx" + std::to_string(ctx_vocab(lr)));
            for (std::size_t i = 0; i < spec.dim; ++i) {
              emb.at(t, i) = spec.background_sigma * noise.at(t, i) + spec.context_signal * centre[i];
            }
          }
        }
        r.embeddings = std::move(emb);
        corpus.records.push_back(std::move(r));
      }
    }
    corpus.sense_inventory[wid] = std::move(senses);
  }
  corpus.validate();
  return corpus;
}

CorpusSplits split_corpus(const Corpus& corpus, const SplitFractions& f, std::uint64_t seed) {
  if (f.train < 0 || f.validation < 0 || f.test < 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  std::vector<std::string> words = corpus.word_ids();  // sorted: inventory is a std::map
  std::mt19937_64 rng = NoiseKey(seed).with(NoiseStream::sampler).with(17).engine();
  std::shuffle(words.begin(), words.end(), rng);
  const std::size_t n = words.size();
  const auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(f.validation * static_cast<double>(n)));
  if (n_train + n_val > n) throw ConfigError("split fractions round to more words than exist");
  const std::size_t n_test = n - n_train - n_val;
  if (n_train == 0 || n_val == 0 || n_test == 0) {
    throw ConfigError("split leaves a part with zero words (" + std::to_string(n_train) + "/" +
                      std::to_string(n_val) + "/" + std::to_string(n_test) + ")");
  }
  std::map<std::string, int> part;
  for (std::size_t i = 0; i < n; ++i) part[words[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  CorpusSplits out;
  Corpus* parts[3] = {&out.meta_train, &out.meta_validation, &out.meta_test};
  const Split kinds[3] = {Split::meta_train, Split::meta_validation, Split::meta_test};
  for (int i = 0; i < 3; ++i) {
    parts[i]->split = kinds[i];
    parts[i]->dim = corpus.dim;
  }
  for (const auto& [w, senses] : corpus.sense_inventory) parts[part.at(w)]->sense_inventory[w] = senses;
  for (const auto& r : corpus.records) parts[part.at(r.word_id)]->records.push_back(r);
  return out;
}

}  // namespace vsm
