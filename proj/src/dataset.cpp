// SPDX-License-Identifier: Apache-2.0
#include "cpeal/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "cpeal/errors.hpp"
#include "cpeal/rng.hpp"

namespace cpeal {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'E', 'B'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kFlagLabels = 0x01;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

// Bounds-checked little-endian reader over an in-memory buffer.
struct Cursor {
  const unsigned char* data;
  std::size_t size;
  std::size_t off = 0;

  void need(std::size_t n) const {
    if (off + n > size) throw IoError("CPEB payload truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data[off++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data[off]) |
                      static_cast<std::uint16_t>(data[off + 1]) << 8;
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(data + off), len);
    off += len;
    return s;
  }
};

}  // namespace

std::vector<Index> EmbeddingDataset::train_indices() const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (is_train(i)) out.push_back(i);
  return out;
}

std::vector<Index> EmbeddingDataset::test_indices() const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (!is_train(i)) out.push_back(i);
  return out;
}

void validate(const EmbeddingDataset& ds) {
  const Index n = ds.size();
  if (ds.num_classes <= 0) throw ValidationError("num_classes must be positive");
  if (ds.dim() <= 0) throw ValidationError("embedding dimension must be positive");
  if (n < ds.num_classes)
    throw ValidationError("dataset needs at least one row per class");
  if (static_cast<Index>(ds.class_names.size()) != ds.num_classes)
    throw ValidationError("class_names must have exactly num_classes entries");
  if (static_cast<Index>(ds.labels.size()) != n ||
      static_cast<Index>(ds.splits.size()) != n)
    throw ValidationError("labels/splits length must match feature rows");
  if (!ds.features.allFinite())
    throw ValidationError("features contain NaN or Inf");
  bool has_test = false;
  for (Index i = 0; i < n; ++i) {
    const auto label = ds.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= ds.num_classes)
      throw ValidationError("label out of range at row " + std::to_string(i));
    const auto tag = ds.splits[static_cast<std::size_t>(i)];
    if (tag > 1) throw ValidationError("split tag must be 0 (train) or 1 (test)");
    has_test |= tag == static_cast<std::uint8_t>(Split::kTest);
  }
  if (!has_test) throw ValidationError("dataset has no test rows");
}

Matrix gather_features(const EmbeddingDataset& ds,
                       const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), ds.dim());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Index>(i)) = ds.features.row(rows[i]).cast<Real>();
  return out;
}

std::vector<int> gather_labels(const EmbeddingDataset& ds,
                               const std::vector<Index>& rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out[i] = ds.labels[static_cast<std::size_t>(rows[i])];
  return out;
}

void save_dataset(const EmbeddingDataset& ds,
                  const std::filesystem::path& path) {
  validate(ds);  // nothing is written for an invalid dataset

  std::string buf;
  buf.reserve(64 + static_cast<std::size_t>(ds.size()) *
                       (static_cast<std::size_t>(ds.dim()) * 4 + 5));
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(ds.size()));
  put_u32(buf, static_cast<std::uint32_t>(ds.dim()));
  put_u32(buf, static_cast<std::uint32_t>(ds.num_classes));
  buf.push_back(static_cast<char>(kFlagLabels));
  put_string(buf, ds.name);
  for (const auto& cn : ds.class_names) put_string(buf, cn);
  for (Index r = 0; r < ds.size(); ++r)
    for (Index c = 0; c < ds.dim(); ++c) put_f32(buf, ds.features(r, c));
  for (auto label : ds.labels) put_i32(buf, label);
  for (auto tag : ds.splits) buf.push_back(static_cast<char>(tag));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write: " + path.string());
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()),
             bytes.size()};

  cur.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("bad magic, not a CPEB file");
  cur.off = 4;
  const auto version = cur.u16();
  if (version != kVersion)
    throw FormatError("unsupported CPEB version " + std::to_string(version));

  EmbeddingDataset ds;
  const auto n = cur.u32();
  const auto dim = cur.u32();
  const auto num_classes = cur.u32();
  const auto flags = cur.u8();
  if ((flags & kFlagLabels) == 0)
    throw ValidationError("CPEB file carries no labels; the oracle needs them");
  ds.name = cur.str();
  ds.num_classes = static_cast<Index>(num_classes);
  ds.class_names.reserve(num_classes);
  for (std::uint32_t k = 0; k < num_classes; ++k) ds.class_names.push_back(cur.str());
  ds.features.resize(static_cast<Index>(n), static_cast<Index>(dim));
  for (std::uint32_t r = 0; r < n; ++r)
    for (std::uint32_t c = 0; c < dim; ++c)
      ds.features(static_cast<Index>(r), static_cast<Index>(c)) = cur.f32();
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) ds.labels[i] = cur.i32();
  ds.splits.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) ds.splits[i] = cur.u8();
  if (cur.off != cur.size)
    throw IoError("trailing bytes after CPEB payload");

  validate(ds);
  return ds;
}

void validate(const SynthSpec& spec) {
  if (spec.num_classes <= 0 || spec.dim <= 0 || spec.per_class <= 0)
    throw ValidationError("synthetic spec sizes must be positive");
  if (!(spec.class_separation > 0))
    throw ValidationError("class_separation must be positive");
  if (!(spec.within_class_scale > 0))
    throw ValidationError("within_class_scale must be positive");
  if (!(spec.test_fraction > 0 && spec.test_fraction < 1))
    throw ValidationError("test_fraction must lie in (0, 1)");
  const Real expected_test = static_cast<Real>(spec.per_class) *
                             static_cast<Real>(spec.num_classes) *
                             spec.test_fraction;
  if (expected_test < 1)
    throw ValidationError("test_fraction leaves no test rows");
}

namespace {

// Class means pairwise at distance >= sep. K <= E uses scaled axes, which
// puts every pair at exactly sep. Otherwise K random unit directions are
// drawn and the whole set is rescaled so the closest pair lands on sep;
// near-duplicate direction sets are redrawn.
Matrix class_means(Index num_classes, Index dim, Real sep, SplitMix64& rng) {
  Matrix means = Matrix::Zero(num_classes, dim);
  if (num_classes <= dim) {
    const Real radius = sep / std::sqrt(Real(2));
    for (Index k = 0; k < num_classes; ++k) means(k, k) = radius;
    return means;
  }
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix dirs = gaussian_matrix(num_classes, dim, 1.0, rng);
    bool degenerate = false;
    for (Index k = 0; k < num_classes; ++k) {
      const Real norm = dirs.row(k).norm();
      if (norm < 1e-9) {
        degenerate = true;
        break;
      }
      dirs.row(k) /= norm;
    }
    if (degenerate) continue;
    Real min_dist = std::numeric_limits<Real>::infinity();
    for (Index a = 0; a < num_classes; ++a)
      for (Index b = a + 1; b < num_classes; ++b)
        min_dist = std::min(min_dist, (dirs.row(a) - dirs.row(b)).norm());
    if (min_dist < 1e-3) continue;
    return dirs * (sep / min_dist);
  }
  throw ValidationError("could not place class means at the requested separation");
}

}  // namespace

EmbeddingDataset gen_synthetic(const SynthSpec& spec) {
  validate(spec);
  SplitMix64 rng(spec.seed);

  const Index total = spec.num_classes * spec.per_class;
  Index total_test = static_cast<Index>(
      std::llround(static_cast<Real>(total) * spec.test_fraction));
  total_test = std::clamp<Index>(total_test, 1, total - 1);
  const Index base_test = total_test / spec.num_classes;
  const Index extra_test = total_test % spec.num_classes;

  const Matrix means =
      class_means(spec.num_classes, spec.dim, spec.class_separation, rng);

  EmbeddingDataset ds;
  ds.name = "synth-k" + std::to_string(spec.num_classes) + "-e" +
            std::to_string(spec.dim) + "-s" + std::to_string(spec.seed);
  ds.num_classes = spec.num_classes;
  for (Index k = 0; k < spec.num_classes; ++k)
    ds.class_names.push_back("class_" + std::to_string(k));
  ds.features.resize(total, spec.dim);
  ds.labels.resize(static_cast<std::size_t>(total));
  ds.splits.resize(static_cast<std::size_t>(total));

  Index row = 0;
  for (Index k = 0; k < spec.num_classes; ++k) {
    const Index test_here = base_test + (k < extra_test ? 1 : 0);
    for (Index j = 0; j < spec.per_class; ++j, ++row) {
      for (Index c = 0; c < spec.dim; ++c)
        ds.features(row, c) = static_cast<float>(
            means(k, c) + spec.within_class_scale * rng.normal());
      ds.labels[static_cast<std::size_t>(row)] = static_cast<std::int32_t>(k);
      const bool is_test = j >= spec.per_class - test_here;
      ds.splits[static_cast<std::size_t>(row)] =
          static_cast<std::uint8_t>(is_test ? Split::kTest : Split::kTrain);
    }
  }
  validate(ds);
  return ds;
}

PoolState make_pool(const EmbeddingDataset& ds) {
  PoolState pool;
  pool.unlabeled_idx = ds.train_indices();
  return pool;
}

PoolState reveal_labels(const PoolState& pool,
                        const std::vector<Index>& indices) {
  std::set<Index> wanted;
  for (Index idx : indices)
    if (!wanted.insert(idx).second)
      throw SelectionError("duplicate index in reveal request: " +
                           std::to_string(idx));
  for (Index idx : wanted)
    if (!std::binary_search(pool.unlabeled_idx.begin(),
                            pool.unlabeled_idx.end(), idx))
      throw SelectionError("index not in the unlabeled pool: " +
                           std::to_string(idx));

  PoolState next;
  next.cycle = pool.cycle;
  next.labeled_idx = pool.labeled_idx;
  next.labeled_idx.insert(next.labeled_idx.end(), wanted.begin(), wanted.end());
  std::sort(next.labeled_idx.begin(), next.labeled_idx.end());
  next.unlabeled_idx.reserve(pool.unlabeled_idx.size() - wanted.size());
  for (Index idx : pool.unlabeled_idx)
    if (wanted.find(idx) == wanted.end()) next.unlabeled_idx.push_back(idx);
  return next;
}

}  // namespace cpeal
