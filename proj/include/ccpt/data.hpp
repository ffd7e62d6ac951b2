#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccpt/model.hpp"
#include "ccpt/prng.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

struct DataParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T = float>
struct LabeledDatasetT {
  TensorT<T> features;  // [m x d]
  std::vector<int> labels;
  int class_count = 0;
  std::vector<Split> splits;

  int rows() const { return features.rows(); }

  std::vector<int> indices_of(Split s) const {
    std::vector<int> idx;
    for (int i = 0; i < rows(); ++i)
      if (splits[std::size_t(i)] == s) idx.push_back(i);
    return idx;
  }
};

using LabeledDataset = LabeledDatasetT<float>;

// 70/15/15 split by a seeded shuffle; depends only on (m, rng state)
inline std::vector<Split> assign_splits(int m, SplitMix64& rng) {
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  for (int i = m - 1; i > 0; --i)
    std::swap(order[std::size_t(i)], order[rng.below(std::uint64_t(i) + 1)]);
  const int n_train = int(0.70 * m);
  const int n_val = int(0.15 * m);
  std::vector<Split> splits(std::size_t(m), Split::Train);
  for (int r = 0; r < m; ++r) {
    const int i = order[std::size_t(r)];
    splits[std::size_t(i)] = r < n_train          ? Split::Train
                             : r < n_train + n_val ? Split::Val
                                                   : Split::Test;
  }
  return splits;
}

// Two interleaved 2-D spirals, exactly `points_per_class` points each,
// classes at opposite phase. Deterministic in (params, seed).
template <class T = float>
LabeledDatasetT<T> two_spirals(int points_per_class, double noise_std, std::uint64_t seed) {
  if (points_per_class < 1) throw std::invalid_argument("two_spirals: need points");
  if (noise_std < 0.0) throw std::invalid_argument("two_spirals: negative noise");
  SplitMix64 rng(seed);
  const int m = 2 * points_per_class;
  LabeledDatasetT<T> d;
  d.features = TensorT<T>({m, 2});
  d.labels.resize(std::size_t(m));
  d.class_count = 2;
  constexpr double kTurns = 1.5;
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < points_per_class; ++j) {
      const int row = c * points_per_class + j;
      const double t = (j + 0.5) / points_per_class;
      const double angle = kTurns * 2.0 * std::numbers::pi * t + c * std::numbers::pi;
      const double radius = 0.15 + 0.85 * t;
      d.features.at(row, 0) = T(radius * std::cos(angle) + noise_std * rng.normal());
      d.features.at(row, 1) = T(radius * std::sin(angle) + noise_std * rng.normal());
      d.labels[std::size_t(row)] = c;
    }
  d.splits = assign_splits(m, rng);
  return d;
}

// Stochastic-block-model graph: within-block edges with probability p_in,
// cross-block with p_out. Labels are block ids; features are a one-hot
// block indicator (index block % feature_dim) plus 0.1-sigma noise.
template <class T = float>
GraphDataT<T> sbm_graph(int nodes_per_block, int blocks, double p_in, double p_out,
                        int feature_dim, std::uint64_t seed) {
  if (nodes_per_block < 1 || blocks < 1 || feature_dim < 1)
    throw std::invalid_argument("sbm_graph: bad sizes");
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
    throw std::invalid_argument("sbm_graph: require 0 <= p_out <= p_in <= 1");
  SplitMix64 rng(seed);
  const int n = nodes_per_block * blocks;
  GraphDataT<T> g;
  g.node_count = n;
  g.class_count = blocks;
  g.labels.resize(std::size_t(n));
  for (int i = 0; i < n; ++i) g.labels[std::size_t(i)] = i / nodes_per_block;

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double p = g.labels[std::size_t(i)] == g.labels[std::size_t(j)] ? p_in : p_out;
      if (rng.uniform() < p) g.edges.emplace_back(i, j);
    }

  constexpr double kFeatureNoise = 0.1;
  g.features = TensorT<T>({n, feature_dim});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < feature_dim; ++j) {
      const double mean = (g.labels[std::size_t(i)] % feature_dim == j) ? 1.0 : 0.0;
      g.features.at(i, j) = T(mean + kFeatureNoise * rng.normal());
    }

  g.norm_adj = normalize_adjacency<T>(n, g.edges);
  g.splits = assign_splits(n, rng);
  return g;
}

// ---------------------------------------------------------------------------
// IDX ingestion (big-endian magic 0x00000803 for images, 0x00000801 for
// labels, u8 payload; pixels scaled to [0,1])

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataParseError("cannot open file: " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& path) {
  if (off + 4 > b.size())
    throw DataParseError(path + ": truncated at byte offset " + std::to_string(b.size()) +
                         " (need 4 bytes at offset " + std::to_string(off) + ")");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct IdxPayload {
  std::vector<std::uint32_t> dims;
  std::size_t data_offset = 0;
  std::vector<unsigned char> bytes;
};

inline IdxPayload parse_idx(const std::string& path, std::uint32_t expected_magic,
                            std::size_t expected_rank) {
  IdxPayload p;
  p.bytes = read_bytes(path);
  const std::uint32_t magic = read_be32(p.bytes, 0, path);
  if (magic != expected_magic) {
    std::ostringstream os;
    os << path << ": bad magic 0x" << std::hex << magic << " at byte offset 0";
    throw DataParseError(os.str());
  }
  std::size_t off = 4;
  std::size_t count = 1;
  for (std::size_t r = 0; r < expected_rank; ++r) {
    const std::uint32_t d = read_be32(p.bytes, off, path);
    p.dims.push_back(d);
    count *= d;
    off += 4;
  }
  if (off + count > p.bytes.size())
    throw DataParseError(path + ": truncated payload, expected " + std::to_string(count) +
                         " bytes at byte offset " + std::to_string(off) + ", have " +
                         std::to_string(p.bytes.size() - off));
  p.data_offset = off;
  return p;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Loads an IDX image file (and optionally the matching label file) into a
// dataset; with no label file every label is 0. All rows are tagged Train;
// re-split with assign_splits if needed.
template <class T = float>
LabeledDatasetT<T> load_idx(const std::string& images_path, const std::string& labels_path = "") {
  const auto img = detail::parse_idx(images_path, kIdxImagesMagic, 3);
  const int m = int(img.dims[0]);
  const int d = int(img.dims[1] * img.dims[2]);
  if (m <= 0 || d <= 0) throw DataParseError(images_path + ": empty image set");

  LabeledDatasetT<T> out;
  out.features = TensorT<T>({m, d});
  for (std::size_t i = 0; i < std::size_t(m) * std::size_t(d); ++i)
    out.features.data[i] = T(img.bytes[img.data_offset + i] / 255.0);

  out.labels.assign(std::size_t(m), 0);
  out.class_count = 1;
  if (!labels_path.empty()) {
    const auto lab = detail::parse_idx(labels_path, kIdxLabelsMagic, 1);
    if (int(lab.dims[0]) != m)
      throw DataParseError(labels_path + ": label count " + std::to_string(lab.dims[0]) +
                           " does not match image count " + std::to_string(m));
    int max_label = 0;
    for (int i = 0; i < m; ++i) {
      out.labels[std::size_t(i)] = int(lab.bytes[lab.data_offset + std::size_t(i)]);
      max_label = std::max(max_label, out.labels[std::size_t(i)]);
    }
    out.class_count = max_label + 1;
  }
  out.splits.assign(std::size_t(m), Split::Train);
  return out;
}

// UTF-8 edge list, one "u v" pair per line, '#' starts a comment. Node
// labels/features come from a sidecar CSV "<path>.csv" with rows
// node_id,label,f0,f1,... when present; otherwise features default to a
// one-hot node indicator and labels to 0. All nodes are tagged Train.
template <class T = float>
GraphDataT<T> load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataParseError("cannot open file: " + path);

  GraphDataT<T> g;
  long max_id = -1;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long u, v;
    if (!(ls >> u)) continue;  // blank/comment line
    if (!(ls >> v))
      throw DataParseError(path + ": expected two node ids at byte offset " +
                           std::to_string(line_start));
    std::string rest;
    if (ls >> rest)
      throw DataParseError(path + ": trailing tokens at byte offset " +
                           std::to_string(line_start));
    constexpr long kMaxNodeId = 100000000;
    if (u < 0 || v < 0 || u > kMaxNodeId || v > kMaxNodeId)
      throw DataParseError(path + ": node id overflow at byte offset " +
                           std::to_string(line_start));
    g.edges.emplace_back(int(u), int(v));
    max_id = std::max({max_id, u, v});
  }
  if (max_id < 0) throw DataParseError(path + ": no edges found");
  g.node_count = int(max_id) + 1;

  const std::string sidecar = path + ".csv";
  if (std::ifstream side(sidecar); side) {
    std::vector<std::vector<double>> feats(std::size_t(g.node_count));
    g.labels.assign(std::size_t(g.node_count), 0);
    int max_label = 0;
    std::size_t feature_dim = 0;
    std::size_t side_off = 0;
    bool header_skipped = false;
    while (std::getline(side, line)) {
      const std::size_t line_start = side_off;
      side_off += line.size() + 1;
      if (line.empty() || line[0] == '#') continue;
      if (!header_skipped && line.rfind("node_id", 0) == 0) {
        header_skipped = true;
        continue;
      }
      std::vector<std::string> cells;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (cells.size() < 2)
        throw DataParseError(sidecar + ": need node_id,label at byte offset " +
                             std::to_string(line_start));
      try {
        const int id = std::stoi(cells[0]);
        if (id < 0 || id >= g.node_count)
          throw DataParseError(sidecar + ": node id out of range at byte offset " +
                               std::to_string(line_start));
        g.labels[std::size_t(id)] = std::stoi(cells[1]);
        max_label = std::max(max_label, g.labels[std::size_t(id)]);
        auto& f = feats[std::size_t(id)];
        for (std::size_t k = 2; k < cells.size(); ++k) f.push_back(std::stod(cells[k]));
        if (feature_dim == 0) feature_dim = f.size();
        if (f.size() != feature_dim)
          throw DataParseError(sidecar + ": inconsistent feature width at byte offset " +
                               std::to_string(line_start));
      } catch (const std::invalid_argument&) {
        throw DataParseError(sidecar + ": malformed number at byte offset " +
                             std::to_string(line_start));
      } catch (const std::out_of_range&) {
        throw DataParseError(sidecar + ": number out of range at byte offset " +
                             std::to_string(line_start));
      }
    }
    g.class_count = max_label + 1;
    if (feature_dim == 0) feature_dim = 1;
    g.features = TensorT<T>({g.node_count, int(feature_dim)});
    for (int i = 0; i < g.node_count; ++i)
      for (std::size_t j = 0; j < feats[std::size_t(i)].size(); ++j)
        g.features.at(i, int(j)) = T(feats[std::size_t(i)][j]);
  } else {
    g.features = TensorT<T>({g.node_count, g.node_count});
    for (int i = 0; i < g.node_count; ++i) g.features.at(i, i) = T(1);
    g.labels.assign(std::size_t(g.node_count), 0);
    g.class_count = 1;
  }

  g.norm_adj = normalize_adjacency<T>(g.node_count, g.edges);
  g.splits.assign(std::size_t(g.node_count), Split::Train);
  return g;
}

}  // namespace ccpt
