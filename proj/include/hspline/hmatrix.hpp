#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

#include "hspline/sites.hpp"
#include "hspline/tps.hpp"

namespace hspline {

struct BoundingBox {
  Point2 lo;
  Point2 hi;

  static BoundingBox of(std::span<const Point2> points);
  double diameter() const;
  /// Euclidean gap between the boxes, 0 when they touch or overlap.
  double distance(const BoundingBox& other) const;
  bool contains(const Point2& p) const;
};

/// A contiguous range [begin, end) of the tree-ordered index array.
struct Cluster {
  std::size_t begin = 0;
  std::size_t end = 0;
  BoundingBox bbox;
  /// Node id of the first child; the second child is first_child + 1.
  /// Negative for leaves.
  std::ptrdiff_t first_child = -1;
  std::size_t level = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool is_leaf() const noexcept { return first_child < 0; }
};

double cluster_diameter(const Cluster& c);
double cluster_distance(const Cluster& a, const Cluster& b);
/// min(diam a, diam b) < eta * dist(a, b), bounding-box metrics.
bool is_admissible(const Cluster& a, const Cluster& b, double eta);

/// Binary geometric cluster tree. Each non-leaf is split at the midpoint of
/// its longest bounding-box side; sites are permuted so every cluster is a
/// contiguous range.
class ClusterTree {
 public:
  static ClusterTree build(const SiteSet& sites, std::size_t leaf_size);

  const Cluster& root() const { return nodes_.front(); }
  const Cluster& node(std::size_t id) const { return nodes_[id]; }
  const std::vector<Cluster>& nodes() const noexcept { return nodes_; }
  /// perm()[k] is the original index of the k-th site in tree order.
  const std::vector<std::size_t>& perm() const noexcept { return perm_; }
  /// Sites in tree order.
  const std::vector<Point2>& points() const noexcept { return points_; }
  std::size_t leaf_size() const noexcept { return leaf_size_; }
  std::size_t size() const noexcept { return perm_.size(); }
  std::size_t depth() const;
  std::size_t leaf_count() const;

 private:
  std::vector<Cluster> nodes_;
  std::vector<std::size_t> perm_;
  std::vector<Point2> points_;
  std::size_t leaf_size_ = 1;
};

/// A block tau x sigma, identified by the two cluster node ids.
struct BlockIndex {
  std::size_t tau = 0;
  std::size_t sigma = 0;
};

struct BlockPartition {
  std::vector<BlockIndex> far;
  std::vector<BlockIndex> near;
};

/// Recursive descent from (root, root): admissible pairs become far blocks,
/// pairs with a leaf become near blocks, everything else is subdivided.
BlockPartition build_block_partition(const ClusterTree& tree, double eta);

/// B ~= X * Y^T.
struct LowRankBlock {
  DenseMatrix X;
  DenseMatrix Y;
  /// Rank cap hit before the tolerance was met.
  bool truncated = false;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(X.cols()); }
};

/// Entry (row, col) of the block being compressed, local indices.
using EntryFn = std::function<double(std::size_t, std::size_t)>;

struct AcaOptions {
  double eps = 1e-4;
  /// 0 means min(rows, cols).
  std::size_t max_rank = 0;
  /// Truncate the cross factors with a QR + SVD pass at eps / 10.
  bool recompress = true;
};

/// Partially pivoted adaptive cross approximation. Crosses u_k v_k^T are added
/// until |u_k| |v_k| <= eps * |S_k|_F, with the Frobenius norm of the running
/// approximant S_k updated incrementally. With `recompress`, the result is
/// then cut to the smallest rank whose discarded singular values have
/// Frobenius norm <= (eps / 10) * |S_k|_F.
LowRankBlock aca_compress(std::size_t rows, std::size_t cols, const EntryFn& entry, const AcaOptions& opts);

/// ACA of the kernel block tau x sigma of a cluster tree.
LowRankBlock aca_compress(const ClusterTree& tree, const Cluster& tau, const Cluster& sigma,
                          const AcaOptions& opts);

struct HMatrixParams {
  double eps = 1e-4;
  double eta = 2.0;
  std::size_t leaf_size = 32;
  std::size_t max_rank = 0;
  /// 0 = hardware concurrency.
  unsigned threads = 1;
  bool recompress = true;
};

/// Block counts and ranks refer to the full partition; stored_entries counts
/// what is actually held, i.e. each mirror pair of blocks once.
struct CompressionStats {
  std::size_t stored_entries = 0;
  std::size_t dense_entries = 0;
  double ratio = 0.0;
  std::size_t max_rank = 0;
  std::size_t far_blocks = 0;
  std::size_t near_blocks = 0;
  std::size_t truncated_blocks = 0;
  /// rank -> number of far blocks with that rank
  std::map<std::size_t, std::size_t> rank_histogram;
};

/// Hierarchical approximation of the kernel matrix of a site set.
///
/// The kernel and the partition are symmetric, so only blocks with
/// tau.begin <= sigma.begin are stored; the mirror block is applied as the
/// transpose. This keeps the approximation exactly symmetric, which CG relies
/// on, and halves storage and memory traffic.
class HMatrix {
 public:
  static HMatrix assemble(const SiteSet& sites, const HMatrixParams& params = {});

  std::size_t size() const noexcept { return tree_.size(); }
  const ClusterTree& tree() const noexcept { return tree_; }
  const BlockPartition& partition() const noexcept { return partition_; }
  /// Stored blocks; stored_partition() gives their (tau, sigma).
  const std::vector<LowRankBlock>& far_blocks() const noexcept { return far_; }
  const std::vector<DenseMatrix>& near_blocks() const noexcept { return near_; }
  const BlockPartition& stored_partition() const noexcept { return stored_; }
  const HMatrixParams& params() const noexcept { return params_; }

  /// y = H v, both in original site order.
  Vector apply(const Vector& v) const;

  CompressionStats stats() const;

  /// One row per block: row_start,row_end,col_start,col_end,kind,rank.
  /// Ranges are half-open and in tree order.
  void write_partition_csv(std::ostream& out) const;

 private:
  ClusterTree tree_;
  BlockPartition partition_;
  BlockPartition stored_;
  std::vector<LowRankBlock> far_;
  std::vector<DenseMatrix> near_;
  HMatrixParams params_;
};

Vector hmatvec(const HMatrix& h, const Vector& v);
CompressionStats compression_stats(const HMatrix& h);

}  // namespace hspline
