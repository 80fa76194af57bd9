#include "hspline/hmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "hspline/error.hpp"
#include "hspline/parallel.hpp"

namespace hspline {

// ---------------------------------------------------------------------------
// Geometry

BoundingBox BoundingBox::of(std::span<const Point2> points) {
  if (points.empty()) throw InvalidArgument("bounding box of an empty point set");
  BoundingBox box{points.front(), points.front()};
  for (const auto& p : points) {
    box.lo.x1 = std::min(box.lo.x1, p.x1);
    box.lo.x2 = std::min(box.lo.x2, p.x2);
    box.hi.x1 = std::max(box.hi.x1, p.x1);
    box.hi.x2 = std::max(box.hi.x2, p.x2);
  }
  return box;
}

double BoundingBox::diameter() const { return std::hypot(hi.x1 - lo.x1, hi.x2 - lo.x2); }

double BoundingBox::distance(const BoundingBox& other) const {
  const double gap1 = std::max({0.0, other.lo.x1 - hi.x1, lo.x1 - other.hi.x1});
  const double gap2 = std::max({0.0, other.lo.x2 - hi.x2, lo.x2 - other.hi.x2});
  return std::hypot(gap1, gap2);
}

bool BoundingBox::contains(const Point2& p) const {
  return p.x1 >= lo.x1 && p.x1 <= hi.x1 && p.x2 >= lo.x2 && p.x2 <= hi.x2;
}

double cluster_diameter(const Cluster& c) {
  if (c.size() == 0) throw InvalidArgument("cluster_diameter: empty cluster");
  return c.bbox.diameter();
}

double cluster_distance(const Cluster& a, const Cluster& b) {
  if (a.size() == 0 || b.size() == 0) throw InvalidArgument("cluster_distance: empty cluster");
  return a.bbox.distance(b.bbox);
}

bool is_admissible(const Cluster& a, const Cluster& b, double eta) {
  return std::min(cluster_diameter(a), cluster_diameter(b)) < eta * cluster_distance(a, b);
}

// ---------------------------------------------------------------------------
// Cluster tree

ClusterTree ClusterTree::build(const SiteSet& sites, std::size_t leaf_size) {
  if (leaf_size < 1) throw InvalidArgument("build_cluster_tree: leaf size must be >= 1");
  if (sites.empty()) throw InvalidArgument("build_cluster_tree: empty site set");

  ClusterTree tree;
  tree.leaf_size_ = leaf_size;
  tree.perm_.resize(sites.size());
  std::iota(tree.perm_.begin(), tree.perm_.end(), std::size_t{0});
  tree.points_.assign(sites.begin(), sites.end());

  auto make_node = [&](std::size_t begin, std::size_t end, std::size_t level) {
    Cluster c;
    c.begin = begin;
    c.end = end;
    c.level = level;
    c.bbox = BoundingBox::of(std::span(tree.points_).subspan(begin, end - begin));
    return c;
  };

  tree.nodes_.push_back(make_node(0, sites.size(), 0));
  // Breadth-first so that siblings are adjacent in nodes_.
  for (std::size_t id = 0; id < tree.nodes_.size(); ++id) {
    const Cluster c = tree.nodes_[id];
    if (c.size() <= leaf_size) continue;

    const bool split_x1 = (c.bbox.hi.x1 - c.bbox.lo.x1) >= (c.bbox.hi.x2 - c.bbox.lo.x2);
    const double mid = split_x1 ? 0.5 * (c.bbox.lo.x1 + c.bbox.hi.x1) : 0.5 * (c.bbox.lo.x2 + c.bbox.hi.x2);

    // Stable partition of points and perm together.
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t k = c.begin; k < c.end; ++k) {
      const double coord = split_x1 ? tree.points_[k].x1 : tree.points_[k].x2;
      (coord < mid ? left : right).push_back(k);
    }
    std::size_t cut = c.begin + left.size();
    if (left.empty() || right.empty()) {
      // Only possible for coincident sites; fall back to an index split.
      cut = c.begin + c.size() / 2;
    } else {
      std::vector<std::size_t> order(left);
      order.insert(order.end(), right.begin(), right.end());
      std::vector<Point2> pts;
      std::vector<std::size_t> perm;
      pts.reserve(order.size());
      perm.reserve(order.size());
      for (std::size_t k : order) {
        pts.push_back(tree.points_[k]);
        perm.push_back(tree.perm_[k]);
      }
      std::copy(pts.begin(), pts.end(), tree.points_.begin() + static_cast<std::ptrdiff_t>(c.begin));
      std::copy(perm.begin(), perm.end(), tree.perm_.begin() + static_cast<std::ptrdiff_t>(c.begin));
    }

    const auto first = static_cast<std::ptrdiff_t>(tree.nodes_.size());
    tree.nodes_.push_back(make_node(c.begin, cut, c.level + 1));
    tree.nodes_.push_back(make_node(cut, c.end, c.level + 1));
    tree.nodes_[id].first_child = first;
  }
  return tree;
}

std::size_t ClusterTree::depth() const {
  std::size_t d = 0;
  for (const auto& c : nodes_) d = std::max(d, c.level);
  return d;
}

std::size_t ClusterTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Cluster& c) { return c.is_leaf(); }));
}

// ---------------------------------------------------------------------------
// Block partition

BlockPartition build_block_partition(const ClusterTree& tree, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("build_block_partition: eta must be positive");
  BlockPartition partition;
  std::vector<BlockIndex> stack{{0, 0}};
  while (!stack.empty()) {
    const BlockIndex b = stack.back();
    stack.pop_back();
    const Cluster& tau = tree.node(b.tau);
    const Cluster& sigma = tree.node(b.sigma);
    if (is_admissible(tau, sigma, eta)) {
      partition.far.push_back(b);
    } else if (tau.is_leaf() || sigma.is_leaf()) {
      partition.near.push_back(b);
    } else {
      // pushed in reverse so blocks come out in row-major child order
      for (std::size_t i = 2; i-- > 0;) {
        for (std::size_t j = 2; j-- > 0;) {
          stack.push_back({static_cast<std::size_t>(tau.first_child) + i,
                           static_cast<std::size_t>(sigma.first_child) + j});
        }
      }
    }
  }
  return partition;
}

// ---------------------------------------------------------------------------
// Adaptive cross approximation

namespace {

// X Y^T = Qx (Rx Ry^T) Qy^T; an SVD of the small core gives the optimal
// truncation. Dropped singular values stay within eps of |X Y^T|_F.
// Callers pass a fraction of the ACA tolerance: the pass should only remove
// redundant crosses, not add a second eps-sized error on top of ACA's.
constexpr double kRecompressFraction = 0.1;

void recompress(LowRankBlock& b, double eps) {
  const Eigen::Index k = b.X.cols();
  if (k < 2) return;
  const Eigen::HouseholderQR<DenseMatrix> qx(b.X);
  const Eigen::HouseholderQR<DenseMatrix> qy(b.Y);
  const DenseMatrix rx = qx.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const DenseMatrix ry = qy.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Eigen::JacobiSVD<DenseMatrix> svd(rx * ry.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();

  const double budget = eps * eps * sv.squaredNorm();
  Eigen::Index r = k;
  double dropped = 0.0;
  while (r > 1 && dropped + sv(r - 1) * sv(r - 1) <= budget) {
    dropped += sv(r - 1) * sv(r - 1);
    --r;
  }
  if (r == k) return;

  const DenseMatrix ux = qx.householderQ() * DenseMatrix::Identity(b.X.rows(), k);
  const DenseMatrix uy = qy.householderQ() * DenseMatrix::Identity(b.Y.rows(), k);
  b.X = ux * (svd.matrixU().leftCols(r) * sv.head(r).asDiagonal());
  b.Y = uy * svd.matrixV().leftCols(r);
}

}  // namespace

LowRankBlock aca_compress(std::size_t rows, std::size_t cols, const EntryFn& entry, const AcaOptions& opts) {
  if (!(opts.eps > 0.0)) throw InvalidArgument("aca_compress: eps must be positive");
  LowRankBlock block;
  if (rows == 0 || cols == 0) {
    block.X.resize(static_cast<Eigen::Index>(rows), 0);
    block.Y.resize(static_cast<Eigen::Index>(cols), 0);
    return block;
  }
  const std::size_t full_rank = std::min(rows, cols);
  const std::size_t max_rank = opts.max_rank == 0 ? full_rank : std::min(opts.max_rank, full_rank);

  const auto m = static_cast<Eigen::Index>(rows);
  const auto n = static_cast<Eigen::Index>(cols);
  std::vector<Vector> us;
  std::vector<Vector> vs;
  std::vector<bool> row_used(rows, false);
  std::vector<bool> col_used(cols, false);
  std::size_t rows_left = rows;

  double frob2 = 0.0;
  double entry_scale = 0.0;
  bool converged = false;
  Eigen::Index pivot_row = 0;
  Vector row(n);
  Vector col(m);

  auto first_unused_row = [&]() -> Eigen::Index {
    for (std::size_t j = 0; j < rows; ++j) {
      if (!row_used[j]) return static_cast<Eigen::Index>(j);
    }
    return -1;
  };

  while (us.size() < max_rank) {
    // Residual of the pivot row.
    for (Eigen::Index i = 0; i < n; ++i) {
      row(i) = entry(static_cast<std::size_t>(pivot_row), static_cast<std::size_t>(i));
    }
    entry_scale = std::max(entry_scale, row.cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < us.size(); ++k) row -= us[k](pivot_row) * vs[k];
    row_used[static_cast<std::size_t>(pivot_row)] = true;
    --rows_left;

    Eigen::Index pivot_col = -1;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (col_used[static_cast<std::size_t>(i)]) continue;
      if (std::abs(row(i)) > best) {
        best = std::abs(row(i));
        pivot_col = i;
      }
    }

    // A residual row at rounding level carries no new information; try
    // another row. Running out of rows means the block is reproduced.
    const double negligible = 64.0 * std::numeric_limits<double>::epsilon() * entry_scale;
    if (pivot_col < 0 || best <= negligible) {
      pivot_row = first_unused_row();
      if (pivot_row < 0 || pivot_col < 0) {
        converged = true;
        break;
      }
      continue;
    }

    Vector v = row / row(pivot_col);
    for (Eigen::Index j = 0; j < m; ++j) {
      col(j) = entry(static_cast<std::size_t>(j), static_cast<std::size_t>(pivot_col));
    }
    for (std::size_t k = 0; k < us.size(); ++k) col -= vs[k](pivot_col) * us[k];
    col_used[static_cast<std::size_t>(pivot_col)] = true;
    Vector u = col;

    // |S_k|^2 = |S_{k-1}|^2 + 2 sum_l (u_k.u_l)(v_l.v_k) + |u_k|^2 |v_k|^2
    double cross = 0.0;
    for (std::size_t k = 0; k < us.size(); ++k) cross += u.dot(us[k]) * vs[k].dot(v);
    const double norm_u = u.norm();
    const double norm_v = v.norm();
    frob2 = std::max(0.0, frob2 + 2.0 * cross + norm_u * norm_u * norm_v * norm_v);

    us.push_back(std::move(u));
    vs.push_back(std::move(v));

    if (norm_u * norm_v <= opts.eps * std::sqrt(frob2)) {
      converged = true;
      break;
    }
    if (rows_left == 0) {
      converged = true;
      break;
    }

    // Next row pivot: largest entry of the new column among unused rows.
    pivot_row = -1;
    best = -1.0;
    const Vector& last = us.back();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (row_used[static_cast<std::size_t>(j)]) continue;
      if (std::abs(last(j)) > best) {
        best = std::abs(last(j));
        pivot_row = j;
      }
    }
  }

  const auto k = static_cast<Eigen::Index>(us.size());
  block.X.resize(m, k);
  block.Y.resize(n, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    block.X.col(r) = us[static_cast<std::size_t>(r)];
    block.Y.col(r) = vs[static_cast<std::size_t>(r)];
  }
  block.truncated = !converged && us.size() < full_rank;
  if (opts.recompress) recompress(block, kRecompressFraction * opts.eps);
  return block;
}

LowRankBlock aca_compress(const ClusterTree& tree, const Cluster& tau, const Cluster& sigma, const AcaOptions& opts) {
  const auto& pts = tree.points();
  const std::size_t row0 = tau.begin;
  const std::size_t col0 = sigma.begin;
  return aca_compress(
      tau.size(), sigma.size(),
      [&pts, row0, col0](std::size_t j, std::size_t i) { return tps_kernel_unchecked(pts[row0 + j], pts[col0 + i]); },
      opts);
}

// ---------------------------------------------------------------------------
// H-matrix

HMatrix HMatrix::assemble(const SiteSet& sites, const HMatrixParams& params) {
  if (!(params.eps > 0.0) || !(params.eta > 0.0) || params.leaf_size < 1)
    throw InvalidArgument("assemble_hmatrix: eps, eta and leaf size must be positive");

  HMatrix h;
  h.params_ = params;
  h.tree_ = ClusterTree::build(sites, params.leaf_size);
  h.partition_ = build_block_partition(h.tree_, params.eta);

  // Only blocks with tau before sigma (or on the diagonal) are stored; the
  // partition is symmetric, so their mirrors cover the rest.
  const auto& tree = h.tree_;
  auto primary = [&tree](const BlockIndex& b) { return tree.node(b.tau).begin <= tree.node(b.sigma).begin; };
  for (const auto& b : h.partition_.near)
    if (primary(b)) h.stored_.near.push_back(b);
  for (const auto& b : h.partition_.far)
    if (primary(b)) h.stored_.far.push_back(b);
  std::size_t diagonal = 0;
  for (const auto& b : h.stored_.near) diagonal += b.tau == b.sigma;
  if (2 * h.stored_.near.size() - diagonal != h.partition_.near.size() ||
      2 * h.stored_.far.size() != h.partition_.far.size())
    throw NumericalError("assemble_hmatrix: block partition is not symmetric");

  const auto& pts = tree.points();
  h.near_.resize(h.stored_.near.size());
  parallel_for(h.stored_.near.size(), params.threads, [&](std::size_t b) {
    const Cluster& tau = tree.node(h.stored_.near[b].tau);
    const Cluster& sigma = tree.node(h.stored_.near[b].sigma);
    DenseMatrix block(static_cast<Eigen::Index>(tau.size()), static_cast<Eigen::Index>(sigma.size()));
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      for (std::size_t j = 0; j < tau.size(); ++j) {
        block(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
            tps_kernel_unchecked(pts[tau.begin + j], pts[sigma.begin + i]);
      }
    }
    h.near_[b] = std::move(block);
  });

  const AcaOptions aca{params.eps, params.max_rank, params.recompress};
  h.far_.resize(h.stored_.far.size());
  parallel_for(h.stored_.far.size(), params.threads, [&](std::size_t b) {
    h.far_[b] = aca_compress(tree, tree.node(h.stored_.far[b].tau), tree.node(h.stored_.far[b].sigma), aca);
  });
  return h;
}

Vector HMatrix::apply(const Vector& v) const {
  const std::size_t n = size();
  if (static_cast<std::size_t>(v.size()) != n) throw InvalidArgument("hmatvec: vector length does not match matrix");
  const auto& perm = tree_.perm();
  Vector x(v.size());
  for (std::size_t k = 0; k < n; ++k) x(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(perm[k]));

  auto seg = [](auto& vec, const Cluster& c) {
    return vec.segment(static_cast<Eigen::Index>(c.begin), static_cast<Eigen::Index>(c.size()));
  };
  const std::size_t blocks = near_.size() + far_.size();
  auto accumulate = [&](std::size_t b, Vector& y) {
    if (b < near_.size()) {
      const BlockIndex& ix = stored_.near[b];
      const Cluster& tau = tree_.node(ix.tau);
      const Cluster& sigma = tree_.node(ix.sigma);
      seg(y, tau).noalias() += near_[b] * seg(x, sigma);
      if (ix.tau != ix.sigma) seg(y, sigma).noalias() += near_[b].transpose() * seg(x, tau);
    } else {
      const std::size_t f = b - near_.size();
      const LowRankBlock& lr = far_[f];
      if (lr.rank() == 0) return;
      const Cluster& tau = tree_.node(stored_.far[f].tau);
      const Cluster& sigma = tree_.node(stored_.far[f].sigma);
      Vector t = lr.Y.transpose() * seg(x, sigma);
      seg(y, tau).noalias() += lr.X * t;
      t.noalias() = lr.X.transpose() * seg(x, tau);
      seg(y, sigma).noalias() += lr.Y * t;
    }
  };

  Vector y = Vector::Zero(v.size());
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(params_.threads), blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) accumulate(b, y);
  } else {
    // Fixed block ranges per worker and an ordered reduction keep the result
    // independent of scheduling.
    std::vector<Vector> partial(workers, Vector::Zero(v.size()));
    parallel_for(workers, workers, [&](std::size_t w) {
      const std::size_t lo = blocks * w / workers;
      const std::size_t hi = blocks * (w + 1) / workers;
      for (std::size_t b = lo; b < hi; ++b) accumulate(b, partial[w]);
    });
    for (const auto& p : partial) y += p;
  }

  Vector out(v.size());
  for (std::size_t k = 0; k < n; ++k) out(static_cast<Eigen::Index>(perm[k])) = y(static_cast<Eigen::Index>(k));
  return out;
}

CompressionStats HMatrix::stats() const {
  CompressionStats s;
  const std::size_t n = size();
  s.dense_entries = n * n;
  s.near_blocks = partition_.near.size();
  s.far_blocks = partition_.far.size();
  for (const auto& d : near_) s.stored_entries += static_cast<std::size_t>(d.size());
  // Every stored far block stands for itself and its mirror.
  for (const auto& lr : far_) {
    s.stored_entries += lr.rank() * static_cast<std::size_t>(lr.X.rows() + lr.Y.rows());
    s.max_rank = std::max(s.max_rank, lr.rank());
    s.rank_histogram[lr.rank()] += 2;
    if (lr.truncated) s.truncated_blocks += 2;
  }
  s.ratio = s.dense_entries ? static_cast<double>(s.stored_entries) / static_cast<double>(s.dense_entries) : 0.0;
  return s;
}

void HMatrix::write_partition_csv(std::ostream& out) const {
  out << "row_start,row_end,col_start,col_end,kind,rank\n";
  auto emit = [&](const BlockIndex& b, const char* kind, std::size_t rank) {
    const Cluster& tau = tree_.node(b.tau);
    const Cluster& sigma = tree_.node(b.sigma);
    out << tau.begin << ',' << tau.end << ',' << sigma.begin << ',' << sigma.end << ',' << kind << ',' << rank << '\n';
  };
  for (const auto& b : partition_.near) {
    emit(b, "near", std::min(tree_.node(b.tau).size(), tree_.node(b.sigma).size()));
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> rank;
  for (std::size_t b = 0; b < far_.size(); ++b) {
    rank[{stored_.far[b].tau, stored_.far[b].sigma}] = far_[b].rank();
    rank[{stored_.far[b].sigma, stored_.far[b].tau}] = far_[b].rank();
  }
  for (const auto& b : partition_.far) emit(b, "far", rank.at({b.tau, b.sigma}));
}

Vector hmatvec(const HMatrix& h, const Vector& v) { return h.apply(v); }

CompressionStats compression_stats(const HMatrix& h) { return h.stats(); }

}  // namespace hspline
