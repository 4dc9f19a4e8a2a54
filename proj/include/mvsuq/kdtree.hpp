#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "mvsuq/common.hpp"

namespace mvsuq {

// Static 3-d tree over a point list the caller keeps alive. Build and
// queries are deterministic: splits use nth_element with an index tie-break
// and equal distances resolve to the lowest point index.
class KdTree {
 public:
  explicit KdTree(const std::vector<Eigen::Vector3d>& pts) : pts_(pts) {
    if (pts.empty()) fail(Err::EmptyCloud, "kd-tree over empty cloud");
    order_.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) order_[i] = (int)i;
    nodes_.reserve(pts.size() / kLeaf * 2 + 8);
    root_ = build(0, (int)pts.size(), 0);
  }

  // Returns (point index, squared distance).
  std::pair<int, double> nearest(const Eigen::Vector3d& q) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return {best, best_d2};
  }

 private:
  static constexpr int kLeaf = 12;

  struct Node {
    int axis = -1;      // -1 for leaves
    double split = 0;   // splitting coordinate
    int begin = 0, end = 0;
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth) {
    Node n;
    n.begin = begin;
    n.end = end;
    if (end - begin > kLeaf) {
      const int axis = depth % 3;
      const int mid = (begin + end) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](int a, int b) {
                         const double ca = pts_[a][axis], cb = pts_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                       });
      n.axis = axis;
      n.split = pts_[order_[mid]][axis];
      const int id = (int)nodes_.size();
      nodes_.push_back(n);
      const int l = build(begin, mid, depth + 1);
      const int r = build(mid, end, depth + 1);
      nodes_[id].left = l;
      nodes_[id].right = r;
      return id;
    }
    nodes_.push_back(n);
    return (int)nodes_.size() - 1;
  }

  void search(int id, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = order_[i];
        const double d2 = (pts_[p] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
          best = p;
          best_d2 = d2;
        }
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    search(near, q, best, best_d2);
    if (delta * delta <= best_d2) search(far, q, best, best_d2);
  }

  const std::vector<Eigen::Vector3d>& pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mvsuq
