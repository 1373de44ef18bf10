#pragma once

// Central-difference gradient checks for graph-built losses.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bsp/ndgrad.hpp"

namespace bsp::test {

using Build = std::function<nd::NodeId(nd::Graph&, const std::vector<nd::NodeId>&)>;

inline double loss_at(const Build& f, const std::vector<nd::Tensor>& leaves) {
  nd::Graph g;
  std::vector<nd::NodeId> ids;
  for (const auto& t : leaves) ids.push_back(g.param(t));
  return g.value(f(g, ids)).item();
}

/// Largest norm-wise relative error ||analytic - numeric|| / max(||a||, ||n||)
/// across the leaves. Leaves whose gradients are both below `floor` count
/// as exact.
inline double fd_relative_error(const Build& f, std::vector<nd::Tensor> leaves, double h = 1e-5,
                                double floor = 1e-10) {
  nd::Graph g;
  std::vector<nd::NodeId> ids;
  for (const auto& t : leaves) ids.push_back(g.param(t));
  const auto loss = f(g, ids);
  const auto grads = nd::gradients(g, loss);
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const nd::Tensor analytic = grads.has(ids[l]) ? grads.at(ids[l]) : nd::Tensor(leaves[l].shape());
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double x0 = leaves[l][i];
      leaves[l][i] = x0 + h;
      const double up = loss_at(f, leaves);
      leaves[l][i] = x0 - h;
      const double dn = loss_at(f, leaves);
      leaves[l][i] = x0;
      const double num = (up - dn) / (2.0 * h);
      diff += (analytic[i] - num) * (analytic[i] - num);
      na += analytic[i] * analytic[i];
      nn += num * num;
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale < floor) continue;
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

}  // namespace bsp::test
