#pragma once

#include <vector>

namespace crowd {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;
};

// n-point Gauss-Legendre rule computed by Newton iteration on P_n.
// Rules are cached per n.
const GaussLegendreRule& gauss_legendre(int n);

}  // namespace crowd
