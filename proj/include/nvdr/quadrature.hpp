#pragma once

#include <vector>

namespace nvdr {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(int n);

/// Gauss-Legendre rule mapped to [a, b].
QuadratureRule gauss_legendre(int n, double a, double b);

/// Gauss-Hermite rule for weight exp(-x^2) on (-inf, inf).
/// To average a function of a normal variate N(0, sigma), evaluate at
/// sqrt(2)*sigma*node and combine with weight/sqrt(pi).
QuadratureRule gauss_hermite(int n);

}  // namespace nvdr
