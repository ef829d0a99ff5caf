#pragma once

#include <vector>

#include "kae/common.hpp"

namespace kae {

enum class KernelKind { triangular, exponential, uniform, epanechnikov, higher_order };

enum class SupportKind { unit_interval, truncated_infinite };

const char* kernel_kind_name(KernelKind kind);

// A lag-weighting function K with a declared moment order and support.
// Lags are nonnegative by construction, so every kernel here lives on
// [0, upper] and evaluates to exactly zero outside it.
//
// Shipped kinds:
//   triangular     K(u) = max(1 - u, 0)                 order 1, mass 1/2
//   exponential    K(u) = rho^u on [0, cutoff]          order 1
//   uniform        K(u) = 1 on [0, 1]                   order 1, mass 1
//   epanechnikov   K(u) = 0.75 (1 - u^2) on [0, 1]      order 1, mass 1/2
//   higher_order   polynomial in even powers of u whose first s-1
//                  moments on [0, 1] vanish and whose mass is 1; takes
//                  negative values for s > 1. For s = 2 the coefficients
//                  solve [[1, 1/3], [1/2, 1/4]] [a0, a2] = [1, 0], giving
//                  K(u) = 3 - 6 u^2.
//
// Non-unit masses are harmless: estimation always goes through the
// Nadaraya-Watson normalization, which cancels any positive rescaling
// of K. `moment` exists for the order-s test suite, not for runtime
// normalization.
class KernelSpec {
  public:
    static KernelSpec triangular();
    static KernelSpec exponential(double rho);
    static KernelSpec uniform();
    static KernelSpec epanechnikov();
    static KernelSpec higher_order(int order);

    KernelKind kind() const { return kind_; }
    SupportKind support() const { return support_; }
    int order() const { return order_; }
    double rho() const { return rho_; }

    // Upper end of the support: 1 for unit-interval kernels, the
    // truncation cutoff for the exponential (rho^cutoff < 1e-8).
    double support_upper() const { return support_upper_; }

    // sup |K| over the support, fixed at construction.
    double eval_bound() const { return eval_bound_; }

    // K(u). Zero for u < 0 and beyond the support.
    double eval(double u) const;

    // K(lag / scale). scale <= 0 signals invalid-bandwidth.
    double lag_weight(double lag, double scale) const;

    // Composite Simpson (odd point counts >= 3, else trapezoid) estimate
    // of the j-th moment over the support. Simpson's error is
    // O((upper/points)^4 |K^(4)|), so polynomial kernels up to cubic
    // integrands are exact up to roundoff.
    double moment(int j, int quadrature_points) const;

    // The same kernel with eval multiplied by c > 0. Estimates built via
    // Nadaraya-Watson normalization are invariant to this.
    KernelSpec scaled(double c) const;

  private:
    KernelSpec() = default;

    KernelKind kind_ = KernelKind::triangular;
    SupportKind support_ = SupportKind::unit_interval;
    int order_ = 1;
    double rho_ = 0.0;
    double support_upper_ = 1.0;
    double eval_bound_ = 1.0;
    double amplitude_ = 1.0;
    std::vector<double> poly_;  // higher_order coefficients of u^0, u^2, u^4, ...
};

}  // namespace kae
