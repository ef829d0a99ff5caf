#include "kae/kernels.hpp"

#include <cmath>
#include <string>

namespace kae {

namespace {

// Solve the small dense system A x = b by Gaussian elimination with
// partial pivoting. Used once per higher-order kernel construction.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row) {
            if (std::fabs(a[row][col]) > std::fabs(a[pivot][col])) pivot = row;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int row = col + 1; row < n; ++row) {
            double f = a[row][col] / a[col][col];
            for (int k = col; k < n; ++k) a[row][k] -= f * a[col][k];
            b[row] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int row = n - 1; row >= 0; --row) {
        double s = b[row];
        for (int k = row + 1; k < n; ++k) s -= a[row][k] * x[k];
        x[row] = s / a[row][row];
    }
    return x;
}

}  // namespace

const char* kernel_kind_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::triangular: return "triangular";
        case KernelKind::exponential: return "exponential";
        case KernelKind::uniform: return "uniform";
        case KernelKind::epanechnikov: return "epanechnikov";
        case KernelKind::higher_order: return "higher_order";
    }
    return "?";
}

KernelSpec KernelSpec::triangular() {
    KernelSpec k;
    k.kind_ = KernelKind::triangular;
    k.order_ = 1;
    k.eval_bound_ = 1.0;
    return k;
}

KernelSpec KernelSpec::exponential(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) {
        throw Error(Errc::malformed_input, "exponential kernel needs rho in (0,1)");
    }
    KernelSpec k;
    k.kind_ = KernelKind::exponential;
    k.support_ = SupportKind::truncated_infinite;
    k.rho_ = rho;
    k.order_ = 1;
    // Truncate where the weight drops below 1e-8; beyond that the
    // estimator cannot distinguish the tail from zero.
    k.support_upper_ = std::ceil(std::log(1e-8) / std::log(rho));
    k.eval_bound_ = 1.0;
    return k;
}

KernelSpec KernelSpec::uniform() {
    KernelSpec k;
    k.kind_ = KernelKind::uniform;
    k.order_ = 1;
    k.eval_bound_ = 1.0;
    return k;
}

KernelSpec KernelSpec::epanechnikov() {
    KernelSpec k;
    k.kind_ = KernelKind::epanechnikov;
    k.order_ = 1;
    k.eval_bound_ = 0.75;
    return k;
}

KernelSpec KernelSpec::higher_order(int order) {
    if (order < 1 || order > 8) {
        throw Error(Errc::malformed_input,
                    "higher_order kernel order must be in [1,8], got " + std::to_string(order));
    }
    KernelSpec k;
    k.kind_ = KernelKind::higher_order;
    k.order_ = order;
    // Coefficients c_k of u^(2k), k = 0..order-1, chosen so that
    //   integral_0^1 u^j K(u) du = delta_{j0}  for j = 0..order-1.
    // Row j of the system: sum_k c_k / (j + 2k + 1) = delta_{j0}.
    std::vector<std::vector<double>> a(order, std::vector<double>(order));
    std::vector<double> b(order, 0.0);
    b[0] = 1.0;
    for (int j = 0; j < order; ++j) {
        for (int c = 0; c < order; ++c) {
            a[j][c] = 1.0 / static_cast<double>(j + 2 * c + 1);
        }
    }
    k.poly_ = solve_dense(std::move(a), std::move(b));
    double bound = 0.0;
    for (int i = 0; i <= 4096; ++i) {
        bound = std::max(bound, std::fabs(k.eval(static_cast<double>(i) / 4096.0)));
    }
    k.eval_bound_ = bound;
    return k;
}

double KernelSpec::eval(double u) const {
    if (u < 0.0 || u > support_upper_) return 0.0;
    double value = 0.0;
    switch (kind_) {
        case KernelKind::triangular:
            value = std::max(1.0 - u, 0.0);
            break;
        case KernelKind::exponential:
            value = std::pow(rho_, u);
            break;
        case KernelKind::uniform:
            value = 1.0;
            break;
        case KernelKind::epanechnikov:
            value = 0.75 * (1.0 - u * u);
            break;
        case KernelKind::higher_order: {
            const double u2 = u * u;
            double p = 1.0;
            for (double coeff : poly_) {
                value += coeff * p;
                p *= u2;
            }
            break;
        }
    }
    return amplitude_ * value;
}

double KernelSpec::lag_weight(double lag, double scale) const {
    if (!(scale > 0.0)) {
        throw Error(Errc::invalid_bandwidth, "lag_weight needs scale > 0");
    }
    return eval(lag / scale);
}

double KernelSpec::moment(int j, int quadrature_points) const {
    if (quadrature_points < 2) {
        throw Error(Errc::malformed_input, "moment needs at least 2 quadrature points");
    }
    const int n = quadrature_points;
    const double upper = support_upper_;
    const double step = upper / static_cast<double>(n - 1);
    auto f = [&](int i) {
        double u = static_cast<double>(i) * step;
        return std::pow(u, j) * eval(u);
    };
    const bool simpson = (n >= 3) && (n % 2 == 1);
    double sum = 0.0;
    if (simpson) {
        sum = f(0) + f(n - 1);
        for (int i = 1; i < n - 1; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * f(i);
        return sum * step / 3.0;
    }
    sum = 0.5 * (f(0) + f(n - 1));
    for (int i = 1; i < n - 1; ++i) sum += f(i);
    return sum * step;
}

KernelSpec KernelSpec::scaled(double c) const {
    if (!(c > 0.0)) {
        throw Error(Errc::malformed_input, "kernel scaling factor must be positive");
    }
    KernelSpec k = *this;
    k.amplitude_ *= c;
    k.eval_bound_ *= c;
    return k;
}

}  // namespace kae
