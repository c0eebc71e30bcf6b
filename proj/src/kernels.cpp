#include "potmap/kernels.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "potmap/error.hpp"

namespace potmap {

namespace {

constexpr double kPi = std::numbers::pi;

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Estimate {
    double value;
    double error;
};

template <class F>
Estimate gauss_kronrod(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double sum = f(c - dx) + f(c + dx);
        kronrod += kWgk[j] * sum;
        if (j % 2 == 1) gauss += kWg[j / 2] * sum;
    }
    return {kronrod * h, std::abs((kronrod - gauss) * h)};
}

template <class F>
double adaptive(const F& f, double a, double b, double abs_tol, int depth, bool& converged) {
    const auto est = gauss_kronrod(f, a, b);
    if (est.error <= abs_tol) return est.value;
    if (depth == 0) {
        converged = false;
        return est.value;
    }
    const double m = 0.5 * (a + b);
    return adaptive(f, a, m, 0.5 * abs_tol, depth - 1, converged) +
           adaptive(f, m, b, 0.5 * abs_tol, depth - 1, converged);
}

}  // namespace

std::string_view kernel_name(KernelKind kind) {
    switch (kind) {
        case KernelKind::Disk: return "disk";
        case KernelKind::DampedDisk: return "damped-disk";
        case KernelKind::Gaussian: return "gaussian";
        case KernelKind::Pareto: return "pareto";
    }
    return "unknown";
}

std::optional<KernelKind> parse_kernel_kind(std::string_view name) {
    for (auto kind : kAllKernelKinds)
        if (kernel_name(kind) == name) return kind;
    return std::nullopt;
}

Kernel Kernel::make(KernelKind kind, double portee_km, std::optional<double> beta) {
    if (!std::isfinite(portee_km) || portee_km <= 0.0)
        throw ValidationError("kernel.portee_km",
                              fmt::format("portee must be a positive distance, got {}", portee_km));
    if (kind != KernelKind::Pareto && beta)
        throw ValidationError("kernel.beta", "beta only applies to the pareto kernel");

    const double p = portee_km;
    switch (kind) {
        case KernelKind::Disk: {
            const double r = 1.5 * p;
            return Kernel(kind, p, r, 1.0 / (kPi * r * r), 0.0);
        }
        case KernelKind::DampedDisk: {
            const double r = 15.0 * p / 8.0;
            return Kernel(kind, p, r, 2.0 / (kPi * r * r), 0.0);
        }
        case KernelKind::Gaussian: {
            const double s = 2.0 * p / std::sqrt(kPi);
            return Kernel(kind, p, s, 1.0 / (kPi * s * s), 0.0);
        }
        case KernelKind::Pareto: {
            const double bt = beta.value_or(kDefaultParetoBeta);
            if (!std::isfinite(bt))
                throw ValidationError("kernel.beta", "beta must be finite");
            if (bt <= 3.0)
                throw UnprocessableError(
                    "kernel.beta",
                    fmt::format("pareto exponent must exceed 3 for a finite mean range, got {}", bt));
            const double b = p * (bt - 3.0) / 2.0;
            const double c = (bt - 1.0) * (bt - 2.0) / (2.0 * kPi * b * b);
            return Kernel(kind, p, b, c, bt);
        }
    }
    throw ValidationError("kernel.kind", "unknown kernel kind");
}

std::optional<double> Kernel::beta() const {
    if (kind_ == KernelKind::Pareto) return beta_;
    return std::nullopt;
}

std::optional<double> Kernel::support_km() const {
    if (kind_ == KernelKind::Disk || kind_ == KernelKind::DampedDisk) return shape_;
    return std::nullopt;
}

double Kernel::tail_mass_bound(double t) const {
    switch (kind_) {
        case KernelKind::Disk:
        case KernelKind::DampedDisk:
            return t >= shape_ ? 0.0 : 1.0;
        case KernelKind::Gaussian: {
            const double q = t / shape_;
            return std::exp(-q * q);
        }
        case KernelKind::Pareto: {
            // (1+u)^-beta u <= (1+u)^(1-beta), integrated from t/b.
            const double u = 1.0 + t / shape_;
            return 2.0 * kPi * norm_ * shape_ * shape_ * std::pow(u, 2.0 - beta_) / (beta_ - 2.0);
        }
    }
    return 1.0;
}

double Kernel::tail_range_bound(double t) const {
    switch (kind_) {
        case KernelKind::Disk:
        case KernelKind::DampedDisk:
            return t >= shape_ ? 0.0 : portee_;
        case KernelKind::Gaussian: {
            const double q = t / shape_;
            return t * std::exp(-q * q) + 0.5 * shape_ * std::sqrt(kPi) * std::erfc(q);
        }
        case KernelKind::Pareto: {
            const double u = 1.0 + t / shape_;
            return 2.0 * kPi * norm_ * shape_ * shape_ * shape_ * std::pow(u, 3.0 - beta_) /
                   (beta_ - 3.0);
        }
    }
    return portee_;
}

KernelReport verify_kernel(const Kernel& k, double tol) {
    if (!(tol > 0.0)) throw ValidationError("tol", "tolerance must be positive");

    KernelReport report;
    const double p = k.portee_km();

    double t = k.shape_km();
    if (auto support = k.support_km()) {
        t = *support;
    } else {
        const double mass_target = tol / 10.0;
        const double range_target = tol / 10.0 * p;
        int doublings = 0;
        while ((k.tail_mass_bound(t) > mass_target || k.tail_range_bound(t) > range_target) &&
               doublings < 2000) {
            t *= 2.0;
            ++doublings;
        }
        if (doublings == 2000 || !std::isfinite(t)) report.converged = false;
    }
    report.truncation_km = t;

    auto mass = [&k](double r) { return k(r) * 2.0 * kPi * r; };
    auto range = [&k](double r) { return k(r) * 2.0 * kPi * r * r; };

    // Panels [0, h], [h, 2h], [2h, 4h], ... so heavy tails get resolution on
    // a log scale.
    const double quad_tol = tol / 100.0;
    double lo = 0.0;
    double hi = std::min(k.shape_km(), t);
    while (lo < t) {
        report.norm_integral += adaptive(mass, lo, hi, quad_tol * 0.01, 40, report.converged);
        report.portee_integral += adaptive(range, lo, hi, quad_tol * 0.01 * p, 40, report.converged);
        lo = hi;
        hi = std::min(2.0 * hi, t);
    }

    if (!std::isfinite(report.norm_integral) || !std::isfinite(report.portee_integral))
        report.converged = false;
    report.norm_ok = std::abs(report.norm_integral - 1.0) <= tol;
    report.portee_ok = std::abs(report.portee_integral - p) <= tol * p;
    return report;
}

}  // namespace potmap
