#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace potmap {

enum class KernelKind { Disk, DampedDisk, Gaussian, Pareto };

inline constexpr std::array<KernelKind, 4> kAllKernelKinds = {
    KernelKind::Disk, KernelKind::DampedDisk, KernelKind::Gaussian, KernelKind::Pareto};

inline constexpr double kDefaultParetoBeta = 4.0;

/// Stable wire names: "disk", "damped-disk", "gaussian", "pareto".
std::string_view kernel_name(KernelKind kind);
std::optional<KernelKind> parse_kernel_kind(std::string_view name);

/// Radial interaction function normalized to unit plane integral and
/// calibrated so that its mean range equals the requested portee.
///
///   disk         f = 1/(pi R^2)                 r <= R,  R = 3p/2
///   damped-disk  f = 2/(pi R^2) (1 - r^2/R^2)   r <= R,  R = 15p/8
///   gaussian     f = 1/(pi s^2) exp(-r^2/s^2),           s = 2p/sqrt(pi)
///   pareto       f = c (1 + r/b)^-beta,                  b = p(beta-3)/2,
///                c = (beta-1)(beta-2) / (2 pi b^2)
///
/// The damped disk is a quadratic (Epanechnikov) taper.
class Kernel {
public:
    /// Throws ValidationError for a nonpositive portee or a beta supplied to a
    /// non-Pareto kind, UnprocessableError for Pareto with beta <= 3.
    static Kernel make(KernelKind kind, double portee_km,
                       std::optional<double> beta = std::nullopt);

    KernelKind kind() const { return kind_; }
    double portee_km() const { return portee_; }
    /// R for the disk families, sigma for the Gaussian, b for Pareto.
    double shape_km() const { return shape_; }
    double norm() const { return norm_; }
    /// Pareto exponent; empty for the other kinds.
    std::optional<double> beta() const;

    /// Support radius for compact kernels, empty otherwise.
    std::optional<double> support_km() const;

    /// f(r), r in km, result in 1/km^2.
    double operator()(double r_km) const {
        switch (kind_) {
            case KernelKind::Disk:
                return r_km <= shape_ ? norm_ : 0.0;
            case KernelKind::DampedDisk: {
                if (r_km > shape_) return 0.0;
                const double q = r_km * inv_shape_;
                return norm_ * (1.0 - q * q);
            }
            case KernelKind::Gaussian: {
                const double q = r_km * inv_shape_;
                return norm_ * std::exp(-q * q);
            }
            case KernelKind::Pareto:
                return norm_ * std::pow(1.0 + r_km * inv_shape_, -beta_);
        }
        return 0.0;
    }

    double eval(double r_km) const { return (*this)(r_km); }

    /// Upper bounds on the plane mass (int f 2 pi r dr) and on the mean-range
    /// contribution (int f 2 pi r^2 dr) lying beyond radius t.
    double tail_mass_bound(double t_km) const;
    double tail_range_bound(double t_km) const;

private:
    Kernel(KernelKind kind, double portee, double shape, double norm, double beta)
        : kind_(kind), portee_(portee), shape_(shape), inv_shape_(1.0 / shape), norm_(norm),
          beta_(beta) {}

    KernelKind kind_;
    double portee_;
    double shape_;
    double inv_shape_;
    double norm_;
    double beta_;
};

struct KernelReport {
    double norm_integral = 0.0;
    double portee_integral = 0.0;
    /// Radius beyond which the integrand was dropped (the support radius for
    /// compact kernels).
    double truncation_km = 0.0;
    bool norm_ok = false;
    bool portee_ok = false;
    bool converged = true;

    bool passed() const { return norm_ok && portee_ok && converged; }
};

/// Integrates the two calibration constraints numerically (adaptive
/// Gauss-Kronrod on geometrically growing panels, tail dropped where its
/// analytic bound is below tol/10) and checks them against 1 and the portee
/// at relative tolerance `tol`.
KernelReport verify_kernel(const Kernel& k, double tol);

}  // namespace potmap
