#pragma once

#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace potmap {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Point on the sphere in degrees. Longitude is normalized into (-180, 180].
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    /// Validates latitude and normalizes longitude; throws ValidationError.
    static GeoPoint make(double lat, double lon);

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Wraps any finite longitude into (-180, 180].
double normalize_lon(double lon_deg);

struct SphereModel {
    double radius_km = 6371.0;

    static SphereModel make(double radius_km);
};

/// Great-circle distance using the spherical law of cosines, arccos argument
/// clamped to [-1, 1].
double orthodromic_distance(const GeoPoint& a, const GeoPoint& b,
                            const SphereModel& sphere = {});

/// Per-evaluation-point trig, computed once and reused against every cached
/// point (one per grid row/cell in the engine).
struct Probe {
    double sin_lat;
    double cos_lat;
    double lon_rad;

    static Probe from(const GeoPoint& p);
};

/// Precomputed latitude trig for a fixed point set, plus an optional table of
/// cos over [0, 2*pi) whose entry for an angle is cos of its bin's lower bound.
/// Immutable after construction.
class TrigCache {
public:
    static constexpr std::size_t kDefaultGrain = std::size_t{1} << 20;

    /// `grain` empty disables tabulation (exact mode). Throws when grain < 2.
    explicit TrigCache(std::span<const GeoPoint> points,
                       std::optional<std::size_t> grain = std::nullopt);

    std::size_t size() const { return sin_lat_.size(); }
    bool tabulated() const { return !cos_table_.empty(); }
    std::size_t grain() const { return cos_table_.size(); }

    double sin_lat(std::size_t i) const { return sin_lat_[i]; }
    double cos_lat(std::size_t i) const { return cos_lat_[i]; }
    double lon_rad(std::size_t i) const { return lon_rad_[i]; }

    /// Tabulated cosine of an arbitrary angle (radians); requires tabulated().
    double table_cos(double angle_rad) const;

    std::span<const double> table() const { return cos_table_; }

private:
    std::vector<double> sin_lat_;
    std::vector<double> cos_lat_;
    std::vector<double> lon_rad_;
    std::vector<double> cos_table_;
    double bins_per_rad_ = 0.0;
};

/// Distance from cached point `i` to `b`. In exact mode this is bit-identical
/// to orthodromic_distance(point_i, b).
double fast_distance(std::size_t i, const Probe& b, const TrigCache& cache,
                     const SphereModel& sphere = {});
double fast_distance(std::size_t i, const GeoPoint& b, const TrigCache& cache,
                     const SphereModel& sphere = {});

/// Worst-case |fast - exact| in km for a tabulated cache of the given grain.
///
/// Flooring the longitude difference to its bin is the same as moving the
/// probe along its parallel by less than one bin width h = 2*pi/grain, so by
/// the triangle inequality the distance changes by at most r*h. A small
/// allowance covers arccos rounding near zero separation, where both paths
/// lose about sqrt(machine epsilon) of relative precision.
double tabulation_error_bound_km(std::size_t grain, const SphereModel& sphere = {});

/// Same bound on the cosine itself: |table_cos(x) - cos(x)| <= 2*pi/grain.
double tabulation_cos_bound(std::size_t grain);

}  // namespace potmap
