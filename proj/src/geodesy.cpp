#include "potmap/geodesy.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "potmap/error.hpp"

namespace potmap {

namespace {

// sin^2 + cos^2 rarely rounds to exactly 1, so coincident points are caught
// before the arccos. Both distance paths go through here to stay bit-identical.
inline double central_angle(double sin_a, double cos_a, double sin_b, double cos_b, double dlon,
                            double cos_dlon) {
    if (dlon == 0.0 && sin_a == sin_b && cos_a == cos_b) return 0.0;
    const double c = sin_a * sin_b + cos_a * cos_b * cos_dlon;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

double normalize_lon(double lon_deg) {
    double lon = std::fmod(lon_deg, 360.0);
    if (lon <= -180.0) lon += 360.0;
    if (lon > 180.0) lon -= 360.0;
    return lon;
}

GeoPoint GeoPoint::make(double lat, double lon) {
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0)
        throw ValidationError("lat", fmt::format("latitude {} outside [-90, 90]", lat));
    if (!std::isfinite(lon))
        throw ValidationError("lon", "longitude is not finite");
    return GeoPoint{lat, normalize_lon(lon)};
}

SphereModel SphereModel::make(double radius_km) {
    if (!std::isfinite(radius_km) || radius_km <= 0.0)
        throw ValidationError("radius_km", "sphere radius must be positive");
    return SphereModel{radius_km};
}

double orthodromic_distance(const GeoPoint& a, const GeoPoint& b, const SphereModel& sphere) {
    const double lat_a = a.lat * kDegToRad;
    const double lat_b = b.lat * kDegToRad;
    const double dlon = b.lon * kDegToRad - a.lon * kDegToRad;
    return central_angle(std::sin(lat_a), std::cos(lat_a), std::sin(lat_b), std::cos(lat_b), dlon,
                         std::cos(dlon)) *
           sphere.radius_km;
}

Probe Probe::from(const GeoPoint& p) {
    const double lat = p.lat * kDegToRad;
    return Probe{std::sin(lat), std::cos(lat), p.lon * kDegToRad};
}

TrigCache::TrigCache(std::span<const GeoPoint> points, std::optional<std::size_t> grain) {
    if (grain && *grain < 2)
        throw ValidationError("grain", fmt::format("tabulation grain must be >= 2, got {}", *grain));

    sin_lat_.reserve(points.size());
    cos_lat_.reserve(points.size());
    lon_rad_.reserve(points.size());
    for (const auto& p : points) {
        const double lat = p.lat * kDegToRad;
        sin_lat_.push_back(std::sin(lat));
        cos_lat_.push_back(std::cos(lat));
        lon_rad_.push_back(p.lon * kDegToRad);
    }

    if (grain) {
        const double width = 2.0 * std::numbers::pi / static_cast<double>(*grain);
        cos_table_.resize(*grain);
        for (std::size_t k = 0; k < *grain; ++k)
            cos_table_[k] = std::cos(static_cast<double>(k) * width);
        bins_per_rad_ = static_cast<double>(*grain) / (2.0 * std::numbers::pi);
    }
}

double TrigCache::table_cos(double angle_rad) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double a = std::fmod(angle_rad, two_pi);
    if (a < 0.0) a += two_pi;
    auto bin = static_cast<std::size_t>(a * bins_per_rad_);
    // a * bins_per_rad_ can round up to exactly grain for a just below 2*pi.
    if (bin >= cos_table_.size()) bin = cos_table_.size() - 1;
    return cos_table_[bin];
}

double fast_distance(std::size_t i, const Probe& b, const TrigCache& cache,
                     const SphereModel& sphere) {
    const double dlon = b.lon_rad - cache.lon_rad(i);
    const double cos_dlon = cache.tabulated() ? cache.table_cos(dlon) : std::cos(dlon);
    return central_angle(cache.sin_lat(i), cache.cos_lat(i), b.sin_lat, b.cos_lat, dlon, cos_dlon) *
           sphere.radius_km;
}

double fast_distance(std::size_t i, const GeoPoint& b, const TrigCache& cache,
                     const SphereModel& sphere) {
    return fast_distance(i, Probe::from(b), cache, sphere);
}

double tabulation_cos_bound(std::size_t grain) {
    return 2.0 * std::numbers::pi / static_cast<double>(grain);
}

double tabulation_error_bound_km(std::size_t grain, const SphereModel& sphere) {
    const double rounding = 4.0 * std::sqrt(DBL_EPSILON);
    return sphere.radius_km * (tabulation_cos_bound(grain) + rounding);
}

}  // namespace potmap
