#include "potmap/synthetic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace potmap {

Dataset make_uniform_dataset(std::size_t n, const BBox& extent, std::uint64_t seed, std::string id) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lon(extent.west, extent.east);
    std::uniform_real_distribution<double> lat(extent.south, extent.north);
    std::uniform_real_distribution<double> stock(1.0, 1000.0);

    Dataset d;
    d.id = std::move(id);
    d.name = fmt::format("uniform cloud n={} seed={}", n, seed);
    d.variables = {"stock"};
    d.columns.resize(1);
    d.unit_ids.reserve(n);
    d.locations.reserve(n);
    d.columns[0].reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = lon(rng);
        const double y = lat(rng);
        d.unit_ids.push_back(fmt::format("u{}", i));
        d.locations.push_back(GeoPoint{y, x});
        d.columns[0].push_back(stock(rng));
    }
    return d;
}

Dataset make_lattice_dataset(int rows, int cols, double spacing_km, const GeoPoint& origin,
                             std::string id) {
    const SphereModel sphere;
    const double dlat = spacing_km / sphere.radius_km * kRadToDeg;
    Dataset d;
    d.id = std::move(id);
    d.name = fmt::format("{}x{} lattice, {} km", rows, cols, spacing_km);
    d.variables = {"stock"};
    d.columns.resize(1);
    for (int r = 0; r < rows; ++r) {
        const double lat = origin.lat + r * dlat;
        const double dlon = spacing_km / (sphere.radius_km * std::cos(lat * kDegToRad)) * kRadToDeg;
        for (int c = 0; c < cols; ++c) {
            d.unit_ids.push_back(fmt::format("r{}c{}", r, c));
            d.locations.push_back(GeoPoint{lat, normalize_lon(origin.lon + c * dlon)});
            d.columns[0].push_back(1.0);
        }
    }
    return d;
}

}  // namespace potmap
