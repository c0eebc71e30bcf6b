#pragma once

#include <cstdint>
#include <string>

#include "potmap/catalog.hpp"

namespace potmap {

/// Default extent of synthetic clouds: roughly western and central Europe.
inline constexpr BBox kSyntheticExtent{-10.0, 35.0, 30.0, 60.0};

/// Seeded cloud of `n` points uniform in lon/lat over `extent`, with one
/// stock column "stock" drawn uniformly from [1, 1000).
Dataset make_uniform_dataset(std::size_t n, const BBox& extent = kSyntheticExtent,
                             std::uint64_t seed = 20070101, std::string id = "synthetic");

/// Points on a regular lattice with the given spacing in km (north-south and
/// along the central parallel), unit stocks.
Dataset make_lattice_dataset(int rows, int cols, double spacing_km, const GeoPoint& origin,
                             std::string id = "lattice");

}  // namespace potmap
