#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "potmap/geodesy.hpp"
#include "potmap/kernels.hpp"
#include "potmap/quadtree.hpp"

namespace potmap {

/// Raster layout: the bbox ("cadrage") split into width x height cells. Values
/// sit at cell centers, rows run north to south and columns west to east.
struct GridSpec {
    static constexpr int kMaxSide = 4096;

    BBox bbox;
    int width = 1;
    int height = 1;

    /// Throws ValidationError naming "grid.bbox", "grid.width" or "grid.height".
    static GridSpec make(const BBox& bbox, int width, int height);

    std::size_t cells() const { return static_cast<std::size_t>(width) * height; }
    double cell_width_deg() const { return bbox.width() / width; }
    double cell_height_deg() const { return bbox.height() / height; }
    double row_lat(int row) const { return bbox.north - (row + 0.5) * cell_height_deg(); }
    double col_lon(int col) const { return bbox.west + (col + 0.5) * cell_width_deg(); }
    GeoPoint cell_center(int row, int col) const { return GeoPoint{row_lat(row), col_lon(col)}; }
    /// r^2 * dlat * dlon * cos(lat_center), angles in radians.
    double cell_area_km2(int row, const SphereModel& sphere = {}) const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct GridMeta {
    std::string dataset;
    std::string variable;
    KernelKind kernel = KernelKind::Gaussian;
    double portee_km = 0.0;
    std::optional<double> beta;
    double epsilon = 0.0;
    /// Width of the border band where the missing outside stocks bias Φ.
    double margin_km = 0.0;
    /// Twice the largest nearest-neighbour spacing; empty for < 2 points.
    std::optional<double> min_portee_km;
    bool below_min_portee = false;
    bool naive = false;
};

struct PotentialGrid {
    GridSpec spec;
    std::vector<double> values;
    GridMeta meta;
    double compute_seconds = 0.0;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * spec.width + col]; }
};

/// Cellwise derived grid (ratio or difference) with an undefined marker.
struct RatioGrid {
    GridSpec spec;
    std::vector<double> values;
    std::vector<std::uint8_t> defined;
    double portee_km = 0.0;

    bool is_defined(std::size_t i) const { return defined[i] != 0; }
};

using DifferenceGrid = RatioGrid;

struct ComputeOptions {
    CutoffPolicy policy;
    /// Bin count of the cos(dlon) table; empty for exact distances.
    std::optional<std::size_t> tabulation_grain;
    /// 0 selects std::thread::hardware_concurrency().
    unsigned workers = 0;
    SphereModel sphere;
    std::size_t leaf_capacity = QuadTree::kDefaultLeafCapacity;
    std::optional<std::chrono::steady_clock::time_point> deadline;
    /// Precomputed min_portee for the dataset; computed on demand otherwise.
    std::optional<double> min_portee_km;
};

unsigned resolve_workers(unsigned requested);

/// Tree and trig cache for one stock column, reusable across kernels and
/// grids. Immutable.
class PreparedStock {
public:
    PreparedStock(std::span<const GeoPoint> locations, std::span<const double> stocks,
                  std::optional<std::size_t> tabulation_grain = std::nullopt,
                  std::size_t leaf_capacity = QuadTree::kDefaultLeafCapacity);

    const QuadTree& tree() const { return tree_; }
    const TrigCache& cache() const { return cache_; }
    double total_stock() const { return tree_.root().total_stock; }

private:
    QuadTree tree_;
    TrigCache cache_;
};

PotentialGrid compute_grid(const PreparedStock& stock, const Kernel& k, const GridSpec& spec,
                           const ComputeOptions& options = {});
PotentialGrid compute_grid(std::span<const GeoPoint> locations, std::span<const double> stocks,
                           const Kernel& k, const GridSpec& spec, const ComputeOptions& options = {});
PotentialGrid compute_grid(std::span<const StockPoint> points, std::string_view variable,
                           const Kernel& k, const GridSpec& spec, const ComputeOptions& options = {});

/// Direct double loop over cells and points in input order, exact distances,
/// no pruning. The reference the accelerated path is checked against.
PotentialGrid compute_grid_naive(std::span<const GeoPoint> locations, std::span<const double> stocks,
                                 const Kernel& k, const GridSpec& spec, unsigned workers = 1,
                                 const SphereModel& sphere = {});

inline constexpr double kDefaultRatioFloor = 1e-9;

/// num / den cellwise; cells with den < floor * max(den) are undefined.
/// Throws ValidationError when grids or portees differ.
RatioGrid ratio_grid(const PotentialGrid& num, const PotentialGrid& den,
                     double floor = kDefaultRatioFloor);

/// z2 - z1 cellwise. Negative cells are local peaks at the shorter range,
/// positive ones local hollows.
DifferenceGrid diff_grid(const RatioGrid& z2, const RatioGrid& z1);

struct MassReport {
    double grid_mass = 0.0;
    double stock_mass = 0.0;
    /// (grid_mass - stock_mass) / stock_mass; 0 when both are zero.
    double relative_gap = 0.0;
};

MassReport mass_check(const PotentialGrid& grid, std::span<const double> stocks,
                      const SphereModel& sphere = {});

/// Twice the largest nearest-neighbour distance, or empty for fewer than two
/// points.
std::optional<double> nyquist_min_portee(std::span<const GeoPoint> points,
                                         const SphereModel& sphere = {});

}  // namespace potmap
