#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "potmap/geodesy.hpp"
#include "potmap/kernels.hpp"

namespace potmap {

/// A territorial unit's representative point and its stocks.
struct StockPoint {
    std::string id;
    GeoPoint location;
    std::map<std::string, double, std::less<>> stocks;
};

/// Closed lat/lon rectangle in degrees.
struct BBox {
    double west = 0.0;
    double south = 0.0;
    double east = 0.0;
    double north = 0.0;

    bool contains(const GeoPoint& p) const {
        return p.lat >= south && p.lat <= north && p.lon >= west && p.lon <= east;
    }
    double width() const { return east - west; }
    double height() const { return north - south; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Child slots, north row first.
enum Quadrant : int { kNorthWest = 0, kNorthEast = 1, kSouthWest = 2, kSouthEast = 3 };

struct QuadNode {
    static constexpr std::int32_t kNoChild = -1;

    BBox bbox;
    double total_stock = 0.0;
    GeoPoint centroid;
    std::array<std::int32_t, 4> children{kNoChild, kNoChild, kNoChild, kNoChild};
    // Points of the subtree are contiguous in tree order.
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::uint16_t depth = 0;
    bool leaf = true;

    // Edge trig, cached for the distance bound.
    double lat_lo_rad = 0.0, lat_hi_rad = 0.0;
    double sin_lat_lo = 0.0, cos_lat_lo = 0.0, tan_lat_lo = 0.0;
    double sin_lat_hi = 0.0, cos_lat_hi = 0.0, tan_lat_hi = 0.0;
    double lon_lo_rad = 0.0, lon_hi_rad = 0.0;
    double sin_lon_lo = 0.0, cos_lon_lo = 0.0;
    double sin_lon_hi = 0.0, cos_lon_hi = 0.0;

    std::size_t size() const { return end - begin; }
};

/// Evaluation point with every trig term the traversal needs.
struct NodeProbe {
    Probe trig;
    double lat_rad;
    double sin_lon;
    double cos_lon;

    static NodeProbe from(const GeoPoint& p);
};

/// Region quadtree over stock points, split at coordinate midpoints.
/// Immutable after construction; safe to share across threads.
class QuadTree {
public:
    static constexpr std::size_t kDefaultLeafCapacity = 8;
    static constexpr std::size_t kDefaultMaxDepth = 24;

    /// Throws ValidationError on empty input, size mismatch, or negative stock.
    QuadTree(std::span<const GeoPoint> locations, std::span<const double> stocks,
             std::size_t leaf_capacity = kDefaultLeafCapacity,
             std::size_t max_depth = kDefaultMaxDepth);

    const QuadNode& root() const { return nodes_.front(); }
    const QuadNode& node(std::size_t i) const { return nodes_[i]; }
    std::span<const QuadNode> nodes() const { return nodes_; }

    /// Points in tree order (leaf by leaf).
    std::span<const GeoPoint> locations() const { return locations_; }
    std::span<const double> stocks() const { return stocks_; }
    /// Input index of each point in tree order.
    std::span<const std::uint32_t> source_index() const { return source_; }

    std::size_t leaf_capacity() const { return leaf_capacity_; }
    std::size_t max_depth() const { return max_depth_; }
    std::size_t depth() const;

private:
    std::int32_t build(std::uint32_t begin, std::uint32_t end, const BBox& box, std::size_t depth);

    std::vector<QuadNode> nodes_;
    std::vector<GeoPoint> locations_;
    std::vector<double> stocks_;
    std::vector<std::uint32_t> source_;
    std::size_t leaf_capacity_;
    std::size_t max_depth_;
};

/// Builds the tree for one stock variable. Throws ValidationError when the
/// list is empty or a point lacks the variable.
QuadTree build_quadtree(std::span<const StockPoint> points, std::string_view variable,
                        std::size_t leaf_capacity = QuadTree::kDefaultLeafCapacity);

/// Lower bound on the great-circle distance from `m` to any point of the
/// node's rectangle; 0 when m lies inside it. The bound is exact up to a
/// 4e-8 rad allowance for arccos rounding in the distances it is compared to.
double min_distance_to_node(const NodeProbe& m, const QuadNode& node,
                            const SphereModel& sphere = {});
double min_distance_to_node(const GeoPoint& m, const QuadNode& node,
                            const SphereModel& sphere = {});

struct CutoffPolicy {
    static constexpr double kDefaultEpsilon = 1e-3;

    double epsilon = kDefaultEpsilon;
    bool enabled = true;

    static CutoffPolicy make(double epsilon, bool enabled = true);
    static CutoffPolicy exact() { return CutoffPolicy{0.0, false}; }

    bool prunes() const { return enabled && epsilon > 0.0; }
};

/// Point distances against a TrigCache built over tree.locations().
struct DistanceProvider {
    const TrigCache& cache;
    SphereModel sphere;
};

struct TraversalStats {
    std::size_t nodes_visited = 0;
    std::size_t points_evaluated = 0;
    std::size_t prunes = 0;
    /// Sum of the bounds total_stock * f(d_min) of pruned subtrees.
    double discarded_bound = 0.0;
    /// Exact contribution of pruned subtrees; only filled when `instrument`.
    double discarded_exact = 0.0;
    /// Largest ratio, over individual prunes, of the exact discarded
    /// contribution to the accumulator at that moment. Needs `instrument`.
    double worst_prune_ratio = 0.0;
    /// The accumulator never decreased and was positive after the first
    /// nonzero contribution.
    bool accumulator_monotone = true;
    bool instrument = false;
};

/// Potential at `m`: depth-first, children visited nearest first. A subtree is
/// skipped when its bound total_stock * f(d_min) is zero, or when the running
/// sum of skipped bounds plus this one stays within epsilon times the
/// accumulated potential. With pruning off this is the exact sum.
double evaluate_potential(const NodeProbe& m, const QuadTree& tree, const Kernel& k,
                          const CutoffPolicy& policy, const DistanceProvider& dist,
                          TraversalStats* stats = nullptr);
double evaluate_potential(const GeoPoint& m, const QuadTree& tree, const Kernel& k,
                          const CutoffPolicy& policy, const DistanceProvider& dist,
                          TraversalStats* stats = nullptr);

/// Distance from tree point `i` (tree order) to its nearest other point.
/// Requires at least two points.
double nearest_neighbor_km(const QuadTree& tree, std::size_t i, const DistanceProvider& dist);

}  // namespace potmap
