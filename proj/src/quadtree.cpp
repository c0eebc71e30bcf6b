#include "potmap/quadtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "potmap/error.hpp"

namespace potmap {

namespace {

constexpr double kAcosSlackRad = 4e-8;

void fill_edge_trig(QuadNode& n) {
    n.lat_lo_rad = n.bbox.south * kDegToRad;
    n.lat_hi_rad = n.bbox.north * kDegToRad;
    n.sin_lat_lo = std::sin(n.lat_lo_rad);
    n.cos_lat_lo = std::cos(n.lat_lo_rad);
    n.tan_lat_lo = std::tan(n.lat_lo_rad);
    n.sin_lat_hi = std::sin(n.lat_hi_rad);
    n.cos_lat_hi = std::cos(n.lat_hi_rad);
    n.tan_lat_hi = std::tan(n.lat_hi_rad);
    n.lon_lo_rad = n.bbox.west * kDegToRad;
    n.lon_hi_rad = n.bbox.east * kDegToRad;
    n.sin_lon_lo = std::sin(n.lon_lo_rad);
    n.cos_lon_lo = std::cos(n.lon_lo_rad);
    n.sin_lon_hi = std::sin(n.lon_hi_rad);
    n.cos_lon_hi = std::cos(n.lon_hi_rad);
}

// Largest cosine of the angle between m and a point of the meridian segment
// at longitude (sin_l, cos_l) spanning the node's latitudes.
double max_cos_to_meridian(const NodeProbe& m, const QuadNode& n, double sin_l, double cos_l) {
    const double cos_d = cos_l * m.cos_lon + sin_l * m.sin_lon;
    const double a = m.trig.sin_lat;
    const double b = m.trig.cos_lat * cos_d;
    // The maximum over the full meridian sits at latitude atan2(a, b); it is
    // only reachable on this edge when b > 0 and tan(lo) <= a/b <= tan(hi).
    if (b > 0.0 && b * n.tan_lat_lo <= a && a <= b * n.tan_lat_hi)
        return std::sqrt(a * a + b * b);
    const double at_lo = a * n.sin_lat_lo + b * n.cos_lat_lo;
    const double at_hi = a * n.sin_lat_hi + b * n.cos_lat_hi;
    return std::max(at_lo, at_hi);
}

void insertion_sort(std::array<std::pair<double, std::int32_t>, 4>& items, int count) {
    for (int i = 1; i < count; ++i) {
        auto v = items[i];
        int j = i - 1;
        while (j >= 0 && items[j].first > v.first) {
            items[j + 1] = items[j];
            --j;
        }
        items[j + 1] = v;
    }
}

struct Traversal {
    const QuadTree& tree;
    const Kernel& kernel;
    const CutoffPolicy& policy;
    const DistanceProvider& dist;
    const NodeProbe& probe;
    TraversalStats* stats;
    double phi = 0.0;
    double discarded = 0.0;

    double subtree_exact(const QuadNode& n) const {
        double sum = 0.0;
        const auto stocks = tree.stocks();
        for (auto i = n.begin; i < n.end; ++i)
            sum += stocks[i] * kernel(fast_distance(i, probe.trig, dist.cache, dist.sphere));
        return sum;
    }

    bool try_prune(const QuadNode& n, double d_min) {
        if (!policy.prunes()) return false;
        const double bound = n.total_stock * kernel(d_min);
        const bool skip =
            bound == 0.0 || (phi > 0.0 && discarded + bound <= policy.epsilon * phi);
        if (!skip) return false;
        discarded += bound;
        if (stats) {
            ++stats->prunes;
            stats->discarded_bound += bound;
            if (stats->instrument) {
                const double exact = subtree_exact(n);
                stats->discarded_exact += exact;
                if (exact > 0.0)
                    stats->worst_prune_ratio = std::max(stats->worst_prune_ratio, exact / phi);
            }
        }
        return true;
    }

    void add(double contribution) {
        const double before = phi;
        phi += contribution;
        if (stats && (phi < before || (contribution > 0.0 && !(phi > 0.0))))
            stats->accumulator_monotone = false;
    }

    void visit(const QuadNode& n) {
        if (stats) ++stats->nodes_visited;
        if (n.leaf) {
            const auto stocks = tree.stocks();
            for (auto i = n.begin; i < n.end; ++i)
                add(stocks[i] * kernel(fast_distance(i, probe.trig, dist.cache, dist.sphere)));
            if (stats) stats->points_evaluated += n.size();
            return;
        }
        std::array<std::pair<double, std::int32_t>, 4> order;
        int count = 0;
        for (auto c : n.children)
            if (c != QuadNode::kNoChild)
                order[count++] = {min_distance_to_node(probe, tree.node(c), dist.sphere), c};
        insertion_sort(order, count);
        for (int i = 0; i < count; ++i) {
            const auto& child = tree.node(order[i].second);
            if (try_prune(child, order[i].first)) continue;
            visit(child);
        }
    }
};

}  // namespace

NodeProbe NodeProbe::from(const GeoPoint& p) {
    const double lon = p.lon * kDegToRad;
    return NodeProbe{Probe::from(p), p.lat * kDegToRad, std::sin(lon), std::cos(lon)};
}

QuadTree::QuadTree(std::span<const GeoPoint> locations, std::span<const double> stocks,
                   std::size_t leaf_capacity, std::size_t max_depth)
    : leaf_capacity_(std::max<std::size_t>(leaf_capacity, 1)), max_depth_(max_depth) {
    if (locations.empty()) throw ValidationError("points", "cannot build a tree over no points");
    if (locations.size() != stocks.size())
        throw ValidationError("stocks", "one stock value is required per point");
    if (locations.size() > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("points", "too many points");
    for (std::size_t i = 0; i < stocks.size(); ++i)
        if (!std::isfinite(stocks[i]) || stocks[i] < 0.0)
            throw ValidationError("stocks", fmt::format("stock of point {} is negative or not finite", i));

    BBox box{locations[0].lon, locations[0].lat, locations[0].lon, locations[0].lat};
    for (const auto& p : locations) {
        box.west = std::min(box.west, p.lon);
        box.east = std::max(box.east, p.lon);
        box.south = std::min(box.south, p.lat);
        box.north = std::max(box.north, p.lat);
    }

    source_.resize(locations.size());
    for (std::uint32_t i = 0; i < source_.size(); ++i) source_[i] = i;
    // Build over source_ permutations, reading the inputs through it.
    locations_.assign(locations.begin(), locations.end());
    stocks_.assign(stocks.begin(), stocks.end());
    nodes_.reserve(2 * locations.size() / leaf_capacity_ + 1);
    build(0, static_cast<std::uint32_t>(source_.size()), box, 0);

    std::vector<GeoPoint> ordered_loc(source_.size());
    std::vector<double> ordered_stock(source_.size());
    for (std::size_t i = 0; i < source_.size(); ++i) {
        ordered_loc[i] = locations[source_[i]];
        ordered_stock[i] = stocks[source_[i]];
    }
    locations_ = std::move(ordered_loc);
    stocks_ = std::move(ordered_stock);
}

std::int32_t QuadTree::build(std::uint32_t begin, std::uint32_t end, const BBox& box,
                             std::size_t depth) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    {
        auto& n = nodes_.back();
        n.bbox = box;
        n.begin = begin;
        n.end = end;
        n.depth = static_cast<std::uint16_t>(depth);
        fill_edge_trig(n);
    }

    double total = 0.0;
    double lat_sum = 0.0;
    double lon_sum = 0.0;

    if (end - begin <= leaf_capacity_ || depth >= max_depth_) {
        for (auto i = begin; i < end; ++i) {
            const double s = stocks_[source_[i]];
            total += s;
            lat_sum += s * locations_[source_[i]].lat;
            lon_sum += s * locations_[source_[i]].lon;
        }
    } else {
        const double mid_lat = 0.5 * (box.south + box.north);
        const double mid_lon = 0.5 * (box.west + box.east);
        std::array<std::vector<std::uint32_t>, 4> buckets;
        for (auto i = begin; i < end; ++i) {
            const auto& p = locations_[source_[i]];
            const bool north = p.lat >= mid_lat;
            const bool east = p.lon >= mid_lon;
            const int q = north ? (east ? kNorthEast : kNorthWest) : (east ? kSouthEast : kSouthWest);
            buckets[q].push_back(source_[i]);
        }
        const std::array<BBox, 4> boxes = {
            BBox{box.west, mid_lat, mid_lon, box.north},
            BBox{mid_lon, mid_lat, box.east, box.north},
            BBox{box.west, box.south, mid_lon, mid_lat},
            BBox{mid_lon, box.south, box.east, mid_lat},
        };
        auto cursor = begin;
        std::array<std::int32_t, 4> children{QuadNode::kNoChild, QuadNode::kNoChild,
                                             QuadNode::kNoChild, QuadNode::kNoChild};
        std::array<std::uint32_t, 4> starts{};
        for (int q = 0; q < 4; ++q) {
            starts[q] = cursor;
            std::copy(buckets[q].begin(), buckets[q].end(), source_.begin() + cursor);
            cursor += static_cast<std::uint32_t>(buckets[q].size());
        }
        for (int q = 0; q < 4; ++q) {
            if (buckets[q].empty()) continue;
            const auto count = static_cast<std::uint32_t>(buckets[q].size());
            buckets[q] = {};
            children[q] = build(starts[q], starts[q] + count, boxes[q], depth + 1);
        }
        for (auto c : children) {
            if (c == QuadNode::kNoChild) continue;
            const auto& child = nodes_[c];
            total += child.total_stock;
            lat_sum += child.total_stock * child.centroid.lat;
            lon_sum += child.total_stock * child.centroid.lon;
        }
        nodes_[index].children = children;
        nodes_[index].leaf = false;
    }

    auto& n = nodes_[index];
    n.total_stock = total;
    if (total > 0.0) {
        n.centroid = GeoPoint{lat_sum / total, lon_sum / total};
    } else {
        double la = 0.0, lo = 0.0;
        for (auto i = begin; i < end; ++i) {
            la += locations_[source_[i]].lat;
            lo += locations_[source_[i]].lon;
        }
        n.centroid = GeoPoint{la / (end - begin), lo / (end - begin)};
    }
    return index;
}

std::size_t QuadTree::depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max<std::size_t>(d, n.depth);
    return d;
}

QuadTree build_quadtree(std::span<const StockPoint> points, std::string_view variable,
                        std::size_t leaf_capacity) {
    if (points.empty()) throw ValidationError("points", "cannot build a tree over no points");
    std::vector<GeoPoint> loc;
    std::vector<double> stock;
    loc.reserve(points.size());
    stock.reserve(points.size());
    for (const auto& p : points) {
        auto it = p.stocks.find(variable);
        if (it == p.stocks.end())
            throw ValidationError("variable",
                                  fmt::format("point '{}' has no value for '{}'", p.id, variable));
        loc.push_back(p.location);
        stock.push_back(it->second);
    }
    return QuadTree(loc, stock, leaf_capacity);
}

double min_distance_to_node(const NodeProbe& m, const QuadNode& n, const SphereModel& sphere) {
    double angle;
    if (m.trig.lon_rad >= n.lon_lo_rad && m.trig.lon_rad <= n.lon_hi_rad) {
        // Same meridian as the nearest box point: pure latitude offset.
        if (m.lat_rad < n.lat_lo_rad)
            angle = n.lat_lo_rad - m.lat_rad;
        else if (m.lat_rad > n.lat_hi_rad)
            angle = m.lat_rad - n.lat_hi_rad;
        else
            return 0.0;
    } else {
        // Outside the longitude band the nearest point lies on a meridian edge.
        const double c = std::max(max_cos_to_meridian(m, n, n.sin_lon_lo, n.cos_lon_lo),
                                  max_cos_to_meridian(m, n, n.sin_lon_hi, n.cos_lon_hi));
        angle = std::acos(std::clamp(c, -1.0, 1.0));
    }
    return std::max(0.0, angle - kAcosSlackRad) * sphere.radius_km;
}

double min_distance_to_node(const GeoPoint& m, const QuadNode& node, const SphereModel& sphere) {
    return min_distance_to_node(NodeProbe::from(m), node, sphere);
}

CutoffPolicy CutoffPolicy::make(double epsilon, bool enabled) {
    if (!std::isfinite(epsilon) || epsilon < 0.0)
        throw ValidationError("epsilon", fmt::format("epsilon must be >= 0, got {}", epsilon));
    return CutoffPolicy{epsilon, enabled};
}

double evaluate_potential(const NodeProbe& m, const QuadTree& tree, const Kernel& k,
                          const CutoffPolicy& policy, const DistanceProvider& dist,
                          TraversalStats* stats) {
    Traversal t{tree, k, policy, dist, m, stats};
    t.visit(tree.root());
    return t.phi;
}

double evaluate_potential(const GeoPoint& m, const QuadTree& tree, const Kernel& k,
                          const CutoffPolicy& policy, const DistanceProvider& dist,
                          TraversalStats* stats) {
    return evaluate_potential(NodeProbe::from(m), tree, k, policy, dist, stats);
}

double nearest_neighbor_km(const QuadTree& tree, std::size_t i, const DistanceProvider& dist) {
    if (tree.locations().size() < 2)
        throw ValidationError("points", "nearest neighbor needs at least two points");
    const auto probe = NodeProbe::from(tree.locations()[i]);
    double best = std::numeric_limits<double>::infinity();

    auto visit = [&](auto&& self, const QuadNode& n) -> void {
        if (n.leaf) {
            for (auto j = n.begin; j < n.end; ++j) {
                if (j == i) continue;
                best = std::min(best, fast_distance(j, probe.trig, dist.cache, dist.sphere));
            }
            return;
        }
        std::array<std::pair<double, std::int32_t>, 4> order;
        int count = 0;
        for (auto c : n.children)
            if (c != QuadNode::kNoChild)
                order[count++] = {min_distance_to_node(probe, tree.node(c), dist.sphere), c};
        insertion_sort(order, count);
        for (int k = 0; k < count; ++k) {
            if (order[k].first > best) break;
            self(self, tree.node(order[k].second));
        }
    };
    visit(visit, tree.root());
    return best;
}

}  // namespace potmap
