#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "potmap/error.hpp"
#include "potmap/geodesy.hpp"
#include "potmap/quadtree.hpp"

namespace potmap {

/// Stock table over representative points, stored column-wise.
struct Dataset {
    std::string id;
    std::string name;
    std::vector<std::string> variables;
    std::vector<std::string> unit_ids;
    std::vector<GeoPoint> locations;
    /// One column per variable, aligned with `locations`.
    std::vector<std::vector<double>> columns;
    bool has_boundaries = false;

    std::size_t size() const { return locations.size(); }
    bool has_variable(std::string_view name) const;
    /// Throws NotFoundError for an unknown variable.
    std::span<const double> column(std::string_view variable) const;
    std::vector<StockPoint> points() const;
};

/// CSV ingest failure pointing at a 1-based line number (the header is line 1)
/// and a column name.
class CsvError : public ValidationError {
public:
    CsvError(std::size_t line, std::string column, const std::string& message);

    std::size_t line() const noexcept { return line_; }
    const std::string& column() const noexcept { return field(); }

private:
    std::size_t line_;
};

/// Parses `id,lon,lat,<var1>,...` with a header row, comma separators and
/// decimal points. Throws CsvError.
Dataset parse_dataset_csv(std::istream& in, std::string id, std::string name);

/// Dataset ids are slugs: [a-z0-9][a-z0-9_-]{0,63}.
bool is_valid_dataset_id(std::string_view id);

struct DatasetSummary {
    std::string id;
    std::string name;
    std::size_t points = 0;
    std::vector<std::string> variables;
    bool has_boundaries = false;
};

/// A loaded dataset plus per-dataset derived values.
struct CatalogEntry {
    std::shared_ptr<const Dataset> dataset;
    std::optional<double> min_portee_km;
};

/// Directory-backed dataset store.
///
///   <dir>/index.json                  ordered list of dataset ids
///   <dir>/datasets/<id>.json          one serialized dataset per id
///   <dir>/boundaries/<id>.geojson     optional FeatureCollection
///
/// Files are replaced by write-to-temporary and rename. Readers share a lock
/// and hold immutable snapshots; ingest takes the lock exclusively only to
/// swap the finished entry in.
class Catalog {
public:
    /// Opens (creating if needed) the catalog directory and loads its index.
    explicit Catalog(std::filesystem::path dir);

    const std::filesystem::path& directory() const { return dir_; }

    /// Validates, persists and registers a dataset; replaces one with the
    /// same id. On any failure the previous dataset stays untouched.
    DatasetSummary ingest_csv(const std::filesystem::path& csv, const std::string& id,
                              const std::string& name,
                              const std::optional<std::filesystem::path>& boundaries = std::nullopt);
    DatasetSummary ingest(Dataset dataset, const std::optional<std::string>& boundaries_geojson = std::nullopt);

    std::vector<DatasetSummary> list_datasets() const;
    /// Throws NotFoundError.
    std::vector<std::string> list_stocks(const std::string& id) const;
    CatalogEntry get(const std::string& id) const;
    /// GeoJSON text of the boundaries, or empty when none were attached.
    std::optional<std::string> boundaries(const std::string& id) const;

private:
    void load();
    void write_index() const;

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    std::mutex write_mutex_;
    std::vector<std::string> order_;
    std::map<std::string, CatalogEntry, std::less<>> entries_;
};

DatasetSummary summarize(const Dataset& d);

}  // namespace potmap
