#include "potmap/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "potmap/engine.hpp"

namespace potmap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && trim(cur).empty()) {
            cur.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? cur : std::string(trim(cur)));
            cur.clear();
            was_quoted = false;
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw CsvError(line_no, "", "unterminated quoted field");
    fields.push_back(was_quoted ? cur : std::string(trim(cur)));
    return fields;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

void write_atomically(const fs::path& target, const std::string& content) {
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
        out << content;
        out.flush();
        if (!out) throw IoError(fmt::format("write failed for {}", tmp.string()));
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError(fmt::format("cannot replace {}: {}", target.string(), ec.message()));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", p.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json dataset_to_json(const Dataset& d) {
    json j;
    j["id"] = d.id;
    j["name"] = d.name;
    j["variables"] = d.variables;
    j["has_boundaries"] = d.has_boundaries;
    j["units"] = d.unit_ids;
    json lon = json::array(), lat = json::array();
    for (const auto& p : d.locations) {
        lon.push_back(p.lon);
        lat.push_back(p.lat);
    }
    j["lon"] = std::move(lon);
    j["lat"] = std::move(lat);
    j["columns"] = d.columns;
    return j;
}

Dataset dataset_from_json(const json& j) {
    Dataset d;
    d.id = j.at("id").get<std::string>();
    d.name = j.at("name").get<std::string>();
    d.variables = j.at("variables").get<std::vector<std::string>>();
    d.has_boundaries = j.value("has_boundaries", false);
    d.unit_ids = j.at("units").get<std::vector<std::string>>();
    const auto lon = j.at("lon").get<std::vector<double>>();
    const auto lat = j.at("lat").get<std::vector<double>>();
    d.columns = j.at("columns").get<std::vector<std::vector<double>>>();
    if (lon.size() != d.unit_ids.size() || lat.size() != d.unit_ids.size() ||
        d.columns.size() != d.variables.size())
        throw IoError(fmt::format("dataset file for '{}' is inconsistent", d.id));
    for (const auto& col : d.columns)
        if (col.size() != d.unit_ids.size())
            throw IoError(fmt::format("dataset file for '{}' is inconsistent", d.id));
    d.locations.reserve(lon.size());
    for (std::size_t i = 0; i < lon.size(); ++i) d.locations.push_back(GeoPoint{lat[i], lon[i]});
    return d;
}

CatalogEntry make_entry(std::shared_ptr<const Dataset> d) {
    CatalogEntry e;
    e.min_portee_km = nyquist_min_portee(d->locations);
    e.dataset = std::move(d);
    return e;
}

}  // namespace

bool Dataset::has_variable(std::string_view v) const {
    return std::find(variables.begin(), variables.end(), v) != variables.end();
}

std::span<const double> Dataset::column(std::string_view v) const {
    auto it = std::find(variables.begin(), variables.end(), v);
    if (it == variables.end())
        throw NotFoundError(fmt::format("dataset '{}' has no stock '{}'", id, v));
    return columns[static_cast<std::size_t>(it - variables.begin())];
}

std::vector<StockPoint> Dataset::points() const {
    std::vector<StockPoint> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
        out[i].id = unit_ids[i];
        out[i].location = locations[i];
        for (std::size_t v = 0; v < variables.size(); ++v) out[i].stocks[variables[v]] = columns[v][i];
    }
    return out;
}

namespace {

std::string csv_message(std::size_t line, const std::string& column, const std::string& message) {
    if (column.empty()) return fmt::format("line {}: {}", line, message);
    return fmt::format("line {}, column '{}': {}", line, column, message);
}

}  // namespace

CsvError::CsvError(std::size_t line, std::string column, const std::string& message)
    : ValidationError(column, csv_message(line, column, message)), line_(line) {}

bool is_valid_dataset_id(std::string_view id) {
    if (id.empty() || id.size() > 64) return false;
    auto alnum = [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); };
    if (!alnum(id.front())) return false;
    return std::all_of(id.begin(), id.end(), [&](char c) { return alnum(c) || c == '-' || c == '_'; });
}

Dataset parse_dataset_csv(std::istream& in, std::string id, std::string name) {
    if (!is_valid_dataset_id(id))
        throw ValidationError("id", fmt::format("'{}' is not a valid dataset id", id));

    Dataset d;
    d.id = std::move(id);
    d.name = std::move(name);

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (line_no == 1) {
            header = split_record(line, line_no);
            break;
        }
    }
    if (header.empty()) throw CsvError(1, "", "missing header row");
    if (header.size() < 4 || header[0] != "id" || header[1] != "lon" || header[2] != "lat")
        throw CsvError(1, "", "header must be id,lon,lat followed by at least one stock column");

    std::set<std::string, std::less<>> seen_vars;
    for (std::size_t c = 3; c < header.size(); ++c) {
        if (header[c].empty()) throw CsvError(1, fmt::format("#{}", c + 1), "empty stock name");
        if (header[c] == "id" || header[c] == "lon" || header[c] == "lat" ||
            !seen_vars.insert(header[c]).second)
            throw CsvError(1, header[c], "duplicate column name");
        d.variables.push_back(header[c]);
    }
    d.columns.resize(d.variables.size());

    std::unordered_map<std::string, std::size_t> seen_units;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_record(line, line_no);
        if (fields.size() != header.size())
            throw CsvError(line_no, "",
                           fmt::format("expected {} fields, found {}", header.size(), fields.size()));

        const std::string& unit = fields[0];
        if (unit.empty()) throw CsvError(line_no, "id", "empty unit id");
        if (auto [it, inserted] = seen_units.emplace(unit, line_no); !inserted)
            throw CsvError(line_no, "id",
                           fmt::format("duplicate unit id '{}' (first seen on line {})", unit, it->second));

        const auto lon = parse_number(fields[1]);
        if (!lon) throw CsvError(line_no, "lon", fmt::format("'{}' is not a number", fields[1]));
        if (*lon < -180.0 || *lon > 180.0)
            throw CsvError(line_no, "lon", fmt::format("longitude {} outside [-180, 180]", *lon));
        const auto lat = parse_number(fields[2]);
        if (!lat) throw CsvError(line_no, "lat", fmt::format("'{}' is not a number", fields[2]));
        if (*lat < -90.0 || *lat > 90.0)
            throw CsvError(line_no, "lat", fmt::format("latitude {} outside [-90, 90]", *lat));

        d.unit_ids.push_back(unit);
        d.locations.push_back(GeoPoint{*lat, normalize_lon(*lon)});
        for (std::size_t v = 0; v < d.variables.size(); ++v) {
            const auto& raw = fields[v + 3];
            const auto value = parse_number(raw);
            if (!value)
                throw CsvError(line_no, d.variables[v], fmt::format("'{}' is not a number", raw));
            if (*value < 0.0)
                throw CsvError(line_no, d.variables[v], fmt::format("negative stock {}", *value));
            d.columns[v].push_back(*value);
        }
    }
    if (d.unit_ids.empty()) throw CsvError(line_no, "", "no data rows");
    return d;
}

DatasetSummary summarize(const Dataset& d) {
    return DatasetSummary{d.id, d.name, d.size(), d.variables, d.has_boundaries};
}

Catalog::Catalog(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_ / "datasets", ec);
    if (!ec) fs::create_directories(dir_ / "boundaries", ec);
    if (ec) throw IoError(fmt::format("cannot create catalog at {}: {}", dir_.string(), ec.message()));
    load();
}

void Catalog::load() {
    const auto index_path = dir_ / "index.json";
    if (!fs::exists(index_path)) return;
    json index;
    try {
        index = json::parse(read_file(index_path));
    } catch (const json::exception& e) {
        throw IoError(fmt::format("corrupt catalog index: {}", e.what()));
    }
    for (const auto& id_json : index.at("datasets")) {
        const auto id = id_json.get<std::string>();
        Dataset d;
        try {
            d = dataset_from_json(json::parse(read_file(dir_ / "datasets" / (id + ".json"))));
        } catch (const json::exception& e) {
            throw IoError(fmt::format("corrupt dataset '{}': {}", id, e.what()));
        }
        order_.push_back(id);
        entries_[id] = make_entry(std::make_shared<const Dataset>(std::move(d)));
    }
}

void Catalog::write_index() const {
    json index;
    index["datasets"] = order_;
    write_atomically(dir_ / "index.json", index.dump(2) + "\n");
}

DatasetSummary Catalog::ingest_csv(const fs::path& csv, const std::string& id, const std::string& name,
                                   const std::optional<fs::path>& boundaries) {
    std::ifstream in(csv, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", csv.string()));
    Dataset d = parse_dataset_csv(in, id, name);
    std::optional<std::string> geojson;
    if (boundaries) geojson = read_file(*boundaries);
    return ingest(std::move(d), geojson);
}

DatasetSummary Catalog::ingest(Dataset dataset, const std::optional<std::string>& boundaries_geojson) {
    if (!is_valid_dataset_id(dataset.id))
        throw ValidationError("id", fmt::format("'{}' is not a valid dataset id", dataset.id));
    if (boundaries_geojson) {
        json gj;
        try {
            gj = json::parse(*boundaries_geojson);
        } catch (const json::exception& e) {
            throw ValidationError("boundaries", fmt::format("boundaries are not valid JSON: {}", e.what()));
        }
        if (!gj.is_object() || gj.value("type", "") != "FeatureCollection" ||
            !gj.contains("features") || !gj["features"].is_array())
            throw ValidationError("boundaries", "boundaries must be a GeoJSON FeatureCollection");
        dataset.has_boundaries = true;
    }

    auto shared = std::make_shared<const Dataset>(std::move(dataset));
    auto entry = make_entry(shared);
    const auto summary = summarize(*shared);

    std::lock_guard writer(write_mutex_);
    const auto& id = shared->id;
    const auto boundary_path = dir_ / "boundaries" / (id + ".geojson");
    if (boundaries_geojson) write_atomically(boundary_path, *boundaries_geojson);
    write_atomically(dir_ / "datasets" / (id + ".json"), dataset_to_json(*shared).dump() + "\n");
    if (!boundaries_geojson) {
        std::error_code ec;
        fs::remove(boundary_path, ec);
    }

    std::unique_lock lock(mutex_);
    if (std::find(order_.begin(), order_.end(), id) == order_.end()) order_.push_back(id);
    entries_[id] = std::move(entry);
    write_index();
    return summary;
}

std::vector<DatasetSummary> Catalog::list_datasets() const {
    std::shared_lock lock(mutex_);
    std::vector<DatasetSummary> out;
    out.reserve(order_.size());
    for (const auto& id : order_) out.push_back(summarize(*entries_.at(id).dataset));
    return out;
}

std::vector<std::string> Catalog::list_stocks(const std::string& id) const {
    return get(id).dataset->variables;
}

CatalogEntry Catalog::get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw NotFoundError(fmt::format("unknown dataset '{}'", id));
    return it->second;
}

std::optional<std::string> Catalog::boundaries(const std::string& id) const {
    const auto entry = get(id);
    if (!entry.dataset->has_boundaries) return std::nullopt;
    return read_file(dir_ / "boundaries" / (id + ".geojson"));
}

}  // namespace potmap
