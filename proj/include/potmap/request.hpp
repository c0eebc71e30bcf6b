#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "potmap/catalog.hpp"
#include "potmap/engine.hpp"
#include "potmap/kernels.hpp"

namespace potmap {

struct KernelParams {
    KernelKind kind = KernelKind::Gaussian;
    double portee_km = 0.0;
    std::optional<double> beta;
};

/// Every user-steerable parameter of one analysis: stocks, interaction
/// function and range, optional second range for the multi-scale view,
/// framing and resolution, and the cut-off threshold.
struct ComputeRequest {
    std::string dataset;
    std::string numerator;
    std::optional<std::string> denominator;
    KernelParams kernel;
    std::optional<double> portee2_km;
    GridSpec grid;
    double epsilon = CutoffPolicy::kDefaultEpsilon;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// Request rejected by the contract. status() is 422 when the only problems
/// are unprocessable values (Pareto beta <= 3), 400 otherwise.
class ContractError : public std::runtime_error {
public:
    ContractError(std::vector<FieldError> errors, int status);

    const std::vector<FieldError>& errors() const noexcept { return errors_; }
    int status() const noexcept { return status_; }
    nlohmann::json to_json() const;

private:
    std::vector<FieldError> errors_;
    int status_;
};

/// Validates a JSON request body, collecting one error per offending field.
/// Missing epsilon takes `default_epsilon`.
ComputeRequest parse_compute_request(const nlohmann::json& body,
                                     double default_epsilon = CutoffPolicy::kDefaultEpsilon);

/// Canonical JSON form; equal requests serialize to identical bytes.
nlohmann::json to_json(const ComputeRequest& r);

Kernel make_kernel(const KernelParams& params);

struct ComputeSettings {
    unsigned workers = 0;
    std::optional<std::size_t> tabulation_grain;
    std::optional<std::chrono::steady_clock::time_point> deadline;
    bool naive = false;
};

struct ComputedGrid {
    std::string role;  // "numerator" or "denominator"
    int scale = 1;     // 1 for portee_km, 2 for portee2_km
    PotentialGrid grid;
    nlohmann::json payload;
};

/// Runs a validated request against a catalog entry. Grids come back as
/// numerator then denominator at the first portee, then the same pair at the
/// second. Throws NotFoundError for unknown stocks.
std::vector<ComputedGrid> run_request(const CatalogEntry& entry, const ComputeRequest& request,
                                      const ComputeSettings& settings = {});

/// A single grid serializes as its payload; several as {"grids": [...]}.
std::string response_body(const std::vector<ComputedGrid>& grids);

}  // namespace potmap
