#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tiered {

inline constexpr std::size_t kPredictors = 5;

/// X1..X5, stored 0-based.
///   NVMe: threads, distinct block addresses, request size (B), request count, address range (B)
///   HDD:  processes, stripe count, stripes per disk, stripe size (B), file size (B)
using Predictors = std::array<double, kPredictors>;

enum class DeviceFamily : std::uint8_t { Nvme, Hdd };
enum class Device : std::uint8_t { NvmeRead, NvmeWrite, HddRead, HddWrite };
enum class Provenance : std::uint8_t { PaperTable, Fitted };

DeviceFamily family_of(Device device);
std::string_view to_string(Device device);
Device device_from_string(std::string_view name);  // "nvme-write", "hdd_read", ...

/// A regression term: product of the listed predictors (0-based, ascending).
using Term = std::vector<std::size_t>;

/// Terms of a model with an implicit leading intercept.
struct ModelTermSet {
    std::vector<Term> terms;

    std::size_t n_coefficients() const noexcept { return terms.size() + 1; }
    /// Index of `term` among the coefficients (intercept is 0), if present.
    std::optional<std::size_t> coefficient_index(const Term& term) const;
    std::vector<std::string> names() const;  // "(Intercept)", "x1", "x1:x3", ...
};

/// "x3:x1" -> {0, 2}. Throws ConfigError on malformed names.
Term parse_term(std::string_view name);
std::string term_name(const Term& term);

/// Expands a model formula the way R does: `a*b*c` contributes every
/// non-empty subset of {a, b, c}, `a:b` just the interaction, groups joined
/// by `+`. Duplicates are dropped; terms are ordered by degree, then by first
/// appearance. Variables are x1..x5 (case-insensitive).
ModelTermSet parse_formula(std::string_view formula);

/// Formula behind the published NVMe models: X1*X3*X4 + X5*X4*X3.
ModelTermSet nvme_term_set();
/// Formula behind the published HDD models: X3*X4 + X5*X1*X2.
ModelTermSet hdd_term_set();

struct FitStatistics {
    double r_squared = 0.0;
    double residual_standard_error = 0.0;
    std::size_t n_samples = 0;
    std::size_t degrees_of_freedom = 0;
};

struct DeviceModel {
    Device device = Device::NvmeWrite;
    ModelTermSet term_set;
    std::vector<double> coefficients;  // [0] is the intercept
    std::vector<double> std_errors;    // empty when unknown
    std::vector<double> t_values;
    Provenance provenance = Provenance::PaperTable;
    std::optional<FitStatistics> fit;

    double coefficient(std::string_view term) const;  // "x1:x3:x4" or "(Intercept)"
};

/// Published coefficient estimates for one device.
DeviceModel load_paper_model(Device device);

struct Prediction {
    double seconds = 0.0;
    /// Set when the value is not positive or an input lies outside the
    /// envelope the published models were trained on.
    bool range_warning = false;
};

/// intercept + sum_k c_k * prod(x in term k). `x` must hold 5 predictors.
Prediction predict(const DeviceModel& model, std::span<const double> x);

/// Mean time of one request (NVMe: total / request count) or one stripe
/// (HDD: total / (stripe count * stripes per disk)), floored at `floor_seconds`.
double per_request_seconds(const DeviceModel& model, std::span<const double> x,
                           double floor_seconds = 1e-6);

/// True when x lies inside the published training envelope of the family.
bool in_training_envelope(DeviceFamily family, std::span<const double> x);

struct TrainingSample {
    Predictors x{};
    double observed_time = 0.0;  // seconds
};

/// Ordinary least squares. Throws NumericalError when there are too few
/// samples or the design matrix is rank deficient (message names the
/// collinear terms).
DeviceModel fit(Device device, const ModelTermSet& term_set, std::span<const TrainingSample> samples);

/// Column `term` of the design matrix evaluated at x (1 for the intercept slot).
double term_value(const Term& term, std::span<const double> x);

// Training CSV: header `x1,x2,x3,x4,x5,y_seconds`.
std::vector<TrainingSample> parse_training(std::istream& in);
std::vector<TrainingSample> load_training(const std::filesystem::path& path);
void write_training(std::ostream& out, std::span<const TrainingSample> samples);

nlohmann::json to_json(const DeviceModel& model);
DeviceModel model_from_json(const nlohmann::json& j);

}  // namespace tiered
