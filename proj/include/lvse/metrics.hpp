#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "lvse/grid.hpp"
#include "lvse/synth.hpp"

namespace lvse::metrics {

using Series = Eigen::Ref<const Eigen::VectorXd>;

// q = 0.01, 0.02, ..., 0.99
std::vector<double> quantile_grid();
bool is_standard_grid(const std::vector<double>& levels);

// Per-bus quantile predictions: values[j] is N x Q for levels[0..Q).
struct QuantileForecast {
    std::vector<double> levels;
    std::vector<RealSeries> values;
};

double rmse(Series y, Series yhat);
Eigen::VectorXd rmse_per_bus(const RealSeries& y, const RealSeries& yhat);

double pinball_loss(double y, double yhat, double q);
// Mean over time and the standard grid; `quantiles` is N x 99.
double pinball(Series y, const RealSeries& quantiles, const std::vector<double>& levels);
Eigen::VectorXd pinball_per_bus(const RealSeries& y, const QuantileForecast& forecast);

// Time-averaged interval score.
double winkler(Series y, Series lower, Series upper, double alpha = 0.1);
Eigen::VectorXd winkler_per_bus(const RealSeries& y, const RealSeries& lower, const RealSeries& upper,
                                double alpha = 0.1);

struct CoverageWidth {
    double coverage = 0.0;
    double width = 0.0;
    double width_active = 0.0;    // NaN when no flagged steps
    double width_inactive = 0.0;  // NaN when every step is flagged
    long active_steps = 0;
};

CoverageWidth coverage_and_width(Series y, Series lower, Series upper,
                                 const std::vector<bool>* flags = nullptr);

struct Aggregate {
    double avg = 0.0;
    double min = 0.0;
    double max = 0.0;
};

// NaN entries (e.g. a bus with no flagged steps) are skipped.
Aggregate aggregate(const Eigen::VectorXd& per_bus);

struct MetricsReport {
    std::vector<std::string> buses;
    double alpha = 0.1;
    Eigen::VectorXd rmse, pinball, winkler, coverage, width, width_active, width_inactive;

    static const std::vector<std::string>& metric_names();
    const Eigen::VectorXd& metric(const std::string& name) const;
};

MetricsReport evaluate(const std::vector<std::string>& buses, const RealSeries& y, const RealSeries& point,
                       const RealSeries& lower, const RealSeries& upper, const QuantileForecast& quantiles,
                       const FlagSeries& flags, double alpha = 0.1);

// One row per bus followed by avg / min / max rows.
void write_csv(const MetricsReport& report, const std::filesystem::path& path);
nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace lvse::metrics
