#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "lvse/grid.hpp"
#include "lvse/timeline.hpp"

namespace lvse {

using FlagSeries = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Exogenous series

struct PriceParams {
    double base_eur_per_kwh = 0.28;
    double valley_depth = 0.35;   // relative dip around 03:00
    double morning_ridge = 0.20;  // around 08:00
    double evening_ridge = 0.35;  // around 18:30
    double daily_level_sd = 0.12; // log-sd of the day-to-day level (AR(1))
    double hourly_noise_sd = 0.04;
};

// Retail price per 5-minute step; constant within each clock hour.
struct PriceSeries {
    TimeAxis axis;
    Eigen::VectorXd eur_per_kwh;
};

PriceSeries gen_prices(const TimeAxis& axis, std::uint64_t seed, const PriceParams& params = {});
PriceSeries gen_prices(int year_days, std::uint64_t seed, const PriceParams& params = {});

struct WeatherParams {
    double annual_mean_c = 7.5;
    double annual_amplitude_c = 9.5;
    double daily_amplitude_c = 3.0;
    double anomaly_sd_c = 2.5;
    double latitude_deg = 55.1;
    double peak_irradiance_w_m2 = 1000.0;
};

struct WeatherSeries {
    TimeAxis axis;
    Eigen::VectorXd temperature_c;
    Eigen::VectorXd solar_w_m2;
};

WeatherSeries gen_weather(const TimeAxis& axis, std::uint64_t seed, const WeatherParams& params = {});
WeatherSeries gen_weather(int year_days, std::uint64_t seed, const WeatherParams& params = {});

// Sunrise and sunset hours (local solar time) for a day of the year.
std::pair<double, double> daylight_hours(int day_of_year, double latitude_deg);

// ---------------------------------------------------------------------------
// Residential load

struct LoadParams {
    double mean_kw = 0.45;          // before heating
    double scale_log_sd = 0.35;     // between-customer spread
    double max_heating_share = 0.9;
    double heating_base_c = 16.0;   // heating index = max(0, base - T) / base
    double slow_noise_sd = 0.30;    // AR(1) log-noise, ~4 h memory
    double slow_noise_phi = 0.98;
    double fast_noise_sd = 0.35;    // i.i.d. log-noise per step
    double min_power_factor = 0.90;
    double max_power_factor = 0.98;
};

struct CustomerProfile {
    Eigen::VectorXd p_kw;
    Eigen::VectorXd q_kvar;
    double heating_share = 0.0;
    double power_factor = 1.0;
};

// Mean-one daily double-peak shape at the given hour.
double daily_shape(double hour, bool weekend);

CustomerProfile gen_customer(std::size_t index, const WeatherSeries& weather, std::uint64_t seed,
                             const LoadParams& params = {});
std::vector<CustomerProfile> gen_base_load(std::size_t customer_count, const WeatherSeries& weather,
                                           std::uint64_t seed, const LoadParams& params = {});

// ---------------------------------------------------------------------------
// EV smart charging

struct EvFleetParams {
    int count = 0;
    double charger_kw = 11.0;
    double energy_median_kwh = 8.0;
    double energy_log_sd = 0.45;
    double plug_probability = 0.7;
    double arrival_mean_h = 18.0;
    double arrival_sd_h = 1.5;
    double departure_mean_h = 7.0;  // next morning
    double departure_sd_h = 0.75;
    int max_redraws = 20;
};

// Greedy cost-minimizing placement: the cheapest `slots` steps inside
// [window_begin, window_end), ties broken by the earliest step.
std::vector<std::size_t> cheapest_slots(std::span<const double> prices, std::size_t window_begin,
                                        std::size_t window_end, std::size_t slots);

struct EvSchedule {
    Eigen::VectorXd kw;       // summed over the fleet
    std::vector<std::uint8_t> active;  // kw > 0
    double energy_kwh = 0.0;  // delivered energy, equals the (slot-quantized) requirement
    int sessions = 0;
};

// One fleet attached to one bus. Overnight sessions whose departure falls
// outside the arrival's segment are not generated.
EvSchedule gen_ev_schedule(const PriceSeries& prices, const EvFleetParams& fleet, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Scenarios

enum class ScenarioId { S1, S2, S3 };
std::string to_string(ScenarioId id);
ScenarioId scenario_from_string(const std::string& name);

struct ScenarioParams {
    // Customers per aggregate substation (SubA..SubE) and per monitored leaf
    // below SubS; totals 564.
    std::vector<int> aggregate_customers{120, 96, 110, 90, 100};
    int customers_per_leaf = 8;
    LoadParams load;
    PriceParams price;
    WeatherParams weather;
    EvFleetParams adjacent_fleet{.count = 24, .charger_kw = 11.0, .energy_median_kwh = 9.0};
    // One EV per customer below SubS in S3; count is set per leaf.
    EvFleetParams subs_ev{.count = 0, .charger_kw = 3.7, .energy_median_kwh = 8.0};
};

nlohmann::json to_json(const ScenarioParams& params);
ScenarioParams scenario_params_from_json(const nlohmann::json& j);

struct ScenarioDataset {
    ScenarioId id = ScenarioId::S1;
    TimeAxis axis;
    std::vector<std::string> bus_names;
    RealSeries p_kw;    // T x buses, load convention
    RealSeries q_kvar;
    RealSeries ev_kw;   // EV share of p_kw
    FlagSeries flags;   // EV charging active at the bus
    PriceSeries price;
    WeatherSeries weather;
    nlohmann::json manifest;

    // Complex injections in pu (load convention) for the power flow.
    ComplexSeries injections_pu(double base_power_kva) const;
};

ScenarioDataset assemble_scenario(ScenarioId id, const NetworkModel& net, const TimeAxis& axis,
                                  std::uint64_t seed, const ScenarioParams& params = {});

void save_scenario(const ScenarioDataset& data, const std::filesystem::path& dir);
ScenarioDataset load_scenario(const std::filesystem::path& dir);

}  // namespace lvse
