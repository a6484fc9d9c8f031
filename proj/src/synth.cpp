#include "lvse/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lvse/errors.hpp"
#include "lvse/io.hpp"
#include "lvse/random.hpp"

namespace lvse {

namespace {

constexpr int kDaysTracked = 366;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stationary AR(1) sequence with one value per day of the year. Each value
// depends only on (seed, stream, day), so any horizon sees the same weather.
std::vector<double> daily_ar(std::uint64_t seed, Stream stream, std::uint64_t tag, double phi,
                             double sd) {
    Rng rng = make_rng(seed, stream, tag);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(kDaysTracked + 1);
    double x = sd * normal(rng);
    for (auto& v : out) {
        v = x;
        x = phi * x + std::sqrt(1.0 - phi * phi) * sd * normal(rng);
    }
    return out;
}

double bump(double hour, double center, double width) {
    double d = std::fmod(hour - center + 36.0, 24.0) - 12.0;  // circular distance
    return std::exp(-0.5 * d * d / (width * width));
}

double raw_shape(double hour, bool weekend) {
    if (weekend)
        return 0.45 + 0.50 * bump(hour, 9.5, 1.5) + 0.35 * bump(hour, 13.0, 2.5) +
               1.05 * bump(hour, 18.5, 1.8);
    return 0.45 + 0.55 * bump(hour, 7.3, 0.9) + 0.25 * bump(hour, 12.5, 2.5) +
           1.10 * bump(hour, 18.7, 1.8);
}

double shape_mean(bool weekend) {
    double sum = 0.0;
    for (int k = 0; k < kStepsPerDay; ++k) sum += raw_shape(k / static_cast<double>(kStepsPerHour), weekend);
    return sum / kStepsPerDay;
}

double seasonal_phase(double day) { return std::cos(kTwoPi * (day - 20.0) / 365.0); }

}  // namespace

// ---------------------------------------------------------------------------

PriceSeries gen_prices(const TimeAxis& axis, std::uint64_t seed, const PriceParams& params) {
    const auto level = daily_ar(seed, Stream::price, 0, 0.7, params.daily_level_sd);
    PriceSeries out{axis, Eigen::VectorXd(static_cast<Eigen::Index>(axis.size()))};
    int cached_day = -1;
    std::array<double, 24> hourly{};
    for (std::size_t t = 0; t < axis.size(); ++t) {
        const int day = day_of_year(axis.minute(t));
        if (day != cached_day) {
            Rng rng = make_rng(seed, Stream::price, 1000 + static_cast<std::uint64_t>(day));
            std::normal_distribution<double> noise(0.0, params.hourly_noise_sd);
            const double day_level = params.base_eur_per_kwh * std::exp(level[static_cast<std::size_t>(day)]);
            for (int h = 0; h < 24; ++h) {
                const double hour = h + 0.5;
                const double shape = 1.0 - params.valley_depth * bump(hour, 3.0, 1.6) +
                                     params.morning_ridge * bump(hour, 8.0, 1.0) +
                                     params.evening_ridge * bump(hour, 18.5, 1.5);
                hourly[static_cast<std::size_t>(h)] =
                    std::max(0.01, day_level * shape * (1.0 + noise(rng)));
            }
            cached_day = day;
        }
        const auto h = static_cast<std::size_t>((axis.minute(t) % kMinutesPerDay) / 60);
        out.eur_per_kwh(static_cast<Eigen::Index>(t)) = hourly[h];
    }
    return out;
}

PriceSeries gen_prices(int year_days, std::uint64_t seed, const PriceParams& params) {
    return gen_prices(TimeAxis({{0, year_days}}), seed, params);
}

std::pair<double, double> daylight_hours(int day, double latitude_deg) {
    const double decl = 23.44 * std::numbers::pi / 180.0 * std::sin(kTwoPi * (284.0 + day) / 365.0);
    const double lat = latitude_deg * std::numbers::pi / 180.0;
    const double cos_w0 = std::clamp(-std::tan(lat) * std::tan(decl), -1.0, 1.0);
    const double half_day = std::acos(cos_w0) * 12.0 / std::numbers::pi;
    return {12.0 - half_day, 12.0 + half_day};
}

WeatherSeries gen_weather(const TimeAxis& axis, std::uint64_t seed, const WeatherParams& params) {
    const auto anomaly = daily_ar(seed, Stream::weather, 0, 0.8, params.anomaly_sd_c);
    const auto cloud = daily_ar(seed, Stream::weather, 1, 0.5, 1.2);
    const auto n = static_cast<Eigen::Index>(axis.size());
    WeatherSeries out{axis, Eigen::VectorXd(n), Eigen::VectorXd(n)};

    const double lat = params.latitude_deg * std::numbers::pi / 180.0;
    int cached_day = -1;
    std::array<double, 24> flicker{};
    for (std::size_t t = 0; t < axis.size(); ++t) {
        const auto minute = axis.minute(t);
        const int day = day_of_year(minute);
        const double hour = hour_of_day(minute);
        const double frac = hour / 24.0;
        if (day != cached_day) {
            Rng rng = make_rng(seed, Stream::weather, 1000 + static_cast<std::uint64_t>(day));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (auto& f : flicker) f = 1.0 - 0.05 * u(rng);
            cached_day = day;
        }
        const auto d = static_cast<std::size_t>(day);

        const double season = seasonal_phase(day + frac);
        const double summerness = 0.5 * (1.0 - season);
        const double daily_amp = params.daily_amplitude_c * (0.6 + 0.8 * summerness);
        const double anom = (1.0 - frac) * anomaly[d] + frac * anomaly[d + 1];
        out.temperature_c(static_cast<Eigen::Index>(t)) =
            params.annual_mean_c - params.annual_amplitude_c * season +
            daily_amp * std::cos(kTwoPi * (hour - 15.0) / 24.0) + anom;

        const auto [sunrise, sunset] = daylight_hours(day, params.latitude_deg);
        double radiation = 0.0;
        if (hour > sunrise && hour < sunset) {
            const double decl =
                23.44 * std::numbers::pi / 180.0 * std::sin(kTwoPi * (284.0 + day) / 365.0);
            const double noon_elevation = std::numbers::pi / 2.0 - lat + decl;
            const double arc = std::sin(std::numbers::pi * (hour - sunrise) / (sunset - sunrise));
            const double clearness = 0.25 + 0.75 / (1.0 + std::exp(-cloud[d]));
            radiation = params.peak_irradiance_w_m2 * std::sin(noon_elevation) * std::pow(arc, 1.5) *
                        clearness * flicker[static_cast<std::size_t>(hour)];
        }
        out.solar_w_m2(static_cast<Eigen::Index>(t)) = radiation;
    }
    return out;
}

WeatherSeries gen_weather(int year_days, std::uint64_t seed, const WeatherParams& params) {
    return gen_weather(TimeAxis({{0, year_days}}), seed, params);
}

// ---------------------------------------------------------------------------

double daily_shape(double hour, bool weekend) {
    static const double weekday_mean = shape_mean(false);
    static const double weekend_mean = shape_mean(true);
    return raw_shape(hour, weekend) / (weekend ? weekend_mean : weekday_mean);
}

CustomerProfile gen_customer(std::size_t index, const WeatherSeries& weather, std::uint64_t seed,
                             const LoadParams& params) {
    Rng rng = make_rng(seed, Stream::customer, index);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    CustomerProfile out;
    const double scale = params.mean_kw * std::exp(params.scale_log_sd * normal(rng) -
                                                   0.5 * params.scale_log_sd * params.scale_log_sd);
    out.heating_share = params.max_heating_share * uniform(rng);
    out.power_factor =
        params.min_power_factor + (params.max_power_factor - params.min_power_factor) * uniform(rng);
    const double q_ratio = std::tan(std::acos(out.power_factor));

    const auto& axis = weather.axis;
    const auto n = static_cast<Eigen::Index>(axis.size());
    out.p_kw.resize(n);
    out.q_kvar.resize(n);

    const double slow_sd = params.slow_noise_sd;
    const double phi = params.slow_noise_phi;
    const double slow_bias = 0.5 * slow_sd * slow_sd;
    const double fast_bias = 0.5 * params.fast_noise_sd * params.fast_noise_sd;
    for (std::size_t s = 0; s < axis.segments().size(); ++s) {
        double slow = slow_sd * normal(rng);
        for (std::size_t t = axis.segment_begin(s); t < axis.segment_end(s); ++t) {
            const auto minute = axis.minute(t);
            const auto i = static_cast<Eigen::Index>(t);
            const double heat =
                std::max(0.0, params.heating_base_c - weather.temperature_c(i)) / params.heating_base_c;
            const double fast = params.fast_noise_sd * normal(rng);
            const double p = scale * daily_shape(hour_of_day(minute), is_weekend(minute)) *
                             (1.0 + out.heating_share * heat) * std::exp(slow - slow_bias) *
                             std::exp(fast - fast_bias);
            out.p_kw(i) = p;
            out.q_kvar(i) = p * q_ratio;
            slow = phi * slow + std::sqrt(1.0 - phi * phi) * slow_sd * normal(rng);
        }
    }
    return out;
}

std::vector<CustomerProfile> gen_base_load(std::size_t customer_count, const WeatherSeries& weather,
                                           std::uint64_t seed, const LoadParams& params) {
    if (customer_count < 1) throw Error("customer_count must be at least 1");
    std::vector<CustomerProfile> out;
    out.reserve(customer_count);
    for (std::size_t i = 0; i < customer_count; ++i) out.push_back(gen_customer(i, weather, seed, params));
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> cheapest_slots(std::span<const double> prices, std::size_t window_begin,
                                        std::size_t window_end, std::size_t slots) {
    if (window_end > prices.size() || window_begin > window_end)
        throw Error("charging window outside the price series");
    if (slots > window_end - window_begin)
        throw InfeasibleRequirement("energy requirement exceeds the plug window");
    std::vector<std::size_t> idx(window_end - window_begin);
    std::iota(idx.begin(), idx.end(), window_begin);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return prices[a] < prices[b]; });
    idx.resize(slots);
    std::sort(idx.begin(), idx.end());
    return idx;
}

EvSchedule gen_ev_schedule(const PriceSeries& prices, const EvFleetParams& fleet, std::uint64_t seed) {
    if (!(fleet.charger_kw > 0.0)) throw Error("charger_kw must be positive");
    const auto& axis = prices.axis;
    const auto n = axis.size();
    EvSchedule out;
    out.kw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    out.active.assign(n, 0);
    const std::span<const double> price(prices.eur_per_kwh.data(), n);
    const double slot_kwh = fleet.charger_kw / kStepsPerHour;

    for (int ev = 0; ev < fleet.count; ++ev) {
        Rng rng = make_rng(seed, Stream::ev, static_cast<std::uint64_t>(ev));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        auto draw_slots = [&] {
            const double kwh = fleet.energy_median_kwh * std::exp(fleet.energy_log_sd * normal(rng));
            return static_cast<std::size_t>(std::lround(kwh / slot_kwh));
        };

        for (std::size_t s = 0; s < axis.segments().size(); ++s) {
            const auto begin = axis.segment_begin(s);
            const auto end = axis.segment_end(s);
            for (std::size_t day = begin; day < end; day += kStepsPerDay) {
                const double u = uniform(rng);
                const double arrive = std::clamp(fleet.arrival_mean_h + fleet.arrival_sd_h * normal(rng), 15.0, 23.5);
                const double depart = std::clamp(fleet.departure_mean_h + fleet.departure_sd_h * normal(rng), 4.5, 9.5);
                std::size_t need = draw_slots();
                if (u >= fleet.plug_probability) continue;

                const auto window_begin = day + static_cast<std::size_t>(std::lround(arrive * kStepsPerHour));
                const auto window_end = day + kStepsPerDay + static_cast<std::size_t>(std::lround(depart * kStepsPerHour));
                if (window_end > end) continue;
                const auto capacity = window_end - window_begin;
                for (int tries = 0; need > capacity; ++tries) {
                    if (tries >= fleet.max_redraws)
                        throw InfeasibleRequirement("EV energy requirement does not fit the plug window after " +
                                                    std::to_string(fleet.max_redraws) + " redraws");
                    need = draw_slots();
                }
                if (need == 0) continue;

                for (auto slot : cheapest_slots(price, window_begin, window_end, need)) {
                    out.kw(static_cast<Eigen::Index>(slot)) += fleet.charger_kw;
                    out.active[slot] = 1;
                }
                out.energy_kwh += static_cast<double>(need) * slot_kwh;
                ++out.sessions;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ScenarioId id) {
    switch (id) {
        case ScenarioId::S1: return "S1";
        case ScenarioId::S2: return "S2";
        case ScenarioId::S3: return "S3";
    }
    return "?";
}

ScenarioId scenario_from_string(const std::string& name) {
    if (name == "S1") return ScenarioId::S1;
    if (name == "S2") return ScenarioId::S2;
    if (name == "S3") return ScenarioId::S3;
    throw ConfigError("unknown scenario '" + name + "'");
}

namespace {

nlohmann::json fleet_json(const EvFleetParams& f) {
    return {{"count", f.count},
            {"charger_kw", f.charger_kw},
            {"energy_median_kwh", f.energy_median_kwh},
            {"energy_log_sd", f.energy_log_sd},
            {"plug_probability", f.plug_probability},
            {"arrival_mean_h", f.arrival_mean_h},
            {"arrival_sd_h", f.arrival_sd_h},
            {"departure_mean_h", f.departure_mean_h},
            {"departure_sd_h", f.departure_sd_h},
            {"max_redraws", f.max_redraws}};
}

EvFleetParams fleet_from_json(const nlohmann::json& j, EvFleetParams f) {
    f.count = j.value("count", f.count);
    f.charger_kw = j.value("charger_kw", f.charger_kw);
    f.energy_median_kwh = j.value("energy_median_kwh", f.energy_median_kwh);
    f.energy_log_sd = j.value("energy_log_sd", f.energy_log_sd);
    f.plug_probability = j.value("plug_probability", f.plug_probability);
    f.arrival_mean_h = j.value("arrival_mean_h", f.arrival_mean_h);
    f.arrival_sd_h = j.value("arrival_sd_h", f.arrival_sd_h);
    f.departure_mean_h = j.value("departure_mean_h", f.departure_mean_h);
    f.departure_sd_h = j.value("departure_sd_h", f.departure_sd_h);
    f.max_redraws = j.value("max_redraws", f.max_redraws);
    return f;
}

}  // namespace

nlohmann::json to_json(const ScenarioParams& p) {
    return {{"aggregate_customers", p.aggregate_customers},
            {"customers_per_leaf", p.customers_per_leaf},
            {"load",
             {{"mean_kw", p.load.mean_kw},
              {"scale_log_sd", p.load.scale_log_sd},
              {"max_heating_share", p.load.max_heating_share},
              {"heating_base_c", p.load.heating_base_c},
              {"slow_noise_sd", p.load.slow_noise_sd},
              {"slow_noise_phi", p.load.slow_noise_phi},
              {"fast_noise_sd", p.load.fast_noise_sd},
              {"min_power_factor", p.load.min_power_factor},
              {"max_power_factor", p.load.max_power_factor}}},
            {"price",
             {{"base_eur_per_kwh", p.price.base_eur_per_kwh},
              {"valley_depth", p.price.valley_depth},
              {"morning_ridge", p.price.morning_ridge},
              {"evening_ridge", p.price.evening_ridge},
              {"daily_level_sd", p.price.daily_level_sd},
              {"hourly_noise_sd", p.price.hourly_noise_sd}}},
            {"weather",
             {{"annual_mean_c", p.weather.annual_mean_c},
              {"annual_amplitude_c", p.weather.annual_amplitude_c},
              {"daily_amplitude_c", p.weather.daily_amplitude_c},
              {"anomaly_sd_c", p.weather.anomaly_sd_c},
              {"latitude_deg", p.weather.latitude_deg},
              {"peak_irradiance_w_m2", p.weather.peak_irradiance_w_m2}}},
            {"adjacent_fleet", fleet_json(p.adjacent_fleet)},
            {"subs_ev", fleet_json(p.subs_ev)}};
}

ScenarioParams scenario_params_from_json(const nlohmann::json& j) {
    ScenarioParams p;
    p.aggregate_customers = j.value("aggregate_customers", p.aggregate_customers);
    p.customers_per_leaf = j.value("customers_per_leaf", p.customers_per_leaf);
    if (j.contains("load")) {
        const auto& l = j["load"];
        p.load.mean_kw = l.value("mean_kw", p.load.mean_kw);
        p.load.scale_log_sd = l.value("scale_log_sd", p.load.scale_log_sd);
        p.load.max_heating_share = l.value("max_heating_share", p.load.max_heating_share);
        p.load.heating_base_c = l.value("heating_base_c", p.load.heating_base_c);
        p.load.slow_noise_sd = l.value("slow_noise_sd", p.load.slow_noise_sd);
        p.load.slow_noise_phi = l.value("slow_noise_phi", p.load.slow_noise_phi);
        p.load.fast_noise_sd = l.value("fast_noise_sd", p.load.fast_noise_sd);
        p.load.min_power_factor = l.value("min_power_factor", p.load.min_power_factor);
        p.load.max_power_factor = l.value("max_power_factor", p.load.max_power_factor);
    }
    if (j.contains("price")) {
        const auto& pr = j["price"];
        p.price.base_eur_per_kwh = pr.value("base_eur_per_kwh", p.price.base_eur_per_kwh);
        p.price.valley_depth = pr.value("valley_depth", p.price.valley_depth);
        p.price.morning_ridge = pr.value("morning_ridge", p.price.morning_ridge);
        p.price.evening_ridge = pr.value("evening_ridge", p.price.evening_ridge);
        p.price.daily_level_sd = pr.value("daily_level_sd", p.price.daily_level_sd);
        p.price.hourly_noise_sd = pr.value("hourly_noise_sd", p.price.hourly_noise_sd);
    }
    if (j.contains("weather")) {
        const auto& w = j["weather"];
        p.weather.annual_mean_c = w.value("annual_mean_c", p.weather.annual_mean_c);
        p.weather.annual_amplitude_c = w.value("annual_amplitude_c", p.weather.annual_amplitude_c);
        p.weather.daily_amplitude_c = w.value("daily_amplitude_c", p.weather.daily_amplitude_c);
        p.weather.anomaly_sd_c = w.value("anomaly_sd_c", p.weather.anomaly_sd_c);
        p.weather.latitude_deg = w.value("latitude_deg", p.weather.latitude_deg);
        p.weather.peak_irradiance_w_m2 = w.value("peak_irradiance_w_m2", p.weather.peak_irradiance_w_m2);
    }
    if (j.contains("adjacent_fleet")) p.adjacent_fleet = fleet_from_json(j["adjacent_fleet"], p.adjacent_fleet);
    if (j.contains("subs_ev")) p.subs_ev = fleet_from_json(j["subs_ev"], p.subs_ev);
    return p;
}

ComplexSeries ScenarioDataset::injections_pu(double base_power_kva) const {
    ComplexSeries out(p_kw.rows(), p_kw.cols());
    for (Eigen::Index t = 0; t < p_kw.rows(); ++t)
        for (Eigen::Index b = 0; b < p_kw.cols(); ++b)
            out(t, b) = Complex{p_kw(t, b), q_kvar(t, b)} / base_power_kva;
    return out;
}

ScenarioDataset assemble_scenario(ScenarioId id, const NetworkModel& net, const TimeAxis& axis,
                                  std::uint64_t seed, const ScenarioParams& params) {
    std::vector<int> aggregates;
    for (const auto& b : net.buses())
        if (b.kind == BusKind::mv_aggregate) aggregates.push_back(b.id);
    if (aggregates.size() != params.aggregate_customers.size())
        throw ConfigError("aggregate customer counts do not match the network");
    const auto& leaves = net.monitored();

    // Customer slots per bus, then a seeded random assignment of customers to slots.
    std::vector<int> slot_bus;
    for (std::size_t a = 0; a < aggregates.size(); ++a)
        slot_bus.insert(slot_bus.end(), static_cast<std::size_t>(params.aggregate_customers[a]), aggregates[a]);
    for (int leaf : leaves)
        slot_bus.insert(slot_bus.end(), static_cast<std::size_t>(params.customers_per_leaf), leaf);
    {
        Rng rng = make_rng(seed, Stream::assignment);
        std::shuffle(slot_bus.begin(), slot_bus.end(), rng);
    }

    ScenarioDataset out;
    out.id = id;
    out.axis = axis;
    for (const auto& b : net.buses()) out.bus_names.push_back(b.name);
    const auto steps = static_cast<Eigen::Index>(axis.size());
    const auto nbus = static_cast<Eigen::Index>(net.bus_count());
    out.weather = gen_weather(axis, derive_seed(seed, {static_cast<std::uint64_t>(Stream::weather)}), params.weather);
    out.price = gen_prices(axis, derive_seed(seed, {static_cast<std::uint64_t>(Stream::price)}), params.price);
    out.p_kw = RealSeries::Zero(steps, nbus);
    out.q_kvar = RealSeries::Zero(steps, nbus);
    out.ev_kw = RealSeries::Zero(steps, nbus);

    std::vector<int> customers_at(net.bus_count(), 0);
    for (std::size_t c = 0; c < slot_bus.size(); ++c) {
        const auto profile = gen_customer(c, out.weather, seed, params.load);
        const auto bus = slot_bus[c];
        out.p_kw.col(bus) += profile.p_kw;
        out.q_kvar.col(bus) += profile.q_kvar;
        ++customers_at[static_cast<std::size_t>(bus)];
    }

    nlohmann::json fleets = nlohmann::json::array();
    auto add_fleet = [&](int bus, const EvFleetParams& fleet) {
        const auto sched = gen_ev_schedule(out.price, fleet, derive_seed(seed, {static_cast<std::uint64_t>(Stream::ev),
                                                                               static_cast<std::uint64_t>(bus)}));
        out.ev_kw.col(bus) = sched.kw;
        out.p_kw.col(bus) += sched.kw;
        fleets.push_back({{"bus", net.buses()[static_cast<std::size_t>(bus)].name},
                          {"count", fleet.count},
                          {"charger_kw", fleet.charger_kw},
                          {"energy_kwh", sched.energy_kwh},
                          {"sessions", sched.sessions}});
    };
    if (id != ScenarioId::S1)
        for (int bus : aggregates) add_fleet(bus, params.adjacent_fleet);
    if (id == ScenarioId::S3)
        for (int leaf : leaves) {
            auto fleet = params.subs_ev;
            fleet.count = customers_at[static_cast<std::size_t>(leaf)];
            add_fleet(leaf, fleet);
        }

    out.flags = (out.ev_kw.array() > 0.0).cast<std::uint8_t>();

    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : axis.segments()) segs.push_back({{"start_day", s.start_day}, {"days", s.days}});
    nlohmann::json per_bus = nlohmann::json::object();
    for (const auto& b : net.buses()) per_bus[b.name] = customers_at[static_cast<std::size_t>(b.id)];
    out.manifest = {{"scenario", to_string(id)},
                    {"seed", seed},
                    {"segments", segs},
                    {"buses", out.bus_names},
                    {"customers_per_bus", per_bus},
                    {"ev_fleets", fleets},
                    {"load_convention", "positive P/Q = consumption"},
                    {"parameters", to_json(params)}};
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> timestamps(const TimeAxis& axis) {
    std::vector<std::string> out;
    out.reserve(axis.size());
    for (auto m : axis.minutes()) out.push_back(iso8601(m));
    return out;
}

}  // namespace

void save_scenario(const ScenarioDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto keys = timestamps(data.axis);
    const auto steps = static_cast<Eigen::Index>(keys.size());
    const auto nbus = static_cast<Eigen::Index>(data.bus_names.size());

    io::CsvTable inj{"timestamp", keys, {}, RealSeries(steps, 2 * (nbus - 1))};
    io::CsvTable ev{"timestamp", keys, {}, RealSeries(steps, nbus - 1)};
    io::CsvTable flags{"timestamp", keys, {}, RealSeries(steps, nbus - 1)};
    Eigen::Index col = 0;
    for (Eigen::Index b = 1; b < nbus; ++b, ++col) {
        const auto& name = data.bus_names[static_cast<std::size_t>(b)];
        inj.columns.push_back(name + "_p_kw");
        inj.columns.push_back(name + "_q_kvar");
        inj.values.col(2 * col) = data.p_kw.col(b);
        inj.values.col(2 * col + 1) = data.q_kvar.col(b);
        ev.columns.push_back(name + "_ev_kw");
        ev.values.col(col) = data.ev_kw.col(b);
        flags.columns.push_back(name);
        flags.values.col(col) = data.flags.col(b).cast<double>();
    }
    io::write_csv(dir / "injections.csv", inj);
    io::write_csv(dir / "ev_power.csv", ev);
    io::write_csv(dir / "flags.csv", flags);

    io::CsvTable price{"timestamp", keys, {"price_eur_per_kwh"}, data.price.eur_per_kwh};
    io::write_csv(dir / "prices.csv", price);
    io::CsvTable weather{"timestamp", keys, {"temperature_c", "solar_w_m2"}, RealSeries(steps, 2)};
    weather.values.col(0) = data.weather.temperature_c;
    weather.values.col(1) = data.weather.solar_w_m2;
    io::write_csv(dir / "weather.csv", weather);
    io::write_json(dir / "manifest.json", data.manifest);
}

ScenarioDataset load_scenario(const std::filesystem::path& dir) {
    ScenarioDataset out;
    out.manifest = io::read_json(dir / "manifest.json");
    out.id = scenario_from_string(out.manifest.at("scenario").get<std::string>());
    out.bus_names = out.manifest.at("buses").get<std::vector<std::string>>();

    const auto inj = io::read_csv(dir / "injections.csv");
    std::vector<std::int64_t> minutes;
    minutes.reserve(inj.keys.size());
    for (const auto& k : inj.keys) minutes.push_back(parse_iso8601(k));
    out.axis = TimeAxis::from_minutes(minutes);

    const auto ev = io::read_csv(dir / "ev_power.csv");
    const auto flags = io::read_csv(dir / "flags.csv");
    const auto price = io::read_csv(dir / "prices.csv");
    const auto weather = io::read_csv(dir / "weather.csv");
    for (const auto* t : {&ev, &flags, &price, &weather})
        if (t->keys != inj.keys) throw AlignmentError("scenario files in " + dir.string() + " are not aligned");

    const auto steps = static_cast<Eigen::Index>(minutes.size());
    const auto nbus = static_cast<Eigen::Index>(out.bus_names.size());
    out.p_kw = RealSeries::Zero(steps, nbus);
    out.q_kvar = RealSeries::Zero(steps, nbus);
    out.ev_kw = RealSeries::Zero(steps, nbus);
    out.flags = FlagSeries::Zero(steps, nbus);
    for (Eigen::Index b = 1; b < nbus; ++b) {
        const auto& name = out.bus_names[static_cast<std::size_t>(b)];
        out.p_kw.col(b) = inj.values.col(inj.column(name + "_p_kw"));
        out.q_kvar.col(b) = inj.values.col(inj.column(name + "_q_kvar"));
        out.ev_kw.col(b) = ev.values.col(ev.column(name + "_ev_kw"));
        out.flags.col(b) = flags.values.col(flags.column(name)).cast<std::uint8_t>();
    }
    out.price = {out.axis, price.values.col(price.column("price_eur_per_kwh"))};
    out.weather = {out.axis, weather.values.col(weather.column("temperature_c")),
                   weather.values.col(weather.column("solar_w_m2"))};
    return out;
}

}  // namespace lvse
