#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "lvse/errors.hpp"
#include "lvse/random.hpp"
#include "lvse/synth.hpp"

using namespace lvse;

namespace {

const TimeAxis& short_axis() {
    static const TimeAxis axis({{0, 28}, {182, 28}});
    return axis;
}

double mean_where(const Eigen::VectorXd& v, const TimeAxis& axis, int month) {
    double sum = 0.0;
    long n = 0;
    for (std::size_t t = 0; t < axis.size(); ++t)
        if (month_of(axis.minute(t)) == month) {
            sum += v(static_cast<Eigen::Index>(t));
            ++n;
        }
    return sum / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("prices are hourly blocks, positive and seed dependent") {
    const auto a = gen_prices(365, 1);
    const auto b = gen_prices(365, 2);
    REQUIRE(a.eur_per_kwh.size() == 365 * kStepsPerDay);
    CHECK((a.eur_per_kwh.array() > 0.0).all());
    for (Eigen::Index h = 0; h < a.eur_per_kwh.size(); h += kStepsPerHour)
        for (int k = 1; k < kStepsPerHour; ++k) REQUIRE(a.eur_per_kwh(h + k) == a.eur_per_kwh(h));
    CHECK(a.eur_per_kwh != b.eur_per_kwh);
    CHECK(a.eur_per_kwh == gen_prices(365, 1).eur_per_kwh);
}

TEST_CASE("nightly price minimum falls between 01:00 and 05:00") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto p = gen_prices(365, seed);
        int hits = 0;
        for (int d = 0; d < 365; ++d) {
            int best = 0;
            for (int h = 1; h < 24; ++h)
                if (p.eur_per_kwh(d * kStepsPerDay + h * kStepsPerHour) <
                    p.eur_per_kwh(d * kStepsPerDay + best * kStepsPerHour))
                    best = h;
            hits += best >= 1 && best <= 5;
        }
        CHECK(hits >= static_cast<int>(0.9 * 365));
    }
}

TEST_CASE("weather seasonality and solar geometry") {
    const auto w = gen_weather(365, 9);
    const auto& axis = w.axis;
    CHECK((w.solar_w_m2.array() >= 0.0).all());
    for (int d = 0; d < 365; ++d) CHECK(w.solar_w_m2(d * kStepsPerDay) == 0.0);
    CHECK(mean_where(w.temperature_c, axis, 7) > mean_where(w.temperature_c, axis, 1));

    int off = 0;
    for (int d = 0; d < 365; ++d) {
        const auto day = w.solar_w_m2.segment(d * kStepsPerDay, kStepsPerDay);
        Eigen::Index peak = 0;
        day.maxCoeff(&peak);
        const double hour = static_cast<double>(peak) / kStepsPerHour;
        off += std::abs(hour - 12.0) > 2.0;
    }
    CHECK(off == 0);

    const auto [rise, set] = daylight_hours(172, 55.1);
    CHECK(rise < 4.0);
    CHECK(set > 20.0);
    for (std::size_t t = 0; t < axis.size(); ++t) {
        const auto [r, s] = daylight_hours(day_of_year(axis.minute(t)), 55.1);
        const double h = hour_of_day(axis.minute(t));
        if (h < r || h > s) REQUIRE(w.solar_w_m2(static_cast<Eigen::Index>(t)) == 0.0);
    }
}

TEST_CASE("customer loads") {
    const auto w = gen_weather(short_axis(), 4);

    SUBCASE("determinism") {
        const auto a = gen_base_load(1, w, 7);
        const auto b = gen_base_load(1, w, 7);
        CHECK(a[0].p_kw == b[0].p_kw);
        CHECK(a[0].q_kvar == b[0].q_kvar);
    }
    SUBCASE("power factor band and sign") {
        for (const auto& c : gen_base_load(20, w, 3)) {
            CHECK((c.p_kw.array() >= 0.0).all());
            CHECK(c.power_factor >= 0.9);
            CHECK(c.power_factor <= 0.98);
            const double limit = std::tan(std::acos(0.9));
            CHECK((c.q_kvar.array().abs() <= c.p_kw.array() * limit + 1e-12).all());
        }
    }
    SUBCASE("population profile has an evening peak and winter exceeds summer") {
        const auto pop = gen_base_load(100, w, 21);
        Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.axis.size()));
        for (const auto& c : pop) total += c.p_kw;
        Eigen::VectorXd by_step = Eigen::VectorXd::Zero(kStepsPerDay);
        for (Eigen::Index t = 0; t < total.size(); ++t) by_step(t % kStepsPerDay) += total(t);
        const double mean = by_step.mean();
        const double evening = by_step.segment(17 * kStepsPerHour, 4 * kStepsPerHour).maxCoeff();
        CHECK(evening > 1.3 * mean);

        Eigen::VectorXd heated = Eigen::VectorXd::Zero(total.size());
        for (const auto& c : pop)
            if (c.heating_share > 0.0) heated += c.p_kw;
        CHECK(mean_where(heated, w.axis, 1) > mean_where(heated, w.axis, 7));
    }
    CHECK_THROWS(gen_base_load(0, w, 1));
}

TEST_CASE("daily shape has mean one") {
    for (bool weekend : {false, true}) {
        double sum = 0.0;
        for (int k = 0; k < kStepsPerDay; ++k) sum += daily_shape(k / static_cast<double>(kStepsPerHour), weekend);
        CHECK(sum / kStepsPerDay == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("cheapest slots match an exhaustive placement search") {
    // Two days of hourly prices; the cheapest two hours are 02:00-04:00 on day 2.
    std::vector<double> prices(2 * kStepsPerDay);
    for (std::size_t t = 0; t < prices.size(); ++t) {
        const auto hour = (t / kStepsPerHour) % 24;
        prices[t] = 0.30 + 0.01 * static_cast<double>((hour * 7) % 5);
        if (hour == 2 || hour == 3) prices[t] = 0.10;
    }
    const std::size_t begin = 20 * kStepsPerHour, end = kStepsPerDay + 7 * kStepsPerHour;
    const std::size_t need = 2 * kStepsPerHour;  // 22 kWh at 11 kW
    const auto chosen = cheapest_slots(prices, begin, end, need);

    double best_cost = 1e300;
    std::size_t best_start = 0;
    for (std::size_t s = begin; s + need <= end; ++s) {
        const double cost = std::accumulate(prices.begin() + static_cast<long>(s),
                                            prices.begin() + static_cast<long>(s + need), 0.0);
        if (cost < best_cost - 1e-12) {
            best_cost = cost;
            best_start = s;
        }
    }
    REQUIRE(chosen.size() == need);
    CHECK(best_start == kStepsPerDay + 2 * kStepsPerHour);
    for (std::size_t k = 0; k < need; ++k) CHECK(chosen[k] == best_start + k);
}

TEST_CASE("cheapest slots tie-break and edge cases") {
    const std::vector<double> flat(100, 0.2);
    const auto chosen = cheapest_slots(flat, 10, 60, 5);
    CHECK(chosen == std::vector<std::size_t>{10, 11, 12, 13, 14});
    CHECK(cheapest_slots(flat, 10, 60, 0).empty());
    CHECK_THROWS_AS(cheapest_slots(flat, 10, 20, 11), InfeasibleRequirement);
}

TEST_CASE("charging slots are cheaper than the rest of the window") {
    Rng rng(17);
    const auto p = gen_prices(60, 5);
    const std::span<const double> price(p.eur_per_kwh.data(), static_cast<std::size_t>(p.eur_per_kwh.size()));
    double chosen_sum = 0.0, rest_sum = 0.0;
    long chosen_n = 0, rest_n = 0;
    std::uniform_int_distribution<std::size_t> day(0, 50), len(12, 140);
    for (int k = 0; k < 200; ++k) {
        const auto begin = day(rng) * kStepsPerDay + 19 * kStepsPerHour;
        const auto end = begin + 11 * kStepsPerHour;
        const auto slots = cheapest_slots(price, begin, end, len(rng) % (end - begin));
        std::vector<bool> on(end - begin, false);
        for (auto s : slots) on[s - begin] = true;
        for (std::size_t t = begin; t < end; ++t) {
            if (on[t - begin]) {
                chosen_sum += price[t];
                ++chosen_n;
            } else {
                rest_sum += price[t];
                ++rest_n;
            }
        }
    }
    CHECK(chosen_sum / static_cast<double>(chosen_n) <= rest_sum / static_cast<double>(rest_n));
}

TEST_CASE("EV schedules") {
    const auto prices = gen_prices(short_axis(), 8);
    SUBCASE("zero requirement") {
        EvFleetParams fleet{.count = 5, .charger_kw = 11.0, .energy_median_kwh = 1e-9};
        const auto s = gen_ev_schedule(prices, fleet, 1);
        CHECK(s.kw.isZero());
        CHECK(std::none_of(s.active.begin(), s.active.end(), [](auto a) { return a != 0; }));
        CHECK(s.sessions == 0);
    }
    SUBCASE("energy bookkeeping and flags") {
        EvFleetParams fleet{.count = 10, .charger_kw = 3.7, .energy_median_kwh = 8.0};
        const auto s = gen_ev_schedule(prices, fleet, 2);
        CHECK(s.sessions > 0);
        CHECK(s.kw.sum() / kStepsPerHour == doctest::Approx(s.energy_kwh).epsilon(1e-12));
        for (Eigen::Index t = 0; t < s.kw.size(); ++t)
            REQUIRE((s.active[static_cast<std::size_t>(t)] != 0) == (s.kw(t) > 0.0));
    }
    SUBCASE("infeasible requirement after redraws") {
        EvFleetParams fleet{.count = 1, .charger_kw = 0.1, .energy_median_kwh = 500.0, .energy_log_sd = 0.0,
                            .plug_probability = 1.0};
        CHECK_THROWS_AS(gen_ev_schedule(prices, fleet, 3), InfeasibleRequirement);
    }
}

TEST_CASE("scenario assembly") {
    const auto net = build_reference_network();
    const TimeAxis axis({{0, 7}, {182, 7}});
    const auto s1 = assemble_scenario(ScenarioId::S1, net, axis, 42);
    const auto s2 = assemble_scenario(ScenarioId::S2, net, axis, 42);
    const auto s3 = assemble_scenario(ScenarioId::S3, net, axis, 42);
    const int subs = net.bus_index(kSubsName);
    const auto below = net.subtree(subs);

    CHECK(s1.flags.cast<int>().sum() == 0);
    CHECK((s1.ev_kw.array() == 0.0).all());
    for (int b : below) {
        CHECK(s2.p_kw.col(b) == s1.p_kw.col(b));
        CHECK(s2.q_kvar.col(b) == s1.q_kvar.col(b));
        CHECK(s2.flags.col(b).cast<int>().sum() == 0);
    }
    for (const auto& b : net.buses())
        if (b.kind == BusKind::mv_aggregate) {
            CHECK(s2.p_kw.col(b.id) != s1.p_kw.col(b.id));
            CHECK(s2.q_kvar.col(b.id) == s1.q_kvar.col(b.id));
        }
    CHECK(((s3.flags.array() != 0) == (s3.ev_kw.array() > 0.0)).all());

    // S3 adds exactly the SubS fleets' energy below SubS.
    double fleet_kwh = 0.0;
    for (const auto& f : s3.manifest["ev_fleets"])
        for (int b : below)
            if (f["bus"] == net.buses()[static_cast<std::size_t>(b)].name) fleet_kwh += f["energy_kwh"].get<double>();
    double e1 = 0.0, e3 = 0.0;
    for (int b : below) {
        e1 += s1.p_kw.col(b).sum() / kStepsPerHour;
        e3 += s3.p_kw.col(b).sum() / kStepsPerHour;
    }
    CHECK(fleet_kwh > 0.0);
    CHECK(std::abs((e3 - e1) - fleet_kwh) <= 1e-3 * fleet_kwh);

    // Manifest: S3 lists EVs under SubS, S2 does not.
    auto lists_subs_ev = [&](const ScenarioDataset& s) {
        for (const auto& f : s.manifest["ev_fleets"])
            for (int b : below)
                if (f["bus"] == net.buses()[static_cast<std::size_t>(b)].name) return true;
        return false;
    };
    CHECK_FALSE(lists_subs_ev(s2));
    CHECK(lists_subs_ev(s3));

    // Conservation: total customers and determinism.
    int customers = 0;
    for (const auto& [name, count] : s1.manifest["customers_per_bus"].items()) customers += count.get<int>();
    CHECK(customers == 564);
    const auto again = assemble_scenario(ScenarioId::S3, net, axis, 42);
    CHECK(again.p_kw == s3.p_kw);
    CHECK(again.q_kvar == s3.q_kvar);
}

TEST_CASE("scenario persistence round trip") {
    const auto net = build_reference_network();
    const TimeAxis axis({{0, 2}});
    const auto s = assemble_scenario(ScenarioId::S3, net, axis, 5);
    const auto dir = std::filesystem::temp_directory_path() / "lvse_synth_roundtrip";
    std::filesystem::remove_all(dir);
    save_scenario(s, dir);
    for (const char* f : {"injections.csv", "prices.csv", "weather.csv", "flags.csv", "manifest.json"})
        CHECK(std::filesystem::exists(dir / f));
    const auto back = load_scenario(dir);
    CHECK(back.id == s.id);
    CHECK(back.axis.minutes() == s.axis.minutes());
    CHECK(back.p_kw.isApprox(s.p_kw, 1e-15));
    CHECK(back.flags == s.flags);
    std::filesystem::remove_all(dir);
}

}
