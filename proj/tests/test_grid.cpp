#include <cmath>

#include "doctest.h"
#include "lvse/errors.hpp"
#include "lvse/grid.hpp"
#include "support/oracles.hpp"

using namespace lvse;

TEST_SUITE("grid") {

TEST_CASE("reference network structure") {
    const auto net = build_reference_network();
    int slacks = 0, aggregates = 0;
    for (const auto& b : net.buses()) {
        slacks += b.kind == BusKind::slack;
        aggregates += b.kind == BusKind::mv_aggregate;
        if (b.monitored) CHECK(b.kind == BusKind::lv_node);
    }
    CHECK(slacks == 1);
    CHECK(aggregates == 5);
    CHECK(net.lines().size() == net.bus_count() - 1);
    CHECK(net.monitored().size() == 6);
    // Every monitored leaf sits below SubS.
    const auto below = net.subtree(net.bus_index(kSubsName));
    for (int m : net.monitored()) CHECK(std::find(below.begin(), below.end(), m) != below.end());
    for (const auto& l : net.lines()) CHECK(l.impedance.real() > 0.0);

    nlohmann::json a, b;
    to_json(a, net);
    to_json(b, build_reference_network());
    CHECK(a == b);
}

TEST_CASE("network json round trip") {
    const auto net = build_reference_network();
    nlohmann::json j;
    to_json(j, net);
    const auto back = network_from_json(j);
    nlohmann::json k;
    to_json(k, back);
    CHECK(j == k);
    CHECK(back.monitored() == net.monitored());
}

TEST_CASE("invalid networks are rejected") {
    using B = Bus;
    CHECK_THROWS_AS(NetworkModel({B{0, BusKind::slack, false, "a"}, B{1, BusKind::slack, false, "b"}},
                                 {{0, 1, {0.1, 0.1}}}, 1000.0),
                    Error);
    CHECK_THROWS_AS(NetworkModel({B{0, BusKind::slack, false, "a"}, B{1, BusKind::lv_node, false, "b"}},
                                 {{0, 1, {0.0, 0.1}}}, 1000.0),
                    Error);
    CHECK_THROWS_AS(NetworkModel({B{0, BusKind::slack, false, "a"}, B{1, BusKind::mv_aggregate, true, "b"}},
                                 {{0, 1, {0.1, 0.1}}}, 1000.0),
                    Error);
    CHECK_THROWS_AS(NetworkModel({B{0, BusKind::slack, false, "a"}, B{1, BusKind::lv_node, false, "b"},
                                  B{2, BusKind::lv_node, false, "c"}},
                                 {{0, 1, {0.1, 0.1}}, {1, 1, {0.1, 0.1}}}, 1000.0),
                    Error);
}

TEST_CASE("zero injections give a flat profile in one iteration") {
    const auto net = build_reference_network();
    std::vector<Complex> s(net.bus_count());
    const auto sol = solve_power_flow(net, s);
    CHECK(sol.iterations == 1);
    for (const auto& v : sol.voltages) CHECK(v == Complex(1.0, 0.0));
}

TEST_CASE("two-bus case matches the fixed-point value") {
    const auto net = testing::two_bus_network({0.01, 0.005});
    const std::vector<Complex> s{{0, 0}, {0.1, 0.05}};
    const auto sol = solve_power_flow(net, s);
    // V <- 1 - z conj(S / V) iterated to 1e-12.
    const Complex expected{0.9987484335815001, 0.0};
    CHECK(std::abs(sol.voltages[1] - expected) < 1e-9);
    CHECK(sol.max_mismatch < 1e-8);
    CHECK(sol.voltages[0] == Complex(1.0, 0.0));
}

TEST_CASE("overload is non-convergent") {
    const auto net = testing::two_bus_network({0.01, 0.005});
    const std::vector<Complex> s{{0, 0}, {1000.0, 0.0}};
    CHECK_THROWS_AS(solve_power_flow(net, s), NonConvergent);
    try {
        solve_power_flow(net, s);
    } catch (const NonConvergent& e) {
        CHECK(e.iterations() > 0);
        CHECK(e.timestep() == -1);
    }
}

TEST_CASE("sweep agrees with Newton-Raphson on random loads") {
    const auto net = build_reference_network();
    Rng rng(2024);
    double worst_v = 0.0, worst_mismatch = 0.0;
    for (int k = 0; k < 120; ++k) {
        const auto loads = testing::random_loads(net, rng);
        const auto sol = solve_power_flow(net, loads);
        const auto nr = testing::newton_raphson(net, loads);
        for (std::size_t i = 0; i < loads.size(); ++i)
            worst_v = std::max(worst_v, std::abs(std::abs(sol.voltages[i]) - std::abs(nr[i])));
        worst_mismatch = std::max(worst_mismatch, power_mismatch(net, sol.voltages, loads));
        CHECK(sol.voltages[static_cast<std::size_t>(net.slack())] == Complex(1.0, 0.0));
    }
    CHECK(worst_v < 1e-6);
    CHECK(worst_mismatch <= 1e-8);
}

TEST_CASE("solutions are bit-identical for identical inputs") {
    const auto net = build_reference_network();
    Rng rng(5);
    const auto loads = testing::random_loads(net, rng);
    const auto a = solve_power_flow(net, loads);
    const auto b = solve_power_flow(net, loads);
    CHECK(a.voltages == b.voltages);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("ground truth series") {
    const auto net = build_reference_network();
    const auto n = static_cast<Eigen::Index>(net.bus_count());

    SUBCASE("zero injections") {
        const ComplexSeries zero = ComplexSeries::Zero(3, n);
        const auto vm = ground_truth_series(net, zero);
        CHECK(vm.rows() == 3);
        CHECK(vm.cols() == 6);
        CHECK((vm.array() == 1.0).all());
    }
    SUBCASE("single step equals the snapshot solve") {
        Rng rng(11);
        const auto loads = testing::random_loads(net, rng);
        ComplexSeries s(1, n);
        for (Eigen::Index b = 0; b < n; ++b) s(0, b) = loads[static_cast<std::size_t>(b)];
        const auto vm = ground_truth_series(net, s);
        const auto sol = solve_power_flow(net, loads);
        for (std::size_t j = 0; j < net.monitored().size(); ++j)
            CHECK(vm(0, static_cast<Eigen::Index>(j)) ==
                  std::abs(sol.voltages[static_cast<std::size_t>(net.monitored()[j])]));
    }
    SUBCASE("doubling a leaf load lowers that leaf voltage") {
        Rng rng(3);
        for (int k = 0; k < 20; ++k) {
            auto loads = testing::random_loads(net, rng);
            for (std::size_t j = 0; j < net.monitored().size(); ++j) {
                const auto leaf = static_cast<std::size_t>(net.monitored()[j]);
                const double before = std::abs(solve_power_flow(net, loads).voltages[leaf]);
                auto doubled = loads;
                doubled[leaf] *= 2.0;
                const double after = std::abs(solve_power_flow(net, doubled).voltages[leaf]);
                CHECK(after <= before);
                const double oracle = std::abs(testing::newton_raphson(net, doubled)[leaf]);
                CHECK(std::abs(after - oracle) < 1e-6);
            }
        }
    }
    SUBCASE("failing step is reported") {
        ComplexSeries s = ComplexSeries::Zero(4, n);
        s(2, net.monitored()[0]) = Complex(500.0, 0.0);
        try {
            ground_truth_series(net, s);
            FAIL("expected NonConvergent");
        } catch (const NonConvergent& e) {
            CHECK(e.timestep() == 2);
        }
    }
}

TEST_CASE("feeder and slack power balance") {
    const auto net = build_reference_network();
    Rng rng(8);
    const auto loads = testing::random_loads(net, rng);
    const auto sol = solve_power_flow(net, loads);
    Complex total_load{0, 0};
    for (auto s : loads) total_load += s;
    const Complex slack = slack_power(net, sol.voltages);
    // Losses are positive and small relative to the load.
    CHECK(slack.real() > total_load.real());
    CHECK(slack.real() - total_load.real() < 0.1 * total_load.real());
    const int subs = net.bus_index(kSubsName);
    Complex below{0, 0};
    for (int b : net.subtree(subs)) below += loads[static_cast<std::size_t>(b)];
    CHECK(feeder_power(net, sol.voltages, subs).real() >= below.real());
}

}
