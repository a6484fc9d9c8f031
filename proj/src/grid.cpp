#include "lvse/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "lvse/errors.hpp"
#include "lvse/grid_params.hpp"

namespace lvse {

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::slack: return "slack";
        case BusKind::mv_aggregate: return "mv_aggregate";
        case BusKind::lv_node: return "lv_node";
    }
    return "unknown";
}

BusKind bus_kind_from_string(const std::string& name) {
    if (name == "slack") return BusKind::slack;
    if (name == "mv_aggregate") return BusKind::mv_aggregate;
    if (name == "lv_node") return BusKind::lv_node;
    throw Error("unknown bus kind '" + name + "'");
}

NetworkModel::NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, double base_power_kva)
    : buses_(std::move(buses)), lines_(std::move(lines)), base_power_kva_(base_power_kva) {
    const auto n = buses_.size();
    if (n == 0) throw Error("network has no buses");
    if (lines_.size() != n - 1) throw Error("network is not radial: |lines| != |buses| - 1");
    if (!(base_power_kva_ > 0.0)) throw Error("base power must be positive");

    for (std::size_t i = 0; i < n; ++i) {
        if (buses_[i].id != static_cast<int>(i)) throw Error("bus ids must be 0..n-1 in order");
        if (buses_[i].kind == BusKind::slack) {
            if (slack_ >= 0) throw Error("network has more than one slack bus");
            slack_ = static_cast<int>(i);
        }
        if (buses_[i].monitored) {
            if (buses_[i].kind != BusKind::lv_node)
                throw Error("monitored bus " + std::to_string(i) + " is not an LV node");
            monitored_.push_back(static_cast<int>(i));
        }
    }
    if (slack_ < 0) throw Error("network has no slack bus");

    std::vector<std::vector<std::pair<int, int>>> adjacency(n);
    for (std::size_t k = 0; k < lines_.size(); ++k) {
        const auto& line = lines_[k];
        if (line.from_bus < 0 || line.to_bus < 0 || line.from_bus >= static_cast<int>(n) ||
            line.to_bus >= static_cast<int>(n) || line.from_bus == line.to_bus)
            throw Error("line " + std::to_string(k) + " references an invalid bus");
        if (!(line.impedance.real() > 0.0))
            throw Error("line " + std::to_string(k) + " impedance needs a positive real part");
        adjacency[static_cast<std::size_t>(line.from_bus)].emplace_back(line.to_bus,
                                                                         static_cast<int>(k));
        adjacency[static_cast<std::size_t>(line.to_bus)].emplace_back(line.from_bus,
                                                                       static_cast<int>(k));
    }

    parent_.assign(n, -1);
    feeder_line_.assign(n, -1);
    children_.assign(n, {});
    std::vector<bool> seen(n, false);
    std::deque<int> queue{slack_};
    seen[static_cast<std::size_t>(slack_)] = true;
    while (!queue.empty()) {
        const int bus = queue.front();
        queue.pop_front();
        order_.push_back(bus);
        for (const auto& [next, line] : adjacency[static_cast<std::size_t>(bus)]) {
            if (seen[static_cast<std::size_t>(next)]) continue;
            seen[static_cast<std::size_t>(next)] = true;
            parent_[static_cast<std::size_t>(next)] = bus;
            feeder_line_[static_cast<std::size_t>(next)] = line;
            children_[static_cast<std::size_t>(bus)].push_back(next);
            queue.push_back(next);
        }
    }
    if (order_.size() != n) throw Error("network is not connected");
}

int NetworkModel::bus_index(const std::string& name) const {
    for (const auto& bus : buses_)
        if (bus.name == name) return bus.id;
    throw Error("no bus named '" + name + "'");
}

std::vector<int> NetworkModel::subtree(int bus) const {
    std::vector<int> out{bus};
    for (std::size_t i = 0; i < out.size(); ++i)
        for (int child : children(out[i])) out.push_back(child);
    return out;
}

NetworkModel build_reference_network() {
    namespace gp = grid_params;
    std::vector<Bus> buses = {
        {0, BusKind::slack, false, kSubpName},
        {1, BusKind::mv_aggregate, false, "SubA"},
        {2, BusKind::mv_aggregate, false, "SubB"},
        {3, BusKind::mv_aggregate, false, "SubC"},
        {4, BusKind::mv_aggregate, false, "SubD"},
        {5, BusKind::mv_aggregate, false, "SubE"},
        {6, BusKind::lv_node, false, kSubsName},
        {7, BusKind::lv_node, false, "J1"},
        {8, BusKind::lv_node, true, "L1"},
        {9, BusKind::lv_node, false, "J2"},
        {10, BusKind::lv_node, true, "L2"},
        {11, BusKind::lv_node, true, "L3"},
        {12, BusKind::lv_node, false, "J3"},
        {13, BusKind::lv_node, true, "L4"},
        {14, BusKind::lv_node, false, "J4"},
        {15, BusKind::lv_node, true, "L5"},
        {16, BusKind::lv_node, true, "L6"},
    };
    std::vector<Line> lines = {
        {0, 1, gp::kPrimaryTransformer + gp::mv_cable(gp::kMvLenSubpToA)},
        {1, 2, gp::mv_cable(gp::kMvLenAToB)},
        {1, 3, gp::mv_cable(gp::kMvLenAToC)},
        {3, 4, gp::mv_cable(gp::kMvLenCToD)},
        {3, 5, gp::mv_cable(gp::kMvLenCToE)},
        {4, 6, gp::mv_cable(gp::kMvLenDToSubs) + gp::kSubsTransformer},
        {6, 7, gp::lv_cable(gp::kLvTrunkWest)},
        {7, 8, gp::lv_cable(gp::kLvServiceShort)},
        {7, 9, gp::lv_cable(gp::kLvBranchWest)},
        {9, 10, gp::lv_cable(gp::kLvServiceLong)},
        {9, 11, gp::lv_cable(gp::kLvServiceShort)},
        {6, 12, gp::lv_cable(gp::kLvTrunkEast)},
        {12, 13, gp::lv_cable(gp::kLvServiceLong)},
        {12, 14, gp::lv_cable(gp::kLvBranchEast)},
        {14, 15, gp::lv_cable(gp::kLvServiceShort)},
        {14, 16, gp::lv_cable(gp::kLvServiceLong)},
    };
    return NetworkModel(std::move(buses), std::move(lines), gp::kBasePowerKva);
}

namespace {

// Net current withdrawn at each bus implied by the voltages through the line
// impedances (feeder current in minus currents out to children).
std::vector<Complex> withdrawn_currents(const NetworkModel& net, std::span<const Complex> v) {
    std::vector<Complex> out(net.bus_count(), Complex{});
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        const int bus = static_cast<int>(k);
        const int line = net.feeder_line(bus);
        if (line < 0) continue;
        const int up = net.parent(bus);
        const Complex current =
            (v[static_cast<std::size_t>(up)] - v[k]) / net.lines()[static_cast<std::size_t>(line)].impedance;
        out[k] += current;
        out[static_cast<std::size_t>(up)] -= current;
    }
    return out;
}

}  // namespace

double power_mismatch(const NetworkModel& net, std::span<const Complex> voltages,
                      std::span<const Complex> injections) {
    const auto current = withdrawn_currents(net, voltages);
    double worst = 0.0;
    for (std::size_t k = 0; k < net.bus_count(); ++k) {
        if (static_cast<int>(k) == net.slack()) continue;
        const Complex drawn = voltages[k] * std::conj(current[k]);
        worst = std::max(worst, std::abs(injections[k] - drawn));
    }
    return worst;
}

PowerFlowSolution solve_power_flow(const NetworkModel& net, std::span<const Complex> injections,
                                   const PowerFlowOptions& options) {
    const auto n = net.bus_count();
    if (injections.size() != n) throw DimensionMismatch("injection vector length", n, injections.size());

    std::vector<Complex> v(n, Complex{net.base_voltage(), 0.0});
    std::vector<Complex> branch(n);
    const auto& order = net.sweep_order();
    double mismatch = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        // Backward: accumulate load currents toward the slack.
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(order[i]);
            branch[k] = static_cast<int>(k) == net.slack() ? Complex{} : std::conj(injections[k] / v[k]);
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const int bus = *it;
            if (bus == net.slack()) continue;
            branch[static_cast<std::size_t>(net.parent(bus))] += branch[static_cast<std::size_t>(bus)];
        }
        // Forward: voltage drops away from the slack.
        for (int bus : order) {
            if (bus == net.slack()) continue;
            const auto k = static_cast<std::size_t>(bus);
            const auto& z = net.lines()[static_cast<std::size_t>(net.feeder_line(bus))].impedance;
            v[k] = v[static_cast<std::size_t>(net.parent(bus))] - z * branch[k];
        }

        mismatch = power_mismatch(net, v, injections);
        if (!std::isfinite(mismatch)) throw NonConvergent(iter, mismatch);
        if (mismatch < options.tolerance) return {std::move(v), iter, mismatch};
    }
    throw NonConvergent(options.max_iterations, mismatch);
}

Complex slack_power(const NetworkModel& net, std::span<const Complex> voltages) {
    const auto current = withdrawn_currents(net, voltages);
    const auto s = static_cast<std::size_t>(net.slack());
    // Withdrawn current at the slack is the negative of what it supplies.
    return -voltages[s] * std::conj(current[s]);
}

Complex feeder_power(const NetworkModel& net, std::span<const Complex> voltages, int bus) {
    const int line = net.feeder_line(bus);
    if (line < 0) throw Error("bus has no feeder line");
    const auto k = static_cast<std::size_t>(bus);
    const Complex current = (voltages[static_cast<std::size_t>(net.parent(bus))] - voltages[k]) /
                            net.lines()[static_cast<std::size_t>(line)].impedance;
    return voltages[k] * std::conj(current);
}

NetworkStates simulate_network_states(const NetworkModel& net, const ComplexSeries& injections,
                                      const PowerFlowOptions& options) {
    const auto steps = injections.rows();
    if (static_cast<std::size_t>(injections.cols()) != net.bus_count())
        throw DimensionMismatch("injection series columns", net.bus_count(),
                                static_cast<std::size_t>(injections.cols()));
    const auto& mon = net.monitored();
    const int subs = net.bus_index(kSubsName);

    NetworkStates out;
    out.monitored_vm.resize(steps, static_cast<Eigen::Index>(mon.size()));
    out.subp_p.resize(steps);
    out.subp_q.resize(steps);
    out.subs_p.resize(steps);
    out.subs_q.resize(steps);
    out.subs_vm.resize(steps);

    for (Eigen::Index t = 0; t < steps; ++t) {
        std::span<const Complex> row(injections.row(t).data(), net.bus_count());
        PowerFlowSolution sol;
        try {
            sol = solve_power_flow(net, row, options);
        } catch (const NonConvergent& e) {
            throw NonConvergent(e.iterations(), e.mismatch(), static_cast<long>(t));
        }
        for (std::size_t j = 0; j < mon.size(); ++j)
            out.monitored_vm(t, static_cast<Eigen::Index>(j)) =
                std::abs(sol.voltages[static_cast<std::size_t>(mon[j])]);
        const Complex sp = slack_power(net, sol.voltages);
        const Complex ss = feeder_power(net, sol.voltages, subs);
        out.subp_p(t) = sp.real();
        out.subp_q(t) = sp.imag();
        out.subs_p(t) = ss.real();
        out.subs_q(t) = ss.imag();
        out.subs_vm(t) = std::abs(sol.voltages[static_cast<std::size_t>(subs)]);
    }
    return out;
}

RealSeries ground_truth_series(const NetworkModel& net, const ComplexSeries& injections,
                               const PowerFlowOptions& options) {
    return simulate_network_states(net, injections, options).monitored_vm;
}

void to_json(nlohmann::json& j, const NetworkModel& net) {
    j = nlohmann::json::object();
    j["base_power_kva"] = net.base_power_kva();
    j["base_voltage_pu"] = net.base_voltage();
    auto& buses = j["buses"] = nlohmann::json::array();
    for (const auto& b : net.buses())
        buses.push_back({{"id", b.id}, {"name", b.name}, {"kind", to_string(b.kind)},
                         {"monitored", b.monitored}});
    auto& lines = j["lines"] = nlohmann::json::array();
    for (const auto& l : net.lines())
        lines.push_back({{"from_bus", l.from_bus}, {"to_bus", l.to_bus},
                         {"r_pu", l.impedance.real()}, {"x_pu", l.impedance.imag()}});
}

NetworkModel network_from_json(const nlohmann::json& j) {
    std::vector<Bus> buses;
    for (const auto& b : j.at("buses"))
        buses.push_back({b.at("id").get<int>(), bus_kind_from_string(b.at("kind").get<std::string>()),
                         b.at("monitored").get<bool>(), b.value("name", std::string{})});
    std::vector<Line> lines;
    for (const auto& l : j.at("lines"))
        lines.push_back({l.at("from_bus").get<int>(), l.at("to_bus").get<int>(),
                         Complex{l.at("r_pu").get<double>(), l.at("x_pu").get<double>()}});
    return NetworkModel(std::move(buses), std::move(lines), j.at("base_power_kva").get<double>());
}

}  // namespace lvse
