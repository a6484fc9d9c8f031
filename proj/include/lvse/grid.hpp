#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

namespace lvse {

using Complex = std::complex<double>;
using ComplexSeries =
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealSeries = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class BusKind { slack, mv_aggregate, lv_node };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& name);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::lv_node;
    bool monitored = false;
    std::string name;
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    Complex impedance;  // series impedance, pu
};

// Radial network rooted at a single slack bus. Immutable after construction;
// the constructor validates the structural invariants and throws on failure.
class NetworkModel {
public:
    NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, double base_power_kva);

    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Line>& lines() const noexcept { return lines_; }
    std::size_t bus_count() const noexcept { return buses_.size(); }
    double base_power_kva() const noexcept { return base_power_kva_; }
    // Slack magnitude; the angle reference is 0.
    double base_voltage() const noexcept { return 1.0; }

    int slack() const noexcept { return slack_; }
    // Monitored buses in ascending id order (estimation targets 1..J).
    const std::vector<int>& monitored() const noexcept { return monitored_; }
    int bus_index(const std::string& name) const;

    // Tree structure: parent bus and index of the line feeding each bus
    // (-1 for the slack), plus a breadth-first order starting at the slack.
    int parent(int bus) const { return parent_[static_cast<std::size_t>(bus)]; }
    int feeder_line(int bus) const { return feeder_line_[static_cast<std::size_t>(bus)]; }
    const std::vector<int>& sweep_order() const noexcept { return order_; }
    const std::vector<int>& children(int bus) const {
        return children_[static_cast<std::size_t>(bus)];
    }
    // All buses in the subtree rooted at `bus`, including itself.
    std::vector<int> subtree(int bus) const;

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    double base_power_kva_;
    int slack_ = -1;
    std::vector<int> monitored_;
    std::vector<int> parent_;
    std::vector<int> feeder_line_;
    std::vector<std::vector<int>> children_;
    std::vector<int> order_;
};

// One slack (SubP, HV side), five aggregate secondary substations, and
// the SubS LV feeder with six monitored leaves. Deterministic.
NetworkModel build_reference_network();

// Names used by the rest of the pipeline.
inline constexpr const char* kSubpName = "SubP";
inline constexpr const char* kSubsName = "SubS";

struct PowerFlowOptions {
    double tolerance = 1e-8;  // max per-bus complex power mismatch, pu
    int max_iterations = 100;
};

struct PowerFlowSolution {
    std::vector<Complex> voltages;
    int iterations = 0;
    double max_mismatch = 0.0;
};

// Backward-forward sweep. `injections` holds one entry per bus in load
// convention (positive P/Q = consumption, pu); the slack entry is ignored.
// Throws NonConvergent when the tolerance is not met within the cap.
PowerFlowSolution solve_power_flow(const NetworkModel& net, std::span<const Complex> injections,
                                   const PowerFlowOptions& options = {});

// Largest |S_specified - V conj(I_injected)| over non-slack buses, with the
// injected currents derived from the solved voltages.
double power_mismatch(const NetworkModel& net, std::span<const Complex> voltages,
                      std::span<const Complex> injections);

// Complex power leaving the slack into the network, pu.
Complex slack_power(const NetworkModel& net, std::span<const Complex> voltages);

// Complex power delivered into `bus` through its feeder line, measured at `bus`.
Complex feeder_power(const NetworkModel& net, std::span<const Complex> voltages, int bus);

// Monitored-bus voltage magnitudes (T x J) for a series of snapshots
// (T x buses, load convention, pu). Rethrows NonConvergent with the index of
// the first failing timestep.
RealSeries ground_truth_series(const NetworkModel& net, const ComplexSeries& injections,
                               const PowerFlowOptions& options = {});

// Everything the feature builder needs from one power flow per timestep.
struct NetworkStates {
    RealSeries monitored_vm;  // T x J, pu
    Eigen::VectorXd subp_p;   // pu
    Eigen::VectorXd subp_q;
    Eigen::VectorXd subs_p;
    Eigen::VectorXd subs_q;
    Eigen::VectorXd subs_vm;
};

NetworkStates simulate_network_states(const NetworkModel& net, const ComplexSeries& injections,
                                      const PowerFlowOptions& options = {});

void to_json(nlohmann::json& j, const NetworkModel& net);
NetworkModel network_from_json(const nlohmann::json& j);

}  // namespace lvse
