#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvse/grid.hpp"
#include "lvse/synth.hpp"

namespace lvse {

// Ground-truth network states aligned with a scenario's time axis.
struct GroundTruth {
    std::vector<std::int64_t> minutes;
    std::vector<std::string> monitored_names;
    double base_power_kva = 1000.0;
    NetworkStates states;
};

GroundTruth compute_ground_truth(const NetworkModel& net, const ScenarioDataset& scenario);
// voltages.csv (monitored magnitudes) and measurements.csv (SubP / SubS).
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& dir);
GroundTruth load_ground_truth(const std::filesystem::path& dir);

enum class FeatureSetId { FS1, FS2, FS3 };
std::string to_string(FeatureSetId fs);
FeatureSetId feature_set_from_string(const std::string& name);

// Where an input column comes from; sm_lag columns carry their lag.
struct ColumnInfo {
    std::string name;
    std::string provenance;  // sm_lag | weather | calendar | price | subp | subs
    int lag_minutes = 0;
};

struct FeatureMatrix {
    FeatureSetId feature_set = FeatureSetId::FS1;
    ScenarioId scenario = ScenarioId::S1;
    RealSeries inputs;   // N x D
    RealSeries targets;  // N x J voltage magnitudes, pu
    FlagSeries activation;  // N x J, EV charging at the monitored bus
    std::vector<std::int64_t> minutes;
    std::vector<ColumnInfo> columns;
    std::vector<std::string> target_names;

    Eigen::Index rows() const { return inputs.rows(); }
    std::vector<std::string> column_names() const;
};

// FS1: SM P/Q lagged 24 h per monitored bus and per aggregate substation,
// weather, price and calendar. FS2 adds same-step SubP P/Q, FS3 adds SubS
// P/Q and voltage. Rows without a 24 h history are dropped.
FeatureMatrix build_features(const ScenarioDataset& scenario, const GroundTruth& truth, FeatureSetId fs);

// Contiguous row range of a FeatureMatrix; does not own the data.
struct FeatureView {
    const FeatureMatrix* source = nullptr;
    Eigen::Index begin = 0;
    Eigen::Index end = 0;

    Eigen::Index rows() const { return end - begin; }
    auto inputs() const { return source->inputs.middleRows(begin, rows()); }
    auto targets() const { return source->targets.middleRows(begin, rows()); }
    auto activation() const { return source->activation.middleRows(begin, rows()); }
    std::int64_t minute(Eigen::Index i) const { return source->minutes[static_cast<std::size_t>(begin + i)]; }
};

struct SplitSpec {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

struct SplitViews {
    FeatureView train, validation, test;
};

// Chronological split: floor(train*N), floor(validation*N), remainder.
SplitViews split(const FeatureMatrix& fm, const SplitSpec& spec = {});

// Per-column z-score fitted on training rows. Zero-variance columns map to 0.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    std::vector<bool> degenerate;

    static Normalizer fit(const RealSeries& rows, const std::vector<std::string>& names = {});
    RealSeries apply(const RealSeries& rows) const;
    RealSeries invert(const RealSeries& rows) const;
    Eigen::Index size() const { return mean.size(); }
};

nlohmann::json to_json(const Normalizer& n);
Normalizer normalizer_from_json(const nlohmann::json& j);

// CSV of inputs and targets plus a JSON sidecar with column provenance,
// normalizer stats and split indices.
void save_feature_matrix(const FeatureMatrix& fm, const SplitViews& split, const Normalizer& inputs,
                         const Normalizer& targets, const std::filesystem::path& csv_path);

}  // namespace lvse
