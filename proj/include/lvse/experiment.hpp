#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvse/bnn.hpp"
#include "lvse/dataset.hpp"
#include "lvse/qr.hpp"
#include "lvse/synth.hpp"
#include "lvse/timeline.hpp"

namespace lvse::experiment {

enum class ModelKind { bnn, qr };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& name);

struct StudySpec {
    ScenarioId scenario = ScenarioId::S1;
    FeatureSetId feature_set = FeatureSetId::FS2;
    std::string bus = "L4";
    double validation_fraction = 0.1;
};

struct ExperimentConfig {
    std::vector<Segment> horizon = default_horizon();
    std::uint64_t data_seed = 42;
    std::uint64_t model_seed = 7;
    std::vector<ScenarioId> scenarios{ScenarioId::S1, ScenarioId::S2, ScenarioId::S3};
    std::vector<FeatureSetId> feature_sets{FeatureSetId::FS1, FeatureSetId::FS2, FeatureSetId::FS3};
    std::vector<ModelKind> models{ModelKind::bnn, ModelKind::qr};
    bnn::BnnHyper bnn;
    qr::QrHyper qr;
    SplitSpec split;
    ScenarioParams scenario_params;
    StudySpec study;
    std::filesystem::path output_dir = "lvse-out";

    ExperimentConfig();
};

// Horizon segments are written as {"start_day", "weeks"}. Unknown keys are rejected.
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Hash of everything except the output directory.
std::string config_hash(const ExperimentConfig& config);
// Hash of the inputs that determine the generated data only.
std::string data_hash(const ExperimentConfig& config);

struct CellId {
    ScenarioId scenario = ScenarioId::S1;
    FeatureSetId feature_set = FeatureSetId::FS1;
    ModelKind model = ModelKind::bnn;

    std::string name() const;  // e.g. "S3_FS2_bnn"
    bool operator==(const CellId&) const = default;
};

// Comma-separated selectors; each selector is ':'-joined tokens (S1, FS2, bnn, ...)
// that must all match. An empty filter selects every configured cell.
std::vector<CellId> select_cells(const ExperimentConfig& config, const std::string& filter = "");

struct CellRecord {
    CellId id;
    std::string status;  // completed | failed
    std::string error;
    double wall_seconds = 0.0;
    std::string metrics_csv, metrics_json, checkpoint, predictions;  // relative to the output dir
    std::int64_t test_begin = 0, test_end = 0;  // feature-matrix row range
    std::string test_first, test_last;          // timestamps
};

struct RunLedger {
    std::string config_hash;
    std::vector<CellRecord> cells;

    int completed() const;
    const CellRecord* find(const CellId& id) const;
};

nlohmann::json to_json(const RunLedger& ledger);
RunLedger ledger_from_json(const nlohmann::json& j);

std::filesystem::path data_dir(const ExperimentConfig& config);
std::filesystem::path cell_dir(const ExperimentConfig& config, const CellId& id);

// Writes network.json and one directory per scenario with inputs, manifest and
// ground truth. Identical configs give byte-identical files.
void cmd_generate(const ExperimentConfig& config);

// Trains and evaluates the selected cells, merges them into ledger.json and
// rewrites summary.csv from all completed cells. A failing cell is recorded
// and the run continues.
RunLedger cmd_run_matrix(const ExperimentConfig& config, const std::string& cells = "");

struct ComponentMeans {
    double epistemic_var = 0.0, aleatoric_var = 0.0;
    double epistemic_half = 0.0, aleatoric_half = 0.0;  // 1.645 * sqrt(component)
    Eigen::Index steps = 0;
};

struct StudyResult {
    ComponentMeans last_training_week;
    ComponentMeans validation;
    ComponentMeans forecast;  // everything after the training segment
    Eigen::Index series_length = 0;
    Eigen::Index horizon_rows = 0;
    Eigen::Index training_segment_rows = 0;
};

nlohmann::json to_json(const StudyResult& r);

// Trains the BNN on the first horizon segment (chronological train/validation
// split inside it) and tracks the PI contributions of both components for one
// bus over the remaining horizon without retraining.
StudyResult cmd_uncertainty_study(const ExperimentConfig& config);

// Plot-ready CSVs under <out>/report. Throws MissingCell when configured cells
// are absent and ConfigError when artifacts carry a different config hash.
void cmd_report(const ExperimentConfig& config);

}  // namespace lvse::experiment
