#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace lvse::nn {

using ParamVector = Eigen::VectorXd;

// Layer widths [inputs, hidden..., outputs]; tanh on hidden layers,
// identity on the output layer.
struct MlpSpec {
    std::vector<int> widths;

    std::size_t layer_count() const { return widths.size() - 1; }
    int inputs() const { return widths.front(); }
    int outputs() const { return widths.back(); }
    std::size_t parameter_count() const;
    void validate() const;
};

// Position of one layer inside the flat parameter vector. The weight block is
// stored column-major as (rows = fan-out) x (cols = fan-in), followed by the bias.
struct LayerSlice {
    Eigen::Index weight_offset = 0;
    Eigen::Index bias_offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
};

std::vector<LayerSlice> layout(const MlpSpec& spec);

// Scaled uniform fan-in initialization, zero biases.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

Eigen::VectorXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x);

// Activations of every layer for a batch stored column-wise (features x batch).
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;  // [0] = input, back() = output
    const Eigen::MatrixXd& output() const { return activations.back(); }
};

ForwardCache forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& x);

struct Gradients {
    ParamVector params;
    Eigen::MatrixXd input;
};

// Reverse-mode pass for a scalar loss whose gradient w.r.t. the batch output
// is `upstream` (outputs x batch). Parameter gradients are summed over the batch.
Gradients backward(const MlpSpec& spec, const ParamVector& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream);
Gradients backward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream);

struct AdamState {
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Eigen::VectorXd m;
    Eigen::VectorXd v;

    AdamState() = default;
    AdamState(Eigen::Index size, double lr)
        : learning_rate(lr), m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

// Bias-corrected Adam update in place.
void adam_step(AdamState& state, ParamVector& params, const ParamVector& grads);

nlohmann::json params_to_json(const MlpSpec& spec, const ParamVector& params);
ParamVector params_from_json(const nlohmann::json& j, const MlpSpec& spec);
nlohmann::json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Shared minibatch loop with validation-based epoch selection.

struct EpochSchedule {
    int max_epochs = 100;
    int patience = 20;   // stop after this many epochs without a new best; <= 0 disables
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct TrainingLog {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;  // 0-based
    double best_val_loss = 0.0;
};

nlohmann::json to_json(const TrainingLog& log);
TrainingLog training_log_from_json(const nlohmann::json& j);

struct MinibatchHooks {
    // One optimizer step on the given training rows; returns the batch loss.
    std::function<double(std::span<const Eigen::Index>)> step;
    std::function<double()> validation_loss;
    std::function<void()> keep_best;
};

// Shuffles the training rows each epoch and calls the hooks. When
// `validate` is false every epoch counts as the best (used for refits).
TrainingLog run_minibatch_epochs(Eigen::Index train_rows, const EpochSchedule& schedule,
                                 const MinibatchHooks& hooks, bool validate = true);

// Gathers `rows` of a row-major table into a column-per-sample matrix.
template <typename Table>
Eigen::MatrixXd gather_columns(const Table& table, std::span<const Eigen::Index> rows) {
    Eigen::MatrixXd out(table.cols(), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.col(static_cast<Eigen::Index>(i)) = table.row(rows[i]).transpose();
    return out;
}

}  // namespace lvse::nn
