#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvse/bnn.hpp"
#include "lvse/dataset.hpp"
#include "lvse/metrics.hpp"
#include "lvse/nn.hpp"

namespace lvse::qr {

struct QrHyper {
    std::vector<int> hidden{12, 12};
    int batch_size = 64;
    int max_epochs = 2000;
    int patience = 20;
    double learning_rate = 1e-3;
    double lower_level = 0.05;
    double upper_level = 0.95;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const QrHyper& h);
QrHyper qr_hyper_from_json(const nlohmann::json& j, QrHyper defaults = {});

// Output index of (bus j, level k) is j * levels + k.
struct QrModel {
    nn::MlpSpec spec;
    nn::ParamVector params;
    std::vector<double> levels;
    Normalizer x_norm;
    Normalizer y_norm;
    nn::TrainingLog log;
    std::vector<std::string> targets;

    int inputs() const { return spec.inputs(); }
    int buses() const { return spec.outputs() / static_cast<int>(levels.size()); }
};

// Mean pinball loss over batch, buses and levels; `grad` receives d loss / d out.
double pinball_batch(const Eigen::MatrixXd& out, const Eigen::MatrixXd& y, const std::vector<double>& levels,
                     Eigen::MatrixXd* grad = nullptr);

QrModel train_qr(const bnn::TrainingData& data, const QrHyper& hyper);

struct QuantilePrediction {
    metrics::QuantileForecast quantiles;  // sorted per bus and row
    RealSeries point;                     // median
    RealSeries lower;
    RealSeries upper;
};

QuantilePrediction predict_quantiles(const QrModel& model, const RealSeries& x, double lower_level = 0.05,
                                     double upper_level = 0.95);

nlohmann::json to_json(const QrModel& model);
QrModel qr_model_from_json(const nlohmann::json& j);

}  // namespace lvse::qr
