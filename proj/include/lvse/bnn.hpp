#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lvse/dataset.hpp"
#include "lvse/metrics.hpp"
#include "lvse/nn.hpp"

namespace lvse::bnn {

using nn::ParamVector;

// Mean-field Gaussian posterior surrogate, sigma = softplus(rho).
struct VariationalParams {
    ParamVector mu;
    ParamVector rho;

    Eigen::VectorXd sigma() const;
    Eigen::Index size() const { return mu.size(); }
};

double softplus(double x);
double inverse_softplus(double y);

ParamVector sample_weights(const VariationalParams& vp, const Eigen::VectorXd& noise);
double kl_to_standard_normal(const VariationalParams& vp);

// Mean over buses of 0.5 exp(-s) (y - yhat)^2 + 0.5 s, with s = log variance.
double nll_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, const Eigen::VectorXd& s);

// The network output holds J means followed by J log-variances.
struct ElboGradient {
    double loss = 0.0;  // batch-mean NLL + kl_weight * KL / n_train
    double nll = 0.0;
    double kl = 0.0;
    ParamVector grad_mu;
    ParamVector grad_rho;
};

// Loss and gradient for one batch with a fixed standard-normal draw `noise`.
// x is D x B and y is J x B, both in normalized units.
ElboGradient elbo_loss_and_grad(const nn::MlpSpec& spec, const VariationalParams& vp,
                                const Eigen::VectorXd& noise, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& y, double kl_weight, double n_train);

struct BnnHyper {
    std::vector<int> hidden{12, 12};
    int batch_size = 64;
    int max_epochs = 2000;
    int patience = 20;
    double learning_rate = 1e-3;
    double kl_weight = 1.0;
    double sigma_init = 0.05;
    double logvar_bias_init = std::log(0.01);
    bool refit = false;  // retrain on train + validation for the best epoch count
    int n_samples = 500;
    double alpha = 0.1;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const BnnHyper& h);
BnnHyper bnn_hyper_from_json(const nlohmann::json& j, BnnHyper defaults = {});

struct BnnModel {
    nn::MlpSpec spec;
    VariationalParams vp;
    Normalizer x_norm;
    Normalizer y_norm;
    nn::TrainingLog log;
    double kl_weight = 1.0;
    std::vector<std::string> targets;

    int inputs() const { return spec.inputs(); }
    int buses() const { return spec.outputs() / 2; }
};

// Raw (unnormalized) training and validation rows.
struct TrainingData {
    RealSeries x_train, y_train;
    RealSeries x_val, y_val;
    std::vector<std::string> input_names;
    std::vector<std::string> targets;
};

TrainingData training_data(const FeatureView& train, const FeatureView& val);

BnnModel train_bnn(const TrainingData& data, const BnnHyper& hyper);

// Per-pass network outputs in target units: yhat and variance, each N x J.
struct PassSamples {
    std::vector<RealSeries> yhat;
    std::vector<RealSeries> variance;
};

struct Decomposition {
    RealSeries mean;
    RealSeries epistemic;
    RealSeries aleatoric;
};

// Streaming form of the mean / epistemic / aleatoric split. Variances are
// accumulated relative to the first pass so identical passes give exactly 0.
class MomentAccumulator {
public:
    void add(const RealSeries& yhat, const RealSeries& variance);
    int passes() const { return passes_; }
    Decomposition finish() const;

private:
    int passes_ = 0;
    RealSeries shift_, sum_, sum_sq_, sum_var_;
};

Decomposition decompose(const PassSamples& samples);

struct PredictiveSummary {
    RealSeries mean;
    RealSeries epistemic;
    RealSeries aleatoric;
    RealSeries total;
    RealSeries lower;
    RealSeries upper;
    double alpha = 0.1;
    int n_samples = 0;
};

PredictiveSummary summarize(Decomposition d, double alpha, int n_samples);

// n_samples stochastic passes; each pass uses one weight draw for all rows.
PredictiveSummary predict(const BnnModel& model, const RealSeries& x, int n_samples, double alpha,
                          std::uint64_t seed, PassSamples* keep = nullptr);

// Gaussian quantile of the predictive distribution, mean + z_q sqrt(total).
RealSeries quantile(const PredictiveSummary& summary, double q);
metrics::QuantileForecast quantile_forecast(const PredictiveSummary& summary,
                                            const std::vector<double>& levels);

nlohmann::json to_json(const BnnModel& model);
BnnModel bnn_model_from_json(const nlohmann::json& j);

}  // namespace lvse::bnn
