#include "lvse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lvse/errors.hpp"
#include "lvse/random.hpp"

namespace lvse::nn {

std::size_t MlpSpec::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        n += static_cast<std::size_t>(widths[l] + 1) * static_cast<std::size_t>(widths[l + 1]);
    return n;
}

void MlpSpec::validate() const {
    if (widths.size() < 2) throw Error("MLP needs at least an input and an output width");
    for (int w : widths)
        if (w < 1) throw Error("MLP widths must be at least 1");
}

std::vector<LayerSlice> layout(const MlpSpec& spec) {
    spec.validate();
    std::vector<LayerSlice> out;
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        LayerSlice s;
        s.rows = spec.widths[l + 1];
        s.cols = spec.widths[l];
        s.weight_offset = offset;
        s.bias_offset = offset + s.rows * s.cols;
        offset = s.bias_offset + s.rows;
        out.push_back(s);
    }
    return out;
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    const auto slices = layout(spec);
    ParamVector p = ParamVector::Zero(static_cast<Eigen::Index>(spec.parameter_count()));
    Rng rng = make_rng(seed, Stream::init);
    for (const auto& s : slices) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < s.rows * s.cols; ++i) p(s.weight_offset + i) = u(rng);
    }
    return p;
}

namespace {

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

void check_params(const MlpSpec& spec, const ParamVector& params) {
    if (static_cast<std::size_t>(params.size()) != spec.parameter_count())
        throw DimensionMismatch("parameter vector length", spec.parameter_count(),
                                static_cast<std::size_t>(params.size()));
}

}  // namespace

ForwardCache forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& x) {
    check_params(spec, params);
    if (x.rows() != spec.inputs())
        throw DimensionMismatch("input dimension", static_cast<std::size_t>(spec.inputs()),
                                static_cast<std::size_t>(x.rows()));
    const auto slices = layout(spec);
    ForwardCache cache;
    cache.activations.reserve(slices.size() + 1);
    cache.activations.push_back(x);
    for (std::size_t l = 0; l < slices.size(); ++l) {
        const auto& s = slices[l];
        const ConstMatrixMap w(params.data() + s.weight_offset, s.rows, s.cols);
        const ConstVectorMap b(params.data() + s.bias_offset, s.rows);
        Eigen::MatrixXd z = w * cache.activations.back();
        z.colwise() += b;
        if (l + 1 < slices.size()) z = z.array().tanh().matrix();
        cache.activations.push_back(std::move(z));
    }
    return cache;
}

Eigen::VectorXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x) {
    return forward_batch(spec, params, x).output().col(0);
}

Gradients backward(const MlpSpec& spec, const ParamVector& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream) {
    check_params(spec, params);
    const auto slices = layout(spec);
    if (cache.activations.size() != slices.size() + 1) throw Error("forward cache does not match the spec");
    if (upstream.rows() != spec.outputs() || upstream.cols() != cache.output().cols())
        throw DimensionMismatch("upstream gradient size", static_cast<std::size_t>(cache.output().size()),
                                static_cast<std::size_t>(upstream.size()));

    Gradients g;
    g.params = ParamVector::Zero(params.size());
    Eigen::MatrixXd delta = upstream;
    for (std::size_t l = slices.size(); l-- > 0;) {
        const auto& s = slices[l];
        const auto& input = cache.activations[l];
        Eigen::Map<Eigen::MatrixXd>(g.params.data() + s.weight_offset, s.rows, s.cols).noalias() =
            delta * input.transpose();
        g.params.segment(s.bias_offset, s.rows) = delta.rowwise().sum();
        const ConstMatrixMap w(params.data() + s.weight_offset, s.rows, s.cols);
        Eigen::MatrixXd back = w.transpose() * delta;
        if (l > 0) back.array() *= 1.0 - input.array().square();  // tanh'
        delta = std::move(back);
    }
    g.input = std::move(delta);
    return g;
}

Gradients backward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream) {
    return backward(spec, params, forward_batch(spec, params, x), upstream);
}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grads) {
    if (params.size() != grads.size() || state.m.size() != params.size())
        throw DimensionMismatch("Adam vector length", static_cast<std::size_t>(params.size()),
                                static_cast<std::size_t>(grads.size()));
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= state.learning_rate * (state.m.array() / c1) /
                      ((state.v.array() / c2).sqrt() + state.epsilon);
}

nlohmann::json spec_to_json(const MlpSpec& spec) {
    return {{"widths", spec.widths}, {"hidden_activation", "tanh"}, {"output_activation", "identity"}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
    MlpSpec spec{j.at("widths").get<std::vector<int>>()};
    spec.validate();
    return spec;
}

nlohmann::json params_to_json(const MlpSpec& spec, const ParamVector& params) {
    check_params(spec, params);
    nlohmann::json index = nlohmann::json::array();
    const auto slices = layout(spec);
    for (std::size_t l = 0; l < slices.size(); ++l)
        index.push_back({{"layer", l},
                         {"weight_offset", slices[l].weight_offset},
                         {"weight_rows", slices[l].rows},
                         {"weight_cols", slices[l].cols},
                         {"weight_order", "column-major"},
                         {"bias_offset", slices[l].bias_offset}});
    return {{"spec", spec_to_json(spec)},
            {"index", index},
            {"values", std::vector<double>(params.data(), params.data() + params.size())}};
}

ParamVector params_from_json(const nlohmann::json& j, const MlpSpec& spec) {
    const auto values = j.at("values").get<std::vector<double>>();
    ParamVector p = Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(values.size()));
    check_params(spec, p);
    return p;
}

nlohmann::json to_json(const TrainingLog& log) {
    return {{"train_loss", log.train_loss},
            {"val_loss", log.val_loss},
            {"best_epoch", log.best_epoch},
            {"best_val_loss", log.best_val_loss}};
}

TrainingLog training_log_from_json(const nlohmann::json& j) {
    TrainingLog log;
    log.train_loss = j.at("train_loss").get<std::vector<double>>();
    log.val_loss = j.at("val_loss").get<std::vector<double>>();
    log.best_epoch = j.at("best_epoch").get<int>();
    log.best_val_loss = j.at("best_val_loss").get<double>();
    return log;
}

TrainingLog run_minibatch_epochs(Eigen::Index train_rows, const EpochSchedule& schedule,
                                 const MinibatchHooks& hooks, bool validate) {
    if (train_rows < 1) throw TooFewSamples("no training rows");
    if (schedule.batch_size < 1) throw Error("batch size must be positive");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(train_rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = make_rng(schedule.seed, Stream::shuffle);
    const auto batch = static_cast<std::size_t>(schedule.batch_size);

    TrainingLog log;
    int since_best = 0;
    for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto len = std::min(batch, order.size() - start);
            const double loss = hooks.step(std::span<const Eigen::Index>(order.data() + start, len));
            if (!std::isfinite(loss)) throw NonFiniteLoss(epoch, loss);
            total += loss;
            ++batches;
        }
        log.train_loss.push_back(total / static_cast<double>(batches));

        const double val = validate ? hooks.validation_loss() : log.train_loss.back();
        if (!std::isfinite(val)) throw NonFiniteLoss(epoch, val);
        log.val_loss.push_back(val);
        if (!validate || log.best_epoch < 0 || val < log.best_val_loss) {
            log.best_epoch = epoch;
            log.best_val_loss = val;
            since_best = 0;
            hooks.keep_best();
        } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
            break;
        }
    }
    return log;
}

}  // namespace lvse::nn
