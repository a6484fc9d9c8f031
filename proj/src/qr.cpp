#include "lvse/qr.hpp"

#include <algorithm>
#include <cmath>

#include "lvse/errors.hpp"
#include "lvse/random.hpp"

namespace lvse::qr {

nlohmann::json to_json(const QrHyper& h) {
    return {{"hidden", h.hidden},
            {"batch_size", h.batch_size},
            {"max_epochs", h.max_epochs},
            {"patience", h.patience},
            {"learning_rate", h.learning_rate},
            {"lower_level", h.lower_level},
            {"upper_level", h.upper_level},
            {"seed", h.seed}};
}

QrHyper qr_hyper_from_json(const nlohmann::json& j, QrHyper h) {
    h.hidden = j.value("hidden", h.hidden);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.max_epochs = j.value("max_epochs", h.max_epochs);
    h.patience = j.value("patience", h.patience);
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.lower_level = j.value("lower_level", h.lower_level);
    h.upper_level = j.value("upper_level", h.upper_level);
    h.seed = j.value("seed", h.seed);
    if (!(0.0 < h.lower_level && h.lower_level < h.upper_level && h.upper_level < 1.0))
        throw ConfigError("QR interval levels must satisfy 0 < lower < upper < 1");
    return h;
}

double pinball_batch(const Eigen::MatrixXd& out, const Eigen::MatrixXd& y, const std::vector<double>& levels,
                     Eigen::MatrixXd* grad) {
    const auto q = static_cast<Eigen::Index>(levels.size());
    const auto j = y.rows();
    if (out.rows() != j * q || out.cols() != y.cols())
        throw DimensionMismatch("quantile head", static_cast<std::size_t>(j * q * y.cols()),
                                static_cast<std::size_t>(out.size()));
    const double denom = static_cast<double>(out.size());
    if (grad) grad->resize(out.rows(), out.cols());
    double total = 0.0;
    for (Eigen::Index b = 0; b < out.cols(); ++b)
        for (Eigen::Index bus = 0; bus < j; ++bus)
            for (Eigen::Index k = 0; k < q; ++k) {
                const Eigen::Index row = bus * q + k;
                const double level = levels[static_cast<std::size_t>(k)];
                const double r = y(bus, b) - out(row, b);
                total += r >= 0.0 ? level * r : (level - 1.0) * r;
                if (grad) (*grad)(row, b) = (r > 0.0 ? -level : 1.0 - level) / denom;
            }
    return total / denom;
}

QrModel train_qr(const bnn::TrainingData& data, const QrHyper& hyper) {
    if (data.x_train.rows() != data.y_train.rows() || data.x_val.rows() != data.y_val.rows())
        throw DimensionMismatch("training rows", static_cast<std::size_t>(data.x_train.rows()),
                                static_cast<std::size_t>(data.y_train.rows()));
    if (data.x_val.rows() < 1) throw TooFewSamples("validation split is empty");

    QrModel model;
    model.levels = metrics::quantile_grid();
    model.targets = data.targets;
    model.x_norm = Normalizer::fit(data.x_train, data.input_names);
    model.y_norm = Normalizer::fit(data.y_train, data.targets);
    const auto q = static_cast<int>(model.levels.size());
    std::vector<int> widths{static_cast<int>(data.x_train.cols())};
    widths.insert(widths.end(), hyper.hidden.begin(), hyper.hidden.end());
    widths.push_back(q * static_cast<int>(data.y_train.cols()));
    model.spec = nn::MlpSpec{widths};
    model.spec.validate();

    const auto xt = model.x_norm.apply(data.x_train);
    const auto yt = model.y_norm.apply(data.y_train);
    const Eigen::MatrixXd xv = model.x_norm.apply(data.x_val).transpose();
    const Eigen::MatrixXd yv = model.y_norm.apply(data.y_val).transpose();

    model.params = nn::init_params(model.spec, derive_seed(hyper.seed, {static_cast<std::uint64_t>(Stream::init)}));
    nn::AdamState adam(model.params.size(), hyper.learning_rate);
    nn::ParamVector best = model.params;

    nn::MinibatchHooks hooks;
    hooks.step = [&](std::span<const Eigen::Index> rows) {
        const auto xb = nn::gather_columns(xt, rows);
        const auto yb = nn::gather_columns(yt, rows);
        const auto cache = nn::forward_batch(model.spec, model.params, xb);
        Eigen::MatrixXd upstream;
        const double loss = pinball_batch(cache.output(), yb, model.levels, &upstream);
        nn::adam_step(adam, model.params, nn::backward(model.spec, model.params, cache, upstream).params);
        return loss;
    };
    hooks.validation_loss = [&] {
        return pinball_batch(nn::forward_batch(model.spec, model.params, xv).output(), yv, model.levels);
    };
    hooks.keep_best = [&] { best = model.params; };

    nn::EpochSchedule schedule{hyper.max_epochs, hyper.patience, hyper.batch_size, hyper.seed};
    model.log = nn::run_minibatch_epochs(xt.rows(), schedule, hooks);
    model.params = best;
    return model;
}

namespace {

Eigen::Index level_index(const std::vector<double>& levels, double level) {
    for (std::size_t k = 0; k < levels.size(); ++k)
        if (std::abs(levels[k] - level) < 1e-9) return static_cast<Eigen::Index>(k);
    throw GridMismatch("level " + std::to_string(level) + " is not on the quantile grid");
}

}  // namespace

QuantilePrediction predict_quantiles(const QrModel& model, const RealSeries& x, double lower_level,
                                     double upper_level) {
    if (x.cols() != model.inputs())
        throw DimensionMismatch("input dimension", static_cast<std::size_t>(model.inputs()),
                                static_cast<std::size_t>(x.cols()));
    const auto q = static_cast<Eigen::Index>(model.levels.size());
    const auto j = static_cast<Eigen::Index>(model.buses());
    const auto n = x.rows();
    const auto k_mid = level_index(model.levels, 0.5);
    const auto k_lo = level_index(model.levels, lower_level);
    const auto k_hi = level_index(model.levels, upper_level);

    const Eigen::MatrixXd xt = model.x_norm.apply(x).transpose();
    Eigen::MatrixXd out(model.spec.outputs(), n);
    constexpr Eigen::Index kChunk = 1024;
    for (Eigen::Index start = 0; start < n; start += kChunk) {
        const auto len = std::min(kChunk, n - start);
        out.middleCols(start, len) = nn::forward_batch(model.spec, model.params, xt.middleCols(start, len)).output();
    }
    QuantilePrediction p;
    p.quantiles.levels = model.levels;
    p.point.resize(n, j);
    p.lower.resize(n, j);
    p.upper.resize(n, j);
    for (Eigen::Index bus = 0; bus < j; ++bus) {
        RealSeries m(n, q);
        const double scale = model.y_norm.scale(bus), shift = model.y_norm.mean(bus);
        for (Eigen::Index t = 0; t < n; ++t) {
            for (Eigen::Index k = 0; k < q; ++k) m(t, k) = out(bus * q + k, t) * scale + shift;
            std::sort(m.row(t).begin(), m.row(t).end());
            p.point(t, bus) = m(t, k_mid);
            p.lower(t, bus) = m(t, k_lo);
            p.upper(t, bus) = m(t, k_hi);
        }
        p.quantiles.values.push_back(std::move(m));
    }
    return p;
}

nlohmann::json to_json(const QrModel& model) {
    return {{"model", "qr"},
            {"spec", nn::spec_to_json(model.spec)},
            {"params", nn::params_to_json(model.spec, model.params)},
            {"quantile_grid", model.levels},
            {"output_index", "bus * levels + level"},
            {"rearrangement", "sort"},
            {"input_normalizer", to_json(model.x_norm)},
            {"target_normalizer", to_json(model.y_norm)},
            {"training_log", nn::to_json(model.log)},
            {"targets", model.targets}};
}

QrModel qr_model_from_json(const nlohmann::json& j) {
    QrModel m;
    m.spec = nn::spec_from_json(j.at("spec"));
    m.params = nn::params_from_json(j.at("params"), m.spec);
    m.levels = j.at("quantile_grid").get<std::vector<double>>();
    m.x_norm = normalizer_from_json(j.at("input_normalizer"));
    m.y_norm = normalizer_from_json(j.at("target_normalizer"));
    m.log = nn::training_log_from_json(j.at("training_log"));
    m.targets = j.at("targets").get<std::vector<std::string>>();
    return m;
}

}  // namespace lvse::qr
