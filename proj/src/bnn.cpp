#include "lvse/bnn.hpp"

#include <algorithm>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "lvse/errors.hpp"
#include "lvse/random.hpp"

namespace lvse::bnn {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw Error("softplus is only invertible for positive values");
    return y + std::log(-std::expm1(-y));
}

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double normal_quantile(double q) {
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), q);
}

Eigen::VectorXd draw_normal(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = gauss(rng);
    return out;
}

RealSeries vstack(const RealSeries& a, const RealSeries& b) {
    RealSeries out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

}  // namespace

Eigen::VectorXd VariationalParams::sigma() const { return rho.unaryExpr([](double r) { return softplus(r); }); }

ParamVector sample_weights(const VariationalParams& vp, const Eigen::VectorXd& noise) {
    if (noise.size() != vp.size())
        throw DimensionMismatch("noise length", static_cast<std::size_t>(vp.size()),
                                static_cast<std::size_t>(noise.size()));
    return vp.mu + vp.sigma().cwiseProduct(noise);
}

double kl_to_standard_normal(const VariationalParams& vp) {
    const Eigen::ArrayXd sigma = vp.sigma().array();
    return 0.5 * (vp.mu.array().square() + sigma.square() - 1.0 - 2.0 * sigma.log()).sum();
}

double nll_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, const Eigen::VectorXd& s) {
    if (y.size() != yhat.size() || y.size() != s.size())
        throw DimensionMismatch("nll inputs", static_cast<std::size_t>(y.size()),
                                static_cast<std::size_t>(yhat.size()));
    const Eigen::ArrayXd r = (y - yhat).array();
    return (0.5 * (-s.array()).exp() * r.square() + 0.5 * s.array()).mean();
}

ElboGradient elbo_loss_and_grad(const nn::MlpSpec& spec, const VariationalParams& vp,
                                const Eigen::VectorXd& noise, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& y, double kl_weight, double n_train) {
    const auto j = static_cast<Eigen::Index>(spec.outputs() / 2);
    if (y.rows() != j || y.cols() != x.cols())
        throw DimensionMismatch("target batch", static_cast<std::size_t>(j * x.cols()),
                                static_cast<std::size_t>(y.size()));
    const ParamVector w = sample_weights(vp, noise);
    const auto cache = nn::forward_batch(spec, w, x);
    const auto& out = cache.output();
    const Eigen::ArrayXXd r = (y - out.topRows(j)).array();
    const Eigen::ArrayXXd inv_var = (-out.bottomRows(j).array()).exp();
    const double denom = static_cast<double>(j * x.cols());

    ElboGradient g;
    g.nll = (0.5 * inv_var * r.square() + 0.5 * out.bottomRows(j).array()).sum() / denom;
    g.kl = kl_to_standard_normal(vp);
    g.loss = g.nll + kl_weight * g.kl / n_train;

    Eigen::MatrixXd upstream(out.rows(), out.cols());
    upstream.topRows(j) = (-inv_var * r / denom).matrix();
    upstream.bottomRows(j) = (0.5 * (1.0 - inv_var * r.square()) / denom).matrix();
    const ParamVector gw = nn::backward(spec, w, cache, upstream).params;

    const double c = kl_weight / n_train;
    const Eigen::ArrayXd sigma = vp.sigma().array();
    const Eigen::ArrayXd dsigma = vp.rho.unaryExpr([](double v) { return sigmoid(v); }).array();
    g.grad_mu = gw + c * vp.mu;
    g.grad_rho = ((gw.array() * noise.array() + c * (sigma - 1.0 / sigma)) * dsigma).matrix();
    return g;
}

nlohmann::json to_json(const BnnHyper& h) {
    return {{"hidden", h.hidden},
            {"batch_size", h.batch_size},
            {"max_epochs", h.max_epochs},
            {"patience", h.patience},
            {"learning_rate", h.learning_rate},
            {"kl_weight", h.kl_weight},
            {"sigma_init", h.sigma_init},
            {"logvar_bias_init", h.logvar_bias_init},
            {"refit", h.refit},
            {"n_samples", h.n_samples},
            {"alpha", h.alpha},
            {"seed", h.seed}};
}

BnnHyper bnn_hyper_from_json(const nlohmann::json& j, BnnHyper h) {
    h.hidden = j.value("hidden", h.hidden);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.max_epochs = j.value("max_epochs", h.max_epochs);
    h.patience = j.value("patience", h.patience);
    h.learning_rate = j.value("learning_rate", h.learning_rate);
    h.kl_weight = j.value("kl_weight", h.kl_weight);
    h.sigma_init = j.value("sigma_init", h.sigma_init);
    h.logvar_bias_init = j.value("logvar_bias_init", h.logvar_bias_init);
    h.refit = j.value("refit", h.refit);
    h.n_samples = j.value("n_samples", h.n_samples);
    h.alpha = j.value("alpha", h.alpha);
    h.seed = j.value("seed", h.seed);
    if (h.n_samples < 2) throw ConfigError("n_samples must be at least 2");
    if (!(h.alpha > 0.0 && h.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(h.sigma_init > 0.0)) throw ConfigError("sigma_init must be positive");
    return h;
}

TrainingData training_data(const FeatureView& train, const FeatureView& val) {
    TrainingData d;
    d.x_train = train.inputs();
    d.y_train = train.targets();
    d.x_val = val.inputs();
    d.y_val = val.targets();
    d.input_names = train.source->column_names();
    d.targets = train.source->target_names;
    return d;
}

namespace {

VariationalParams init_variational(const nn::MlpSpec& spec, const BnnHyper& hyper) {
    VariationalParams vp;
    vp.mu = nn::init_params(spec, derive_seed(hyper.seed, {static_cast<std::uint64_t>(Stream::init)}));
    const auto& last = nn::layout(spec).back();
    const auto j = last.rows / 2;
    vp.mu.segment(last.bias_offset + j, j).setConstant(hyper.logvar_bias_init);
    vp.rho = ParamVector::Constant(vp.mu.size(), inverse_softplus(hyper.sigma_init));
    return vp;
}

// Fits vp in place; returns the log of the epoch loop.
nn::TrainingLog fit(const nn::MlpSpec& spec, VariationalParams& vp, const RealSeries& x, const RealSeries& y,
                    const RealSeries* x_val, const RealSeries* y_val, const BnnHyper& hyper, int epochs,
                    std::uint64_t stream_seed) {
    const auto p = vp.size();
    nn::AdamState adam(2 * p, hyper.learning_rate);
    ParamVector theta(2 * p);
    theta << vp.mu, vp.rho;
    Rng noise_rng = make_rng(stream_seed, Stream::noise);
    const double n_train = static_cast<double>(x.rows());

    Eigen::MatrixXd xv, yv;
    if (x_val) {
        xv = x_val->transpose();
        yv = y_val->transpose();
    }

    VariationalParams best = vp;
    nn::MinibatchHooks hooks;
    hooks.step = [&](std::span<const Eigen::Index> rows) {
        const auto xb = nn::gather_columns(x, rows);
        const auto yb = nn::gather_columns(y, rows);
        const auto noise = draw_normal(p, noise_rng);
        const auto g = elbo_loss_and_grad(spec, vp, noise, xb, yb, hyper.kl_weight, n_train);
        ParamVector grad(2 * p);
        grad << g.grad_mu, g.grad_rho;
        nn::adam_step(adam, theta, grad);
        vp.mu = theta.head(p);
        vp.rho = theta.tail(p);
        return g.loss;
    };
    hooks.validation_loss = [&] {
        const auto out = nn::forward_batch(spec, vp.mu, xv).output();
        const auto j = yv.rows();
        const Eigen::ArrayXXd r = (yv - out.topRows(j)).array();
        const Eigen::ArrayXXd s = out.bottomRows(j).array();
        return (0.5 * (-s).exp() * r.square() + 0.5 * s).mean();
    };
    hooks.keep_best = [&] { best = vp; };

    nn::EpochSchedule schedule{epochs, hyper.patience, hyper.batch_size, stream_seed};
    auto log = nn::run_minibatch_epochs(x.rows(), schedule, hooks, x_val != nullptr);
    vp = best;
    return log;
}

}  // namespace

BnnModel train_bnn(const TrainingData& data, const BnnHyper& hyper) {
    if (data.x_train.rows() != data.y_train.rows() || data.x_val.rows() != data.y_val.rows())
        throw DimensionMismatch("training rows", static_cast<std::size_t>(data.x_train.rows()),
                                static_cast<std::size_t>(data.y_train.rows()));
    if (data.x_val.rows() < 1) throw TooFewSamples("validation split is empty");

    BnnModel model;
    model.targets = data.targets;
    model.kl_weight = hyper.kl_weight;
    model.x_norm = Normalizer::fit(data.x_train, data.input_names);
    model.y_norm = Normalizer::fit(data.y_train, data.targets);
    std::vector<int> widths{static_cast<int>(data.x_train.cols())};
    widths.insert(widths.end(), hyper.hidden.begin(), hyper.hidden.end());
    widths.push_back(2 * static_cast<int>(data.y_train.cols()));
    model.spec = nn::MlpSpec{widths};
    model.spec.validate();

    const auto xt = model.x_norm.apply(data.x_train);
    const auto yt = model.y_norm.apply(data.y_train);
    const auto xv = model.x_norm.apply(data.x_val);
    const auto yv = model.y_norm.apply(data.y_val);

    model.vp = init_variational(model.spec, hyper);
    model.log = fit(model.spec, model.vp, xt, yt, &xv, &yv, hyper, hyper.max_epochs, hyper.seed);

    if (hyper.refit) {
        model.vp = init_variational(model.spec, hyper);
        fit(model.spec, model.vp, vstack(xt, xv), vstack(yt, yv), nullptr, nullptr, hyper,
            model.log.best_epoch + 1, hyper.seed);
    }
    return model;
}

void MomentAccumulator::add(const RealSeries& yhat, const RealSeries& variance) {
    if (passes_ == 0) {
        shift_ = yhat;
        sum_ = RealSeries::Zero(yhat.rows(), yhat.cols());
        sum_sq_ = sum_;
        sum_var_ = sum_;
    } else if (yhat.rows() != shift_.rows() || yhat.cols() != shift_.cols()) {
        throw DimensionMismatch("pass shape", static_cast<std::size_t>(shift_.size()),
                                static_cast<std::size_t>(yhat.size()));
    }
    const RealSeries d = yhat - shift_;
    sum_ += d;
    sum_sq_.array() += d.array().square();
    sum_var_ += variance;
    ++passes_;
}

Decomposition MomentAccumulator::finish() const {
    if (passes_ < 1) throw TooFewSamples("decomposition needs at least one pass");
    const double n = static_cast<double>(passes_);
    Decomposition d;
    const RealSeries m = sum_ / n;
    d.mean = shift_ + m;
    d.epistemic = (sum_sq_.array() / n - m.array().square()).cwiseMax(0.0);
    d.aleatoric = sum_var_ / n;
    return d;
}

Decomposition decompose(const PassSamples& samples) {
    if (samples.yhat.size() != samples.variance.size())
        throw DimensionMismatch("sample passes", samples.yhat.size(), samples.variance.size());
    MomentAccumulator acc;
    for (std::size_t k = 0; k < samples.yhat.size(); ++k) acc.add(samples.yhat[k], samples.variance[k]);
    return acc.finish();
}

PredictiveSummary summarize(Decomposition d, double alpha, int n_samples) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    PredictiveSummary s;
    s.alpha = alpha;
    s.n_samples = n_samples;
    s.mean = std::move(d.mean);
    s.epistemic = std::move(d.epistemic);
    s.aleatoric = std::move(d.aleatoric);
    s.total = s.epistemic + s.aleatoric;
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const RealSeries half = z * s.total.array().sqrt();
    s.lower = s.mean - half;
    s.upper = s.mean + half;
    return s;
}

PredictiveSummary predict(const BnnModel& model, const RealSeries& x, int n_samples, double alpha,
                          std::uint64_t seed, PassSamples* keep) {
    if (n_samples < 2) throw TooFewSamples("prediction needs at least 2 passes");
    if (x.cols() != model.inputs())
        throw DimensionMismatch("input dimension", static_cast<std::size_t>(model.inputs()),
                                static_cast<std::size_t>(x.cols()));
    constexpr Eigen::Index kChunk = 1024;
    const Eigen::MatrixXd xt = model.x_norm.apply(x).transpose();
    const auto n = x.rows();
    const auto j = static_cast<Eigen::Index>(model.buses());
    const Eigen::ArrayXd y_mean = model.y_norm.mean.array();
    const Eigen::ArrayXd y_var = model.y_norm.scale.array().square();

    MomentAccumulator acc;
    RealSeries yhat(n, j), var(n, j);
    for (int k = 0; k < n_samples; ++k) {
        Rng rng = make_rng(seed, Stream::predict, static_cast<std::uint64_t>(k));
        const ParamVector w = sample_weights(model.vp, draw_normal(model.vp.size(), rng));
        for (Eigen::Index start = 0; start < n; start += kChunk) {
            const auto len = std::min(kChunk, n - start);
            const auto out = nn::forward_batch(model.spec, w, xt.middleCols(start, len)).output();
            for (Eigen::Index c = 0; c < len; ++c) {
                yhat.row(start + c) = (out.col(c).head(j).array() * model.y_norm.scale.array() + y_mean).matrix();
                var.row(start + c) = (out.col(c).tail(j).array().exp() * y_var).matrix();
            }
        }
        acc.add(yhat, var);
        if (keep) {
            keep->yhat.push_back(yhat);
            keep->variance.push_back(var);
        }
    }
    return summarize(acc.finish(), alpha, n_samples);
}

RealSeries quantile(const PredictiveSummary& summary, double q) {
    if (!(q > 0.0 && q < 1.0)) throw Error("quantile level must lie in (0, 1)");
    if (q == 0.5) return summary.mean;
    return summary.mean + normal_quantile(q) * summary.total.array().sqrt().matrix();
}

metrics::QuantileForecast quantile_forecast(const PredictiveSummary& summary, const std::vector<double>& levels) {
    metrics::QuantileForecast f;
    f.levels = levels;
    const auto n = summary.mean.rows();
    const auto q = static_cast<Eigen::Index>(levels.size());
    const RealSeries sd = summary.total.array().sqrt();
    for (Eigen::Index j = 0; j < summary.mean.cols(); ++j) {
        RealSeries m(n, q);
        for (Eigen::Index k = 0; k < q; ++k) {
            const double level = levels[static_cast<std::size_t>(k)];
            m.col(k) = level == 0.5 ? summary.mean.col(j).eval()
                                    : (summary.mean.col(j) + normal_quantile(level) * sd.col(j)).eval();
        }
        f.values.push_back(std::move(m));
    }
    return f;
}

nlohmann::json to_json(const BnnModel& model) {
    return {{"model", "bnn"},
            {"spec", nn::spec_to_json(model.spec)},
            {"mu", nn::params_to_json(model.spec, model.vp.mu)},
            {"rho", nn::params_to_json(model.spec, model.vp.rho)},
            {"sigma_transform", "softplus"},
            {"input_normalizer", to_json(model.x_norm)},
            {"target_normalizer", to_json(model.y_norm)},
            {"training_log", nn::to_json(model.log)},
            {"kl_weight", model.kl_weight},
            {"targets", model.targets}};
}

BnnModel bnn_model_from_json(const nlohmann::json& j) {
    BnnModel m;
    m.spec = nn::spec_from_json(j.at("spec"));
    m.vp.mu = nn::params_from_json(j.at("mu"), m.spec);
    m.vp.rho = nn::params_from_json(j.at("rho"), m.spec);
    m.x_norm = normalizer_from_json(j.at("input_normalizer"));
    m.y_norm = normalizer_from_json(j.at("target_normalizer"));
    m.log = nn::training_log_from_json(j.at("training_log"));
    m.kl_weight = j.at("kl_weight").get<double>();
    m.targets = j.at("targets").get<std::vector<std::string>>();
    return m;
}

}  // namespace lvse::bnn
