#include <cmath>
#include <random>

#include "doctest.h"
#include "lvse/bnn.hpp"
#include "lvse/errors.hpp"
#include "lvse/random.hpp"
#include "support/oracles.hpp"

using namespace lvse;
using namespace lvse::bnn;

namespace {

VariationalParams random_vp(Eigen::Index n, Rng& rng, double sigma_lo = 0.3, double sigma_hi = 1.5) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u(sigma_lo, sigma_hi);
    VariationalParams vp;
    vp.mu = ParamVector::NullaryExpr(n, [&] { return gauss(rng); });
    vp.rho = ParamVector::NullaryExpr(n, [&] { return inverse_softplus(u(rng)); });
    return vp;
}

BnnModel tiny_model(std::uint64_t seed) {
    BnnModel m;
    m.spec = nn::MlpSpec{{3, 6, 6, 4}};
    Rng rng(seed);
    m.vp = random_vp(static_cast<Eigen::Index>(m.spec.parameter_count()), rng, 0.01, 0.2);
    m.x_norm.mean = Eigen::VectorXd::Zero(3);
    m.x_norm.scale = Eigen::VectorXd::Ones(3);
    m.x_norm.degenerate.assign(3, false);
    m.y_norm.mean = Eigen::VectorXd::Constant(2, 1.0);
    m.y_norm.scale = Eigen::VectorXd::Constant(2, 0.01);
    m.y_norm.degenerate.assign(2, false);
    m.targets = {"a", "b"};
    return m;
}

RealSeries random_inputs(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    return RealSeries::NullaryExpr(n, d, [&] { return gauss(rng); });
}

}  // namespace

TEST_SUITE("bnn") {

TEST_CASE("softplus") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(-1e4) == 0.0);
    CHECK(softplus(50.0) == doctest::Approx(50.0));
    for (double s : {1e-4, 0.05, 1.0, 7.0}) CHECK(softplus(inverse_softplus(s)) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("sample weights") {
    Rng rng(1);
    auto vp = random_vp(4, rng);
    CHECK(sample_weights(vp, Eigen::VectorXd::Zero(4)) == vp.mu);
    auto collapsed = vp;
    collapsed.rho.setConstant(-1e4);
    CHECK(sample_weights(collapsed, Eigen::VectorXd::Constant(4, 3.0)) == vp.mu);
    CHECK_THROWS_AS(sample_weights(vp, Eigen::VectorXd::Zero(3)), DimensionMismatch);

    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k)
        sum += sample_weights(vp, Eigen::VectorXd::NullaryExpr(4, [&] { return gauss(rng); }));
    const Eigen::VectorXd err = (sum / draws - vp.mu).cwiseAbs();
    CHECK((err.array() <= 3.0 * vp.sigma().array() / std::sqrt(double(draws))).all());
}

TEST_CASE("kl to the standard normal") {
    VariationalParams vp{ParamVector::Zero(5), ParamVector::Constant(5, inverse_softplus(1.0))};
    CHECK(std::abs(kl_to_standard_normal(vp)) < 1e-12);
    VariationalParams one{ParamVector::Constant(1, 1.0), ParamVector::Constant(1, inverse_softplus(1.0))};
    CHECK(kl_to_standard_normal(one) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl closed form agrees with Monte Carlo") {
    Rng rng(21);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const auto vp = random_vp(4, rng);
        const Eigen::VectorXd s = vp.sigma();
        double acc = 0.0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i)
            for (Eigen::Index d = 0; d < 4; ++d) {
                const double e = gauss(rng), w = vp.mu(d) + s(d) * e;
                acc += -0.5 * e * e - std::log(s(d)) + 0.5 * w * w;
            }
        const double kl = kl_to_standard_normal(vp);
        CHECK(std::abs(acc / n - kl) < 0.01 * kl);
    }
}

TEST_CASE("heteroscedastic nll hand values") {
    CHECK(nll_loss(Eigen::VectorXd::Ones(6), Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(6)) == 0.0);
    CHECK(nll_loss(Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)) == 0.5);
    CHECK(std::abs(nll_loss(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Zero(1),
                            Eigen::VectorXd::Constant(1, std::log(2.0))) -
                   1.3465735902799727) < 1e-12);
}

TEST_CASE("elbo gradient matches central differences") {
    Rng rng(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> width(2, 10), batch(1, 6);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const int j = std::uniform_int_distribution<int>(1, 3)(rng);
        const nn::MlpSpec spec{{width(rng), width(rng), width(rng), 2 * j}};
        const auto p = static_cast<Eigen::Index>(spec.parameter_count());
        auto vp = random_vp(p, rng, 0.02, 0.3);
        vp.mu *= 0.5;
        const Eigen::VectorXd noise = Eigen::VectorXd::NullaryExpr(p, [&] { return gauss(rng); });
        const int b = batch(rng);
        const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(spec.inputs(), b, [&] { return gauss(rng); });
        const Eigen::MatrixXd y = Eigen::MatrixXd::NullaryExpr(j, b, [&] { return gauss(rng); });
        const double kl_w = 0.5, n_train = 37.0;
        const auto g = elbo_loss_and_grad(spec, vp, noise, x, y, kl_w, n_train);

        const Eigen::VectorXd dmu = Eigen::VectorXd::NullaryExpr(p, [&] { return gauss(rng); }).normalized();
        const Eigen::VectorXd drho = Eigen::VectorXd::NullaryExpr(p, [&] { return gauss(rng); }).normalized();
        const double h = 1e-5;
        auto loss_at = [&](double t) {
            VariationalParams v{vp.mu + t * dmu, vp.rho + t * drho};
            return elbo_loss_and_grad(spec, v, noise, x, y, kl_w, n_train).loss;
        };
        const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
        const double an = g.grad_mu.dot(dmu) + g.grad_rho.dot(drho);
        worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::max(std::abs(fd), std::abs(an))));
        CHECK(g.loss == doctest::Approx(g.nll + kl_w * g.kl / n_train));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("decomposition hand case and degenerate cases") {
    PassSamples s;
    s.yhat = {RealSeries::Constant(1, 1, 1.0), RealSeries::Constant(1, 1, 3.0)};
    s.variance = {RealSeries::Constant(1, 1, 0.5), RealSeries::Constant(1, 1, 1.5)};
    const auto d = decompose(s);
    CHECK(d.mean(0, 0) == 2.0);
    CHECK(d.epistemic(0, 0) == 1.0);
    CHECK(d.aleatoric(0, 0) == 1.0);
    const auto summary = summarize(d, 0.1, 2);
    CHECK(summary.total(0, 0) == 2.0);

    PassSamples same;
    same.yhat.assign(7, RealSeries::Constant(2, 3, 1.0123456789));
    same.variance.assign(7, RealSeries::Zero(2, 3));
    const auto z = decompose(same);
    CHECK((z.epistemic.array() == 0.0).all());
    CHECK((z.aleatoric.array() == 0.0).all());
    CHECK_THROWS_AS(decompose(PassSamples{}), TooFewSamples);
}

TEST_CASE("total equals epistemic plus aleatoric on random summaries") {
    Rng rng(12);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> passes(1, 8);
    int failures = 0;
    for (int k = 0; k < 10000; ++k) {
        PassSamples s;
        const int n = passes(rng);
        for (int p = 0; p < n; ++p) {
            s.yhat.push_back(RealSeries::NullaryExpr(1, 3, [&] { return 1.0 + 0.01 * gauss(rng); }));
            s.variance.push_back(RealSeries::NullaryExpr(1, 3, [&] { return 1e-4 * std::exp(gauss(rng)); }));
        }
        const auto sum = summarize(decompose(s), 0.1, n);
        failures += !(sum.total.array() == sum.epistemic.array() + sum.aleatoric.array()).all();
        failures += !((sum.epistemic.array() >= 0.0).all() && (sum.aleatoric.array() >= 0.0).all());
        failures += !((sum.lower.array() <= sum.mean.array()).all() && (sum.mean.array() <= sum.upper.array()).all());
    }
    CHECK(failures == 0);
}

TEST_CASE("prediction interval and quantiles") {
    PredictiveSummary s;
    s.mean = RealSeries::Constant(1, 1, 1.0);
    s.epistemic = RealSeries::Constant(1, 1, 0.004);
    s.aleatoric = RealSeries::Constant(1, 1, 0.006);
    const auto full = summarize({s.mean, s.epistemic, s.aleatoric}, 0.1, 10);
    CHECK(std::abs((full.upper(0, 0) - full.mean(0, 0)) - 0.16448536269514724) < 1e-12);
    CHECK(std::abs((full.mean(0, 0) - full.lower(0, 0)) - 0.16448536269514724) < 1e-12);

    const auto q = summarize({s.mean, RealSeries::Constant(1, 1, 0.0001), RealSeries::Constant(1, 1, 0.0003)}, 0.1, 10);
    CHECK(quantile(q, 0.5)(0, 0) == 1.0);
    CHECK(std::abs(quantile(q, 0.95)(0, 0) - 1.0328970725390294) < 1e-12);
    for (double level : {0.01, 0.1, 0.3, 0.45})
        CHECK(std::abs(quantile(q, level)(0, 0) + quantile(q, 1.0 - level)(0, 0) - 2.0) < 1e-12);
    CHECK_THROWS(quantile(q, 0.0));
    CHECK_THROWS(quantile(q, 1.0));

    const auto qf = quantile_forecast(q, metrics::quantile_grid());
    CHECK(qf.values.size() == 1);
    CHECK(qf.values[0](0, 49) == 1.0);
    CHECK(qf.values[0](0, 94) == quantile(q, 0.95)(0, 0));
}

TEST_CASE("predict") {
    const auto model = tiny_model(3);
    const auto x = random_inputs(2500, 3, 4);

    SUBCASE("collapsed posterior has zero epistemic variance") {
        auto collapsed = model;
        collapsed.vp.rho.setConstant(-1e4);
        const auto s = predict(collapsed, x, 5, 0.1, 1);
        CHECK((s.epistemic.array() == 0.0).all());
        CHECK((s.aleatoric.array() > 0.0).all());
    }
    SUBCASE("predict and decompose share one implementation") {
        PassSamples keep;
        const auto s = predict(model, x, 6, 0.1, 9, &keep);
        CHECK(keep.yhat.size() == 6);
        const auto d = decompose(keep);
        CHECK(d.mean == s.mean);
        CHECK(d.epistemic == s.epistemic);
        CHECK(d.aleatoric == s.aleatoric);
        CHECK(s.total == s.epistemic + s.aleatoric);
        CHECK(s.n_samples == 6);
    }
    SUBCASE("seeded and chunk independent") {
        const auto a = predict(model, x, 4, 0.1, 2);
        const auto b = predict(model, x, 4, 0.1, 2);
        CHECK(a.mean == b.mean);
        const RealSeries head = x.topRows(10);
        const auto c = predict(model, head, 4, 0.1, 2);
        CHECK(c.mean == a.mean.topRows(10));
        CHECK(c.epistemic == a.epistemic.topRows(10));
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(predict(model, random_inputs(3, 4, 1), 4, 0.1, 1), DimensionMismatch);
        CHECK_THROWS_AS(predict(model, x, 1, 0.1, 1), TooFewSamples);
    }
    SUBCASE("shrinking posterior scales does not raise epistemic variance") {
        double previous = 1e300;
        for (double c : {1.0, 0.6, 0.3, 0.1}) {
            auto scaled = model;
            scaled.vp.rho = (model.vp.sigma() * c).unaryExpr([](double s) { return inverse_softplus(s); });
            double mean_epi = 0.0;
            for (int rep = 0; rep < 10; ++rep)
                mean_epi += predict(scaled, x.topRows(200), 50, 0.1, 100 + static_cast<std::uint64_t>(rep)).epistemic.mean();
            CHECK(mean_epi / 10 <= previous);
            previous = mean_epi / 10;
        }
    }
    SUBCASE("predictive mean is stable in the number of passes") {
        const RealSeries xs = x.topRows(300);
        const auto a = predict(model, xs, 500, 0.1, 21);
        const auto b = predict(model, xs, 2000, 0.1, 22);
        const double rms = std::sqrt((a.mean - b.mean).array().square().mean());
        CHECK(rms < 3.0 * std::sqrt(b.epistemic.mean() / 500.0));
    }
}

TEST_CASE("training") {
    SUBCASE("constant targets") {
        const auto x = random_inputs(600, 3, 7);
        TrainingData d{x.topRows(500), RealSeries::Constant(500, 2, 1.02), x.bottomRows(100),
                       RealSeries::Constant(100, 2, 1.02), {"a", "b", "c"}, {"p", "q"}};
        BnnHyper h;
        h.max_epochs = 150;
        h.patience = 0;
        h.hidden = {8, 8};
        h.learning_rate = 3e-3;
        h.seed = 5;
        const auto m = train_bnn(d, h);
        const auto s = predict(m, x.bottomRows(100), 50, 0.1, 3);
        // Targets normalize to 0 with unit scale, so pu and normalized residuals coincide.
        CHECK((s.mean.array() - 1.02).abs().maxCoeff() < 0.01);
        CHECK(s.aleatoric.mean() < 1e-3);
    }
    SUBCASE("seed determinism") {
        const auto toy = testing::heteroscedastic_toy(300, 1);
        TrainingData d{toy.x.topRows(250), toy.y.topRows(250), toy.x.bottomRows(50), toy.y.bottomRows(50), {"x"}, {"y"}};
        BnnHyper h;
        h.max_epochs = 15;
        h.seed = 8;
        const auto a = train_bnn(d, h);
        const auto b = train_bnn(d, h);
        CHECK(a.log.train_loss == b.log.train_loss);
        CHECK(a.log.val_loss == b.log.val_loss);
        CHECK(a.vp.mu == b.vp.mu);
        h.seed = 9;
        CHECK(train_bnn(d, h).log.train_loss != a.log.train_loss);

        h.refit = true;
        const auto r = train_bnn(d, h);
        CHECK(r.log.best_epoch >= 0);
    }
    SUBCASE("non-finite loss aborts") {
        const auto toy = testing::heteroscedastic_toy(100, 1);
        TrainingData d{toy.x.topRows(80), toy.y.topRows(80), toy.x.bottomRows(20), toy.y.bottomRows(20), {"x"}, {"y"}};
        d.y_train(3, 0) = std::nan("");
        BnnHyper h;
        h.max_epochs = 3;
        CHECK_THROWS_AS(train_bnn(d, h), NonFiniteLoss);
    }
}

TEST_CASE("heteroscedastic toy calibration") {
    const auto train = testing::heteroscedastic_toy(2000, 1);
    const auto val = testing::heteroscedastic_toy(500, 2);
    const auto test = testing::heteroscedastic_toy(4000, 3);
    BnnHyper h;
    h.max_epochs = 800;
    h.patience = 100;
    h.seed = 3;
    const auto m = train_bnn({train.x, train.y, val.x, val.y, {"x"}, {"y"}}, h);
    const auto s = predict(m, test.x, 500, 0.1, 5);
    int inside = 0;
    for (Eigen::Index i = 0; i < test.y.rows(); ++i) inside += s.lower(i, 0) <= test.y(i, 0) && test.y(i, 0) <= s.upper(i, 0);
    const double coverage = inside / static_cast<double>(test.y.rows());
    const Eigen::VectorXd sd = s.aleatoric.col(0).array().sqrt();
    const Eigen::VectorXd a = sd.array() - sd.mean(), b = test.sigma.array() - test.sigma.mean();
    const double pearson = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
    CHECK(coverage >= 0.85);
    CHECK(coverage <= 0.95);
    CHECK(pearson >= 0.8);
    // sigma-hat increases with x
    CHECK(sd(0) > 0.0);
    Eigen::Index lo = 0, hi = 0;
    test.x.col(0).minCoeff(&lo);
    test.x.col(0).maxCoeff(&hi);
    CHECK(sd(hi) > sd(lo));
}

TEST_CASE("checkpoint round trip") {
    const auto model = tiny_model(2);
    const auto back = bnn_model_from_json(to_json(model));
    CHECK(back.vp.mu == model.vp.mu);
    CHECK(back.vp.rho == model.vp.rho);
    CHECK(back.spec.widths == model.spec.widths);
    const auto x = random_inputs(20, 3, 1);
    CHECK(predict(back, x, 3, 0.1, 1).mean == predict(model, x, 3, 0.1, 1).mean);

    const auto h = bnn_hyper_from_json({{"n_samples", 100}, {"kl_weight", 0.5}});
    CHECK(h.n_samples == 100);
    CHECK(h.kl_weight == 0.5);
    CHECK(h.batch_size == 64);
    CHECK_THROWS_AS(bnn_hyper_from_json({{"n_samples", 1}}), ConfigError);
}

}
