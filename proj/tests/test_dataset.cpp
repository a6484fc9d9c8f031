#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "lvse/dataset.hpp"
#include "lvse/errors.hpp"

using namespace lvse;

namespace {

struct Fixture {
    NetworkModel net = build_reference_network();
    ScenarioDataset scenario;
    GroundTruth truth;

    Fixture() {
        scenario = assemble_scenario(ScenarioId::S3, net, TimeAxis({{0, 3}, {160, 2}}), 42);
        truth = compute_ground_truth(net, scenario);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

FeatureMatrix rows_only(Eigen::Index n) {
    FeatureMatrix fm;
    fm.inputs = RealSeries::Zero(n, 2);
    fm.targets = RealSeries::Zero(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) fm.minutes.push_back(i * kStepMinutes);
    return fm;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("lag rows are dropped per segment") {
    const auto& f = fixture();
    const auto fm = build_features(f.scenario, f.truth, FeatureSetId::FS1);
    CHECK(fm.rows() == static_cast<Eigen::Index>(f.scenario.axis.size()) - 2 * kStepsPerDay);
    CHECK(fm.minutes.front() == kMinutesPerDay);
    CHECK(fm.targets.cols() == 6);
    CHECK(fm.target_names == f.truth.monitored_names);
    CHECK(fm.inputs.allFinite());
    CHECK(fm.inputs.cols() == 28);
}

TEST_CASE("feature sets are nested and leakage free") {
    const auto& f = fixture();
    const auto fs1 = build_features(f.scenario, f.truth, FeatureSetId::FS1);
    const auto fs2 = build_features(f.scenario, f.truth, FeatureSetId::FS2);
    const auto fs3 = build_features(f.scenario, f.truth, FeatureSetId::FS3);
    CHECK(fs3.inputs.cols() == fs2.inputs.cols() + 3);
    auto contains = [](const FeatureMatrix& big, const FeatureMatrix& small) {
        const auto names = big.column_names();
        for (const auto& n : small.column_names())
            if (std::find(names.begin(), names.end(), n) == names.end()) return false;
        return true;
    };
    CHECK(contains(fs2, fs1));
    CHECK(contains(fs3, fs2));
    CHECK_FALSE(contains(fs1, fs2));

    for (const auto& c : fs1.columns) {
        const bool exogenous = c.provenance == "weather" || c.provenance == "calendar" || c.provenance == "price";
        const bool lagged = c.provenance == "sm_lag" && c.lag_minutes >= kMinutesPerDay;
        CHECK_MESSAGE(exogenous != lagged, c.name);
    }
    for (const auto& c : fs2.columns) CHECK(c.provenance != "subs");
    for (const auto& c : fs2.columns) CHECK(c.name != "subp_vm_pu");
}

TEST_CASE("lagged values come from exactly 24 hours earlier") {
    const auto& f = fixture();
    const auto fm = build_features(f.scenario, f.truth, FeatureSetId::FS3);
    const auto names = fm.column_names();
    const auto col = std::find(names.begin(), names.end(), "L4_p_kw_lag24h") - names.begin();
    const auto bus = f.net.bus_index("L4");
    for (Eigen::Index r = 0; r < fm.rows(); r += 97) {
        const auto src = *f.scenario.axis.find(fm.minutes[static_cast<std::size_t>(r)] - kMinutesPerDay);
        CHECK(fm.inputs(r, col) == f.scenario.p_kw(static_cast<Eigen::Index>(src), bus));
        const auto now = *f.scenario.axis.find(fm.minutes[static_cast<std::size_t>(r)]);
        CHECK(fm.targets(r, 3) == f.truth.states.monitored_vm(static_cast<Eigen::Index>(now), 3));
        CHECK(fm.activation(r, 3) == f.scenario.flags(static_cast<Eigen::Index>(now), bus));
    }
    const auto vm = std::find(names.begin(), names.end(), "subs_vm_pu") - names.begin();
    CHECK(fm.inputs(0, vm) == f.truth.states.subs_vm(kStepsPerDay));
}

TEST_CASE("misaligned truth is rejected") {
    const auto& f = fixture();
    auto truth = f.truth;
    truth.minutes[5] += kStepMinutes;
    CHECK_THROWS_AS(build_features(f.scenario, truth, FeatureSetId::FS1), AlignmentError);
}

TEST_CASE("chronological split sizes") {
    auto fm = rows_only(100);
    auto s = split(fm);
    CHECK(s.train.rows() == 80);
    CHECK(s.validation.rows() == 10);
    CHECK(s.test.rows() == 10);
    fm = rows_only(10);
    s = split(fm);
    CHECK(s.train.rows() == 8);
    CHECK(s.validation.rows() == 1);
    CHECK(s.test.rows() == 1);
    fm = rows_only(12345);
    s = split(fm);
    CHECK(s.train.rows() + s.validation.rows() + s.test.rows() == 12345);
    CHECK(s.train.end == s.validation.begin);
    CHECK(s.validation.end == s.test.begin);
    CHECK(s.validation.minute(0) > s.train.minute(s.train.rows() - 1));
    CHECK(s.test.minute(0) > s.validation.minute(s.validation.rows() - 1));
    fm = rows_only(9);
    CHECK_THROWS_AS(split(fm), TooFewSamples);
    fm = rows_only(50);
    CHECK_THROWS_AS(split(fm, {0.5, 0.4, 0.4}), ConfigError);
}

TEST_CASE("normalizer") {
    const auto& f = fixture();
    const auto fm = build_features(f.scenario, f.truth, FeatureSetId::FS3);
    const auto s = split(fm);
    const RealSeries train = s.train.inputs();
    const auto norm = Normalizer::fit(train, fm.column_names());
    const auto z = norm.apply(train);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        if (norm.degenerate[static_cast<std::size_t>(c)]) continue;
        const double mean = z.col(c).mean();
        const double sd = std::sqrt((z.col(c).array() - mean).square().mean());
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(sd - 1.0) < 1e-10);
    }
    const RealSeries y = s.train.targets();
    const auto ynorm = Normalizer::fit(y);
    CHECK((ynorm.invert(ynorm.apply(y)) - y).cwiseAbs().maxCoeff() < 1e-12);

    RealSeries constant(5, 2);
    constant << 1, 3, 2, 3, 3, 3, 4, 3, 5, 3;
    const auto cn = Normalizer::fit(constant, {"a", "b"});
    CHECK(cn.degenerate[1]);
    CHECK(cn.apply(constant).col(1).isZero());
    CHECK_THROWS_AS(cn.apply(RealSeries::Zero(2, 3)), DimensionMismatch);

    const auto back = normalizer_from_json(to_json(norm));
    CHECK(back.mean == norm.mean);
    CHECK(back.scale == norm.scale);
    CHECK(back.degenerate == norm.degenerate);
}

TEST_CASE("ground truth and feature persistence") {
    const auto& f = fixture();
    const auto dir = std::filesystem::temp_directory_path() / "lvse_dataset_io";
    std::filesystem::remove_all(dir);
    save_ground_truth(f.truth, dir);
    const auto back = load_ground_truth(dir);
    CHECK(back.minutes == f.truth.minutes);
    CHECK(back.states.monitored_vm == f.truth.states.monitored_vm);
    // Measurements are stored in kW, so features built from either copy agree.
    const auto a = build_features(f.scenario, f.truth, FeatureSetId::FS3);
    const auto b = build_features(f.scenario, back, FeatureSetId::FS3);
    CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() < 1e-9);

    const auto s = split(a);
    save_feature_matrix(a, s, Normalizer::fit(s.train.inputs()), Normalizer::fit(s.train.targets()),
                        dir / "features.csv");
    const auto sidecar = nlohmann::json::parse(std::ifstream(dir / "features.json"));
    CHECK(sidecar["split"]["mode"] == "chronological");
    CHECK(sidecar["split"]["test"]["end"] == a.rows());
    CHECK(sidecar["columns"].size() == static_cast<std::size_t>(a.inputs.cols()));
    std::filesystem::remove_all(dir);
}

}
