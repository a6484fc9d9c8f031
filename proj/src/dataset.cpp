#include "lvse/dataset.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

#include "lvse/errors.hpp"
#include "lvse/io.hpp"

namespace lvse {

GroundTruth compute_ground_truth(const NetworkModel& net, const ScenarioDataset& scenario) {
    GroundTruth out;
    out.minutes = scenario.axis.minutes();
    for (int b : net.monitored()) out.monitored_names.push_back(net.buses()[static_cast<std::size_t>(b)].name);
    out.base_power_kva = net.base_power_kva();
    out.states = simulate_network_states(net, scenario.injections_pu(net.base_power_kva()));
    return out;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> keys;
    keys.reserve(truth.minutes.size());
    for (auto m : truth.minutes) keys.push_back(iso8601(m));
    io::write_csv(dir / "voltages.csv", {"timestamp", keys, truth.monitored_names, truth.states.monitored_vm});

    const auto n = static_cast<Eigen::Index>(keys.size());
    io::CsvTable meas{"timestamp", keys,
                      {"subp_p_kw", "subp_q_kvar", "subs_p_kw", "subs_q_kvar", "subs_vm_pu"},
                      RealSeries(n, 5)};
    meas.values.col(0) = truth.states.subp_p * truth.base_power_kva;
    meas.values.col(1) = truth.states.subp_q * truth.base_power_kva;
    meas.values.col(2) = truth.states.subs_p * truth.base_power_kva;
    meas.values.col(3) = truth.states.subs_q * truth.base_power_kva;
    meas.values.col(4) = truth.states.subs_vm;
    io::write_csv(dir / "measurements.csv", meas);
}

GroundTruth load_ground_truth(const std::filesystem::path& dir) {
    const auto volts = io::read_csv(dir / "voltages.csv");
    const auto meas = io::read_csv(dir / "measurements.csv");
    if (volts.keys != meas.keys) throw AlignmentError("voltage and measurement files are not aligned");
    GroundTruth out;
    for (const auto& k : volts.keys) out.minutes.push_back(parse_iso8601(k));
    out.monitored_names = volts.columns;
    out.base_power_kva = 1.0;  // measurements are stored in kW already
    out.states.monitored_vm = volts.values;
    out.states.subp_p = meas.values.col(meas.column("subp_p_kw"));
    out.states.subp_q = meas.values.col(meas.column("subp_q_kvar"));
    out.states.subs_p = meas.values.col(meas.column("subs_p_kw"));
    out.states.subs_q = meas.values.col(meas.column("subs_q_kvar"));
    out.states.subs_vm = meas.values.col(meas.column("subs_vm_pu"));
    return out;
}

std::string to_string(FeatureSetId fs) {
    switch (fs) {
        case FeatureSetId::FS1: return "FS1";
        case FeatureSetId::FS2: return "FS2";
        case FeatureSetId::FS3: return "FS3";
    }
    return "?";
}

FeatureSetId feature_set_from_string(const std::string& name) {
    if (name == "FS1") return FeatureSetId::FS1;
    if (name == "FS2") return FeatureSetId::FS2;
    if (name == "FS3") return FeatureSetId::FS3;
    throw ConfigError("unknown feature set '" + name + "'");
}

std::vector<std::string> FeatureMatrix::column_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) out.push_back(c.name);
    return out;
}

FeatureMatrix build_features(const ScenarioDataset& scenario, const GroundTruth& truth, FeatureSetId fs) {
    const auto& axis = scenario.axis;
    if (truth.minutes != axis.minutes())
        throw AlignmentError("ground truth timestamps do not match the scenario axis");
    if (static_cast<std::size_t>(truth.states.monitored_vm.rows()) != axis.size())
        throw AlignmentError("ground truth rows do not match the scenario axis");

    std::vector<int> monitored, aggregates;
    for (std::size_t b = 0; b < scenario.bus_names.size(); ++b) {
        const auto& name = scenario.bus_names[b];
        for (const auto& m : truth.monitored_names)
            if (m == name) monitored.push_back(static_cast<int>(b));
        if (name.rfind("Sub", 0) == 0 && name != kSubpName && name != kSubsName)
            aggregates.push_back(static_cast<int>(b));
    }
    if (monitored.size() != truth.monitored_names.size())
        throw AlignmentError("monitored buses missing from the scenario");

    FeatureMatrix fm;
    fm.feature_set = fs;
    fm.scenario = scenario.id;
    fm.target_names = truth.monitored_names;

    std::vector<int> lag_buses = monitored;
    lag_buses.insert(lag_buses.end(), aggregates.begin(), aggregates.end());
    for (int b : lag_buses) {
        const auto& name = scenario.bus_names[static_cast<std::size_t>(b)];
        fm.columns.push_back({name + "_p_kw_lag24h", "sm_lag", kMinutesPerDay});
        fm.columns.push_back({name + "_q_kvar_lag24h", "sm_lag", kMinutesPerDay});
    }
    fm.columns.push_back({"temperature_c", "weather", 0});
    fm.columns.push_back({"solar_w_m2", "weather", 0});
    fm.columns.push_back({"price_eur_per_kwh", "price", 0});
    fm.columns.push_back({"tod_sin", "calendar", 0});
    fm.columns.push_back({"tod_cos", "calendar", 0});
    fm.columns.push_back({"weekend", "calendar", 0});
    if (fs != FeatureSetId::FS1) {
        fm.columns.push_back({"subp_p_kw", "subp", 0});
        fm.columns.push_back({"subp_q_kvar", "subp", 0});
    }
    if (fs == FeatureSetId::FS3) {
        fm.columns.push_back({"subs_p_kw", "subs", 0});
        fm.columns.push_back({"subs_q_kvar", "subs", 0});
        fm.columns.push_back({"subs_vm_pu", "subs", 0});
    }

    std::vector<std::pair<std::size_t, std::size_t>> rows;  // (t, t - 24 h)
    for (std::size_t t = 0; t < axis.size(); ++t)
        if (auto lag = axis.find(axis.minute(t) - kMinutesPerDay)) rows.emplace_back(t, *lag);

    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(fm.columns.size());
    const auto j = static_cast<Eigen::Index>(monitored.size());
    fm.inputs.resize(n, d);
    fm.targets.resize(n, j);
    fm.activation.resize(n, j);
    fm.minutes.reserve(rows.size());
    const auto& st = truth.states;
    const double kw = truth.base_power_kva;

    for (Eigen::Index r = 0; r < n; ++r) {
        const auto [t, lag] = rows[static_cast<std::size_t>(r)];
        const auto ti = static_cast<Eigen::Index>(t);
        const auto li = static_cast<Eigen::Index>(lag);
        const auto minute = axis.minute(t);
        fm.minutes.push_back(minute);
        Eigen::Index c = 0;
        for (int b : lag_buses) {
            fm.inputs(r, c++) = scenario.p_kw(li, b);
            fm.inputs(r, c++) = scenario.q_kvar(li, b);
        }
        const double angle = 2.0 * std::numbers::pi * hour_of_day(minute) / 24.0;
        fm.inputs(r, c++) = scenario.weather.temperature_c(ti);
        fm.inputs(r, c++) = scenario.weather.solar_w_m2(ti);
        fm.inputs(r, c++) = scenario.price.eur_per_kwh(ti);
        fm.inputs(r, c++) = std::sin(angle);
        fm.inputs(r, c++) = std::cos(angle);
        fm.inputs(r, c++) = is_weekend(minute) ? 1.0 : 0.0;
        if (fs != FeatureSetId::FS1) {
            fm.inputs(r, c++) = st.subp_p(ti) * kw;
            fm.inputs(r, c++) = st.subp_q(ti) * kw;
        }
        if (fs == FeatureSetId::FS3) {
            fm.inputs(r, c++) = st.subs_p(ti) * kw;
            fm.inputs(r, c++) = st.subs_q(ti) * kw;
            fm.inputs(r, c++) = st.subs_vm(ti);
        }
        for (Eigen::Index k = 0; k < j; ++k) {
            fm.targets(r, k) = st.monitored_vm(ti, k);
            fm.activation(r, k) = scenario.flags(ti, monitored[static_cast<std::size_t>(k)]);
        }
    }
    return fm;
}

SplitViews split(const FeatureMatrix& fm, const SplitSpec& spec) {
    const auto n = fm.rows();
    if (n < 10) throw TooFewSamples("split needs at least 10 rows, got " + std::to_string(n));
    if (spec.train <= 0.0 || spec.validation < 0.0 || spec.test < 0.0 ||
        std::abs(spec.train + spec.validation + spec.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    // The epsilon absorbs representation error (0.8 * 10 = 7.999...).
    const auto n_train = static_cast<Eigen::Index>(std::floor(spec.train * static_cast<double>(n) + 1e-9));
    const auto n_val = static_cast<Eigen::Index>(std::floor(spec.validation * static_cast<double>(n) + 1e-9));
    return {{&fm, 0, n_train}, {&fm, n_train, n_train + n_val}, {&fm, n_train + n_val, n}};
}

Normalizer Normalizer::fit(const RealSeries& rows, const std::vector<std::string>& names) {
    if (rows.rows() < 1) throw TooFewSamples("cannot fit a normalizer on zero rows");
    Normalizer out;
    const auto cols = rows.cols();
    out.mean = rows.colwise().mean().transpose();
    out.scale.resize(cols);
    out.degenerate.assign(static_cast<std::size_t>(cols), false);
    for (Eigen::Index c = 0; c < cols; ++c) {
        const double var = (rows.col(c).array() - out.mean(c)).square().mean();
        const double sd = std::sqrt(var);
        if (std::isfinite(sd) && sd <= 1e-12 * std::max(1.0, std::abs(out.mean(c)))) {
            out.scale(c) = 1.0;
            out.degenerate[static_cast<std::size_t>(c)] = true;
            std::cerr << "warning: column "
                      << (static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)]
                                                                     : std::to_string(c))
                      << " has zero variance on the training rows; normalized to 0\n";
        } else {
            out.scale(c) = sd;
        }
    }
    return out;
}

RealSeries Normalizer::apply(const RealSeries& rows) const {
    if (rows.cols() != size())
        throw DimensionMismatch("normalizer columns", static_cast<std::size_t>(size()),
                                static_cast<std::size_t>(rows.cols()));
    RealSeries out(rows.rows(), rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        if (degenerate[static_cast<std::size_t>(c)])
            out.col(c).setZero();
        else
            out.col(c) = (rows.col(c).array() - mean(c)) / scale(c);
    }
    return out;
}

RealSeries Normalizer::invert(const RealSeries& rows) const {
    if (rows.cols() != size())
        throw DimensionMismatch("normalizer columns", static_cast<std::size_t>(size()),
                                static_cast<std::size_t>(rows.cols()));
    RealSeries out(rows.rows(), rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) out.col(c) = rows.col(c).array() * scale(c) + mean(c);
    return out;
}

nlohmann::json to_json(const Normalizer& n) {
    return {{"mean", std::vector<double>(n.mean.data(), n.mean.data() + n.mean.size())},
            {"scale", std::vector<double>(n.scale.data(), n.scale.data() + n.scale.size())},
            {"degenerate", n.degenerate}};
}

Normalizer normalizer_from_json(const nlohmann::json& j) {
    Normalizer n;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    n.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    n.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    n.degenerate = j.at("degenerate").get<std::vector<bool>>();
    return n;
}

void save_feature_matrix(const FeatureMatrix& fm, const SplitViews& split, const Normalizer& inputs,
                         const Normalizer& targets, const std::filesystem::path& csv_path) {
    io::CsvTable table;
    table.key_name = "timestamp";
    for (auto m : fm.minutes) table.keys.push_back(iso8601(m));
    table.columns = fm.column_names();
    for (const auto& t : fm.target_names) table.columns.push_back("target_" + t + "_vm_pu");
    table.values.resize(fm.rows(), fm.inputs.cols() + fm.targets.cols());
    table.values << fm.inputs, fm.targets;
    io::write_csv(csv_path, table);

    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : fm.columns)
        cols.push_back({{"name", c.name}, {"provenance", c.provenance}, {"lag_minutes", c.lag_minutes}});
    auto range = [](const FeatureView& v) { return nlohmann::json{{"begin", v.begin}, {"end", v.end}}; };
    nlohmann::json sidecar = {{"feature_set", to_string(fm.feature_set)},
                              {"scenario", to_string(fm.scenario)},
                              {"columns", cols},
                              {"targets", fm.target_names},
                              {"input_normalizer", to_json(inputs)},
                              {"target_normalizer", to_json(targets)},
                              {"split",
                               {{"mode", "chronological"},
                                {"train", range(split.train)},
                                {"validation", range(split.validation)},
                                {"test", range(split.test)}}}};
    auto sidecar_path = csv_path;
    sidecar_path.replace_extension(".json");
    io::write_json(sidecar_path, sidecar);
}

}  // namespace lvse
