#include "lvse/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "lvse/errors.hpp"
#include "lvse/io.hpp"
#include "lvse/metrics.hpp"
#include "lvse/random.hpp"

namespace lvse::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ModelKind m) { return m == ModelKind::bnn ? "bnn" : "qr"; }

ModelKind model_from_string(const std::string& name) {
    if (name == "bnn") return ModelKind::bnn;
    if (name == "qr") return ModelKind::qr;
    throw ConfigError("unknown model '" + name + "'");
}

ExperimentConfig::ExperimentConfig() {
    bnn.max_epochs = 2000;
    bnn.patience = 30;
    qr.max_epochs = 2000;
    qr.patience = 30;
}

namespace {

constexpr const char* kConfigKeys[] = {"horizon",         "seeds", "scenarios", "feature_sets", "models", "bnn", "qr",
                                       "split",           "scenario_params",    "study",        "output_dir"};

template <class T, class F>
std::vector<std::string> names_of(const std::vector<T>& items, F&& name) {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(name(i));
    return out;
}

template <class T, class F>
std::vector<T> parse_list(const json& j, const char* what, F&& parse) {
    std::vector<T> out;
    for (const auto& item : j) {
        const T v = parse(item.get<std::string>());
        if (std::find(out.begin(), out.end(), v) != out.end())
            throw ConfigError(std::string("duplicate entry in ") + what);
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(std::string(what) + " must not be empty");
    return out;
}

json hyper_json(json j) {
    j.erase("seed");
    return j;
}

json hashed_part(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    return j;
}

std::uint64_t index_of_scenario(ScenarioId s) { return static_cast<std::uint64_t>(s) + 1; }
std::uint64_t index_of_fs(FeatureSetId f) { return static_cast<std::uint64_t>(f) + 1; }
std::uint64_t index_of_model(ModelKind m) { return static_cast<std::uint64_t>(m) + 1; }

std::uint64_t cell_seed(const ExperimentConfig& c, const CellId& id) {
    return derive_seed(c.model_seed, {index_of_scenario(id.scenario), index_of_fs(id.feature_set), index_of_model(id.model)});
}

std::uint64_t study_seed(const ExperimentConfig& c) { return derive_seed(c.model_seed, {0}); }

double pi_z(double alpha) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

}  // namespace

json to_json(const ExperimentConfig& c) {
    json horizon = json::array();
    for (const auto& s : c.horizon) {
        if (s.days % 7 == 0)
            horizon.push_back({{"start_day", s.start_day}, {"weeks", s.days / 7}});
        else
            horizon.push_back({{"start_day", s.start_day}, {"days", s.days}});
    }
    return {{"horizon", horizon},
            {"seeds", {{"data", c.data_seed}, {"model", c.model_seed}}},
            {"scenarios", names_of(c.scenarios, [](ScenarioId s) { return lvse::to_string(s); })},
            {"feature_sets", names_of(c.feature_sets, [](FeatureSetId f) { return lvse::to_string(f); })},
            {"models", names_of(c.models, [](ModelKind m) { return to_string(m); })},
            {"bnn", hyper_json(bnn::to_json(c.bnn))},
            {"qr", hyper_json(qr::to_json(c.qr))},
            {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
            {"scenario_params", lvse::to_json(c.scenario_params)},
            {"study",
             {{"scenario", lvse::to_string(c.study.scenario)},
              {"feature_set", lvse::to_string(c.study.feature_set)},
              {"bus", c.study.bus},
              {"validation_fraction", c.study.validation_fraction}}},
            {"output_dir", c.output_dir.generic_string()}};
}

ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(std::begin(kConfigKeys), std::end(kConfigKeys), key) == std::end(kConfigKeys))
            throw ConfigError("unknown config key '" + key + "'");

    ExperimentConfig c;
    try {
        if (j.contains("horizon")) {
            c.horizon.clear();
            for (const auto& s : j.at("horizon")) {
                Segment seg{s.at("start_day").get<int>(), 0};
                if (s.contains("weeks")) seg.days = 7 * s.at("weeks").get<int>();
                if (s.contains("days")) seg.days = s.at("days").get<int>();
                c.horizon.push_back(seg);
            }
            TimeAxis check(c.horizon);
        }
        if (j.contains("seeds")) {
            c.data_seed = j.at("seeds").value("data", c.data_seed);
            c.model_seed = j.at("seeds").value("model", c.model_seed);
        }
        if (j.contains("scenarios"))
            c.scenarios = parse_list<ScenarioId>(j.at("scenarios"), "scenarios", scenario_from_string);
        if (j.contains("feature_sets"))
            c.feature_sets = parse_list<FeatureSetId>(j.at("feature_sets"), "feature_sets", feature_set_from_string);
        if (j.contains("models")) c.models = parse_list<ModelKind>(j.at("models"), "models", model_from_string);
        for (const char* key : {"bnn", "qr"})
            if (j.contains(key) && j.at(key).contains("seed"))
                throw ConfigError(std::string(key) + ".seed is derived from seeds.model");
        if (j.contains("bnn")) c.bnn = bnn::bnn_hyper_from_json(j.at("bnn"), c.bnn);
        if (j.contains("qr")) c.qr = qr::qr_hyper_from_json(j.at("qr"), c.qr);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            c.split = {s.value("train", c.split.train), s.value("validation", c.split.validation),
                       s.value("test", c.split.test)};
        }
        if (j.contains("scenario_params")) c.scenario_params = scenario_params_from_json(j.at("scenario_params"));
        if (j.contains("study")) {
            const auto& s = j.at("study");
            if (s.contains("scenario")) c.study.scenario = scenario_from_string(s.at("scenario").get<std::string>());
            if (s.contains("feature_set"))
                c.study.feature_set = feature_set_from_string(s.at("feature_set").get<std::string>());
            c.study.bus = s.value("bus", c.study.bus);
            c.study.validation_fraction = s.value("validation_fraction", c.study.validation_fraction);
        }
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(c.study.validation_fraction > 0.0 && c.study.validation_fraction < 1.0))
        throw ConfigError("study.validation_fraction must lie in (0, 1)");
    for (double f : {c.split.train, c.split.validation, c.split.test})
        if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    if (std::abs(c.split.train + c.split.validation + c.split.test - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    json j;
    try {
        j = io::read_json(path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& config) { return io::content_hash(hashed_part(config)); }

std::string data_hash(const ExperimentConfig& config) {
    const json j = hashed_part(config);
    return io::content_hash({{"horizon", j.at("horizon")},
                             {"seed", config.data_seed},
                             {"scenario_params", j.at("scenario_params")}});
}

std::string CellId::name() const {
    return lvse::to_string(scenario) + "_" + lvse::to_string(feature_set) + "_" + to_string(model);
}

std::vector<CellId> select_cells(const ExperimentConfig& config, const std::string& filter) {
    std::vector<CellId> all;
    for (auto s : config.scenarios)
        for (auto f : config.feature_sets)
            for (auto m : config.models) all.push_back({s, f, m});
    if (filter.empty()) return all;

    std::vector<std::vector<std::string>> selectors;
    std::stringstream ss(filter);
    for (std::string sel; std::getline(ss, sel, ',');) {
        std::vector<std::string> tokens;
        std::stringstream ts(sel);
        for (std::string tok; std::getline(ts, tok, ':');) {
            if (tok.empty()) continue;
            const bool known = tok == "bnn" || tok == "qr" || tok == "S1" || tok == "S2" || tok == "S3" ||
                               tok == "FS1" || tok == "FS2" || tok == "FS3";
            if (!known) throw ConfigError("unknown cell selector token '" + tok + "'");
            tokens.push_back(tok);
        }
        if (!tokens.empty()) selectors.push_back(std::move(tokens));
    }
    std::vector<CellId> out;
    for (const auto& c : all) {
        const std::set<std::string> parts{lvse::to_string(c.scenario), lvse::to_string(c.feature_set),
                                          to_string(c.model)};
        const bool hit = std::any_of(selectors.begin(), selectors.end(), [&](const auto& tokens) {
            return std::all_of(tokens.begin(), tokens.end(), [&](const auto& t) { return parts.count(t) > 0; });
        });
        if (hit) out.push_back(c);
    }
    if (out.empty()) throw ConfigError("cell filter '" + filter + "' selects no configured cell");
    return out;
}

int RunLedger::completed() const {
    return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.status == "completed"; }));
}

const CellRecord* RunLedger::find(const CellId& id) const {
    for (const auto& c : cells)
        if (c.id == id) return &c;
    return nullptr;
}

json to_json(const RunLedger& ledger) {
    json cells = json::array();
    for (const auto& c : ledger.cells)
        cells.push_back({{"cell", c.id.name()},
                         {"scenario", lvse::to_string(c.id.scenario)},
                         {"feature_set", lvse::to_string(c.id.feature_set)},
                         {"model", to_string(c.id.model)},
                         {"status", c.status},
                         {"error", c.error},
                         {"wall_seconds", c.wall_seconds},
                         {"metrics_csv", c.metrics_csv},
                         {"metrics_json", c.metrics_json},
                         {"checkpoint", c.checkpoint},
                         {"predictions", c.predictions},
                         {"test_rows", {c.test_begin, c.test_end}},
                         {"test_period", {c.test_first, c.test_last}}});
    return {{"config_hash", ledger.config_hash}, {"cells", cells}};
}

RunLedger ledger_from_json(const json& j) {
    RunLedger l;
    l.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& c : j.at("cells")) {
        CellRecord r;
        r.id = {scenario_from_string(c.at("scenario")), feature_set_from_string(c.at("feature_set")),
                model_from_string(c.at("model"))};
        r.status = c.at("status");
        r.error = c.value("error", "");
        r.wall_seconds = c.value("wall_seconds", 0.0);
        r.metrics_csv = c.value("metrics_csv", "");
        r.metrics_json = c.value("metrics_json", "");
        r.checkpoint = c.value("checkpoint", "");
        r.predictions = c.value("predictions", "");
        r.test_begin = c.at("test_rows").at(0);
        r.test_end = c.at("test_rows").at(1);
        r.test_first = c.at("test_period").at(0);
        r.test_last = c.at("test_period").at(1);
        l.cells.push_back(std::move(r));
    }
    return l;
}

fs::path data_dir(const ExperimentConfig& config) { return config.output_dir / "data"; }
fs::path cell_dir(const ExperimentConfig& config, const CellId& id) { return config.output_dir / "cells" / id.name(); }

void cmd_generate(const ExperimentConfig& config) {
    const auto dir = data_dir(config);
    fs::create_directories(dir);
    const auto net = build_reference_network();
    const TimeAxis axis(config.horizon);
    json net_json = net;
    io::write_json(dir / "network.json", net_json);

    double vmin = 1e9, vmax = -1e9;
    for (auto s : config.scenarios) {
        const auto name = lvse::to_string(s);
        std::cout << "generate " << name << ": " << axis.size() << " steps" << std::endl;
        const auto sc = assemble_scenario(s, net, axis, config.data_seed, config.scenario_params);
        save_scenario(sc, dir / name);
        const auto truth = compute_ground_truth(net, sc);
        save_ground_truth(truth, dir / name);
        vmin = std::min(vmin, truth.states.monitored_vm.minCoeff());
        vmax = std::max(vmax, truth.states.monitored_vm.maxCoeff());
    }
    io::write_json(dir / "generation.json",
                   {{"config_hash", config_hash(config)},
                    {"data_hash", data_hash(config)},
                    {"scenarios", names_of(config.scenarios, [](ScenarioId s) { return lvse::to_string(s); })},
                    {"monitored_vm_min", vmin},
                    {"monitored_vm_max", vmax}});
}

namespace {

struct LoadedScenario {
    ScenarioDataset scenario;
    GroundTruth truth;
};

class DataCache {
public:
    explicit DataCache(const ExperimentConfig& config) : config_(config) {
        const auto gen = data_dir(config) / "generation.json";
        if (!fs::exists(gen)) throw ConfigError("no generated data under " + data_dir(config).string() + "; run generate first");
        if (io::read_json(gen).at("data_hash").get<std::string>() != data_hash(config))
            throw ConfigError("generated data was produced with a different horizon, seed or scenario setup; rerun generate");
    }

    const LoadedScenario& get(ScenarioId s) {
        auto it = cache_.find(s);
        if (it != cache_.end()) return it->second;
        const auto dir = data_dir(config_) / lvse::to_string(s);
        if (!fs::exists(dir / "manifest.json")) throw ConfigError("scenario " + lvse::to_string(s) + " was not generated");
        return cache_.emplace(s, LoadedScenario{load_scenario(dir), load_ground_truth(dir)}).first->second;
    }

private:
    const ExperimentConfig& config_;
    std::map<ScenarioId, LoadedScenario> cache_;
};

void write_predictions(const fs::path& path, const FeatureView& test, const std::vector<std::string>& buses,
                       const RealSeries& mean, const RealSeries& lower, const RealSeries& upper) {
    io::CsvWriter w(path);
    std::vector<std::string> header{"timestamp"};
    for (const auto& b : buses)
        for (const char* suffix : {"_truth", "_mean", "_lower", "_upper", "_active"}) header.push_back(b + suffix);
    w.header(header);
    const RealSeries y = test.targets();
    const FlagSeries f = test.activation();
    for (Eigen::Index t = 0; t < test.rows(); ++t) {
        w.cell(iso8601(test.minute(t)));
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            w.cell(y(t, j)).cell(mean(t, j)).cell(lower(t, j)).cell(upper(t, j)).cell(f(t, j) ? 1 : 0);
        w.end_row();
    }
}

CellRecord run_cell(const ExperimentConfig& config, DataCache& cache, const CellId& id, const std::string& hash) {
    CellRecord rec;
    rec.id = id;
    const auto dir = cell_dir(config, id);
    fs::create_directories(dir);

    const auto& data = cache.get(id.scenario);
    const auto fm = build_features(data.scenario, data.truth, id.feature_set);
    const auto views = split(fm, config.split);
    const auto train = bnn::training_data(views.train, views.validation);
    const RealSeries x_test = views.test.inputs();
    const RealSeries y_test = views.test.targets();
    const FlagSeries f_test = views.test.activation();
    rec.test_begin = views.test.begin;
    rec.test_end = views.test.end;
    rec.test_first = iso8601(views.test.minute(0));
    rec.test_last = iso8601(views.test.minute(views.test.rows() - 1));

    const auto seed = cell_seed(config, id);
    json checkpoint;
    json training;
    metrics::MetricsReport report;
    RealSeries mean, lower, upper;
    if (id.model == ModelKind::bnn) {
        auto h = config.bnn;
        h.seed = seed;
        const auto model = bnn::train_bnn(train, h);
        const auto s = bnn::predict(model, x_test, h.n_samples, h.alpha, derive_seed(seed, {static_cast<std::uint64_t>(Stream::predict)}));
        report = metrics::evaluate(train.targets, y_test, s.mean, s.lower, s.upper,
                                   bnn::quantile_forecast(s, metrics::quantile_grid()), f_test, h.alpha);
        mean = s.mean;
        lower = s.lower;
        upper = s.upper;
        checkpoint = bnn::to_json(model);
        training = {{"best_epoch", model.log.best_epoch}, {"epochs_run", model.log.train_loss.size()},
                    {"hyper", bnn::to_json(h)}};
    } else {
        auto h = config.qr;
        h.seed = seed;
        const auto model = qr::train_qr(train, h);
        const auto p = qr::predict_quantiles(model, x_test, h.lower_level, h.upper_level);
        const double alpha = 1.0 - (h.upper_level - h.lower_level);
        report = metrics::evaluate(train.targets, y_test, p.point, p.lower, p.upper, p.quantiles, f_test, alpha);
        mean = p.point;
        lower = p.lower;
        upper = p.upper;
        checkpoint = qr::to_json(model);
        training = {{"best_epoch", model.log.best_epoch}, {"epochs_run", model.log.train_loss.size()},
                    {"hyper", qr::to_json(h)}};
    }
    checkpoint["config_hash"] = hash;
    checkpoint["cell"] = id.name();
    io::write_json(dir / "checkpoint.json", checkpoint);
    metrics::write_csv(report, dir / "metrics.csv");
    io::write_json(dir / "metrics.json", {{"config_hash", hash},
                                          {"cell", id.name()},
                                          {"test_rows", {rec.test_begin, rec.test_end}},
                                          {"test_period", {rec.test_first, rec.test_last}},
                                          {"features", fm.column_names()},
                                          {"training", training},
                                          {"report", metrics::to_json(report)}});
    write_predictions(dir / "predictions.csv", views.test, train.targets, mean, lower, upper);

    const auto rel = fs::path("cells") / id.name();
    rec.metrics_csv = (rel / "metrics.csv").generic_string();
    rec.metrics_json = (rel / "metrics.json").generic_string();
    rec.checkpoint = (rel / "checkpoint.json").generic_string();
    rec.predictions = (rel / "predictions.csv").generic_string();
    rec.status = "completed";
    return rec;
}

metrics::MetricsReport read_cell_report(const ExperimentConfig& config, const CellRecord& rec, const std::string& hash) {
    const auto j = io::read_json(config.output_dir / rec.metrics_json);
    if (j.at("config_hash").get<std::string>() != hash)
        throw ConfigError("cell " + rec.id.name() + " was produced with config " + j.at("config_hash").get<std::string>() +
                          ", expected " + hash);
    return metrics::report_from_json(j.at("report"));
}

void write_summary(const ExperimentConfig& config, const RunLedger& ledger) {
    io::CsvWriter w(config.output_dir / "summary.csv");
    w.header({"scenario", "feature_set", "model", "metric", "avg", "min", "max", "config_hash"});
    for (const auto& id : select_cells(config)) {
        const auto* rec = ledger.find(id);
        if (!rec || rec->status != "completed") continue;
        const auto report = read_cell_report(config, *rec, ledger.config_hash);
        for (const auto& m : metrics::MetricsReport::metric_names()) {
            const auto a = metrics::aggregate(report.metric(m));
            w.cell(lvse::to_string(id.scenario)).cell(lvse::to_string(id.feature_set)).cell(to_string(id.model));
            w.cell(m).cell(a.avg).cell(a.min).cell(a.max).cell(ledger.config_hash);
            w.end_row();
        }
    }
}

}  // namespace

RunLedger cmd_run_matrix(const ExperimentConfig& config, const std::string& cells) {
    const auto selected = select_cells(config, cells);
    const auto hash = config_hash(config);
    DataCache cache(config);
    fs::create_directories(config.output_dir);
    io::write_json(config.output_dir / "config.json", {{"config_hash", hash}, {"config", to_json(config)}});

    RunLedger previous;
    const auto ledger_path = config.output_dir / "ledger.json";
    if (fs::exists(ledger_path)) {
        previous = ledger_from_json(io::read_json(ledger_path));
        if (previous.config_hash != hash) previous = {};
    }

    std::map<std::string, CellRecord> fresh;
    for (const auto& id : selected) {
        const auto t0 = std::chrono::steady_clock::now();
        CellRecord rec;
        try {
            rec = run_cell(config, cache, id, hash);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            rec.id = id;
            rec.status = "failed";
            rec.error = e.what();
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << id.name() << ": " << rec.status;
        if (!rec.error.empty()) std::cout << " (" << rec.error << ")";
        std::cout << " in " << std::lround(rec.wall_seconds) << " s" << std::endl;
        fresh[id.name()] = rec;
    }

    RunLedger ledger;
    ledger.config_hash = hash;
    for (const auto& id : select_cells(config)) {
        if (auto it = fresh.find(id.name()); it != fresh.end())
            ledger.cells.push_back(it->second);
        else if (const auto* old = previous.find(id))
            ledger.cells.push_back(*old);
    }
    io::write_json(ledger_path, to_json(ledger));
    write_summary(config, ledger);
    return ledger;
}

json to_json(const StudyResult& r) {
    auto means = [](const ComponentMeans& m) {
        return json{{"epistemic_variance", m.epistemic_var},
                    {"aleatoric_variance", m.aleatoric_var},
                    {"epistemic_pi_halfwidth", m.epistemic_half},
                    {"aleatoric_pi_halfwidth", m.aleatoric_half},
                    {"steps", m.steps}};
    };
    return {{"last_training_week", means(r.last_training_week)},
            {"validation", means(r.validation)},
            {"forecast", means(r.forecast)},
            {"series_length", r.series_length},
            {"horizon_rows", r.horizon_rows},
            {"training_segment_rows", r.training_segment_rows}};
}

StudyResult cmd_uncertainty_study(const ExperimentConfig& config) {
    DataCache cache(config);
    const auto& data = cache.get(config.study.scenario);
    const auto fm = build_features(data.scenario, data.truth, config.study.feature_set);
    const auto bus_it = std::find(fm.target_names.begin(), fm.target_names.end(), config.study.bus);
    if (bus_it == fm.target_names.end()) throw ConfigError("study bus '" + config.study.bus + "' is not monitored");
    const auto bus = static_cast<Eigen::Index>(bus_it - fm.target_names.begin());

    const auto& seg = data.scenario.axis.segments().front();
    const std::int64_t seg_end = static_cast<std::int64_t>(seg.start_day + seg.days) * kMinutesPerDay;
    const auto n0 = static_cast<Eigen::Index>(
        std::lower_bound(fm.minutes.begin(), fm.minutes.end(), seg_end) - fm.minutes.begin());
    const auto n_train = static_cast<Eigen::Index>(std::floor((1.0 - config.study.validation_fraction) * static_cast<double>(n0) + 1e-9));
    if (n_train < 1 || n0 - n_train < 1) throw TooFewSamples("training segment too short for the study split");
    if (fm.rows() - n0 < 1) throw ConfigError("the study needs at least one horizon segment after the training segment");

    auto h = config.bnn;
    h.seed = study_seed(config);
    const FeatureView train{&fm, 0, n_train}, val{&fm, n_train, n0};
    const auto model = bnn::train_bnn(bnn::training_data(train, val), h);
    const RealSeries x = fm.inputs;
    const auto s = bnn::predict(model, x, h.n_samples, h.alpha, derive_seed(h.seed, {static_cast<std::uint64_t>(Stream::predict)}));

    const double z = pi_z(h.alpha);
    auto component_means = [&](Eigen::Index a, Eigen::Index b) {
        ComponentMeans m;
        m.steps = b - a;
        for (Eigen::Index t = a; t < b; ++t) {
            m.epistemic_var += s.epistemic(t, bus);
            m.aleatoric_var += s.aleatoric(t, bus);
            m.epistemic_half += z * std::sqrt(s.epistemic(t, bus));
            m.aleatoric_half += z * std::sqrt(s.aleatoric(t, bus));
        }
        const double n = static_cast<double>(m.steps);
        m.epistemic_var /= n;
        m.aleatoric_var /= n;
        m.epistemic_half /= n;
        m.aleatoric_half /= n;
        return m;
    };

    StudyResult r;
    constexpr Eigen::Index kWeek = 7 * kStepsPerDay;
    r.last_training_week = component_means(std::max<Eigen::Index>(0, n_train - kWeek), n_train);
    r.validation = component_means(n_train, n0);
    r.forecast = component_means(n0, fm.rows());
    r.series_length = fm.rows() - n0;
    r.horizon_rows = fm.rows();
    r.training_segment_rows = n0;

    const auto dir = config.output_dir / "study";
    fs::create_directories(dir);
    const auto hash = config_hash(config);
    const std::string pct = std::to_string(static_cast<int>(std::lround(100.0 * (1.0 - h.alpha))));
    {
        io::CsvWriter w(dir / "uncertainty_series.csv");
        w.header({"timestamp", "truth", "mean", "epistemic_pi" + pct + "_halfwidth", "aleatoric_pi" + pct + "_halfwidth",
                  "total_pi" + pct + "_halfwidth"});
        for (Eigen::Index t = n0; t < fm.rows(); ++t) {
            w.cell(iso8601(fm.minutes[static_cast<std::size_t>(t)])).cell(fm.targets(t, bus)).cell(s.mean(t, bus));
            w.cell(z * std::sqrt(s.epistemic(t, bus))).cell(z * std::sqrt(s.aleatoric(t, bus)));
            w.cell(z * std::sqrt(s.total(t, bus)));
            w.end_row();
        }
    }
    {
        io::CsvWriter w(dir / "uncertainty_weekly.csv");
        w.header({"week_start", "phase", "steps", "epistemic_pi" + pct + "_halfwidth", "aleatoric_pi" + pct + "_halfwidth",
                  "epistemic_variance", "aleatoric_variance"});
        constexpr std::int64_t kWeekMinutes = 7LL * kMinutesPerDay;
        Eigen::Index a = 0;
        while (a < fm.rows()) {
            const auto phase_of = [&](Eigen::Index t) { return t < n_train ? 0 : (t < n0 ? 1 : 2); };
            const auto week = fm.minutes[static_cast<std::size_t>(a)] / kWeekMinutes;
            Eigen::Index b = a;
            while (b < fm.rows() && phase_of(b) == phase_of(a) && fm.minutes[static_cast<std::size_t>(b)] / kWeekMinutes == week) ++b;
            const auto m = component_means(a, b);
            static const char* kPhase[] = {"train", "validation", "forecast"};
            w.cell(iso8601(week * kWeekMinutes)).cell(kPhase[phase_of(a)]).cell(static_cast<long long>(m.steps));
            w.cell(m.epistemic_half).cell(m.aleatoric_half).cell(m.epistemic_var).cell(m.aleatoric_var);
            w.end_row();
            a = b;
        }
    }
    auto checkpoint = bnn::to_json(model);
    checkpoint["config_hash"] = hash;
    io::write_json(dir / "checkpoint.json", checkpoint);
    io::write_json(dir / "study.json", {{"config_hash", hash},
                                        {"scenario", lvse::to_string(config.study.scenario)},
                                        {"feature_set", lvse::to_string(config.study.feature_set)},
                                        {"bus", config.study.bus},
                                        {"pi_level", 1.0 - h.alpha},
                                        {"halfwidth_factor", z},
                                        {"training_rows", {0, n_train}},
                                        {"validation_rows", {n_train, n0}},
                                        {"best_epoch", model.log.best_epoch},
                                        {"result", to_json(r)}});
    return r;
}

namespace {

constexpr Eigen::Index kExcerptSteps = 14 * kStepsPerHour;

// Window of kExcerptSteps consecutive rows with the most activation at `flag_col`; earliest on ties.
Eigen::Index pick_window(const io::CsvTable& t, Eigen::Index flag_col) {
    const auto n = static_cast<Eigen::Index>(t.keys.size());
    if (n < kExcerptSteps) return 0;
    std::vector<std::int64_t> minutes;
    for (const auto& k : t.keys) minutes.push_back(parse_iso8601(k));
    Eigen::Index best = 0;
    double best_score = -1.0;
    for (Eigen::Index a = 0; a + kExcerptSteps <= n; ++a) {
        if (minutes[static_cast<std::size_t>(a + kExcerptSteps - 1)] - minutes[static_cast<std::size_t>(a)] !=
            (kExcerptSteps - 1) * kStepMinutes)
            continue;
        const double score = t.values.col(flag_col).segment(a, kExcerptSteps).sum();
        if (score > best_score) {
            best_score = score;
            best = a;
        }
    }
    return best;
}

void write_excerpt(const fs::path& path, const io::CsvTable& t, const std::string& bus, Eigen::Index begin) {
    const auto truth = t.column(bus + "_truth"), mean = t.column(bus + "_mean"), lo = t.column(bus + "_lower"),
               hi = t.column(bus + "_upper"), flag = t.column(bus + "_active");
    io::CsvWriter w(path);
    w.header({"timestamp", "truth", "mean", "lower", "upper", "width", "activation_flag"});
    const auto end = std::min<Eigen::Index>(begin + kExcerptSteps, static_cast<Eigen::Index>(t.keys.size()));
    for (Eigen::Index r = begin; r < end; ++r) {
        w.cell(t.keys[static_cast<std::size_t>(r)]).cell(t.values(r, truth)).cell(t.values(r, mean));
        w.cell(t.values(r, lo)).cell(t.values(r, hi)).cell(t.values(r, hi) - t.values(r, lo));
        w.cell(static_cast<int>(t.values(r, flag)));
        w.end_row();
    }
}

}  // namespace

void cmd_report(const ExperimentConfig& config) {
    const auto hash = config_hash(config);
    const auto ledger_path = config.output_dir / "ledger.json";
    if (!fs::exists(ledger_path)) throw MissingCell("no ledger at " + ledger_path.string() + "; run run-matrix first");
    const auto ledger = ledger_from_json(io::read_json(ledger_path));
    if (ledger.config_hash != hash)
        throw ConfigError("ledger config hash " + ledger.config_hash + " does not match config hash " + hash);

    std::vector<std::string> missing;
    for (const auto& id : select_cells(config)) {
        const auto* rec = ledger.find(id);
        if (!rec || rec->status != "completed" || !fs::exists(config.output_dir / rec->metrics_json) ||
            !fs::exists(config.output_dir / rec->predictions))
            missing.push_back(id.name());
    }
    if (!missing.empty()) {
        std::string msg = "missing cells:";
        for (const auto& m : missing) msg += " " + m;
        throw MissingCell(msg);
    }

    const auto dir = config.output_dir / "report";
    fs::create_directories(dir);
    std::vector<std::string> files;

    {
        // Scaled columns divide by the best cell average of the metric.
        const std::vector<std::string> bar_metrics{"rmse", "pinball", "winkler"};
        std::vector<std::pair<CellId, std::vector<metrics::Aggregate>>> rows;
        std::vector<double> best(bar_metrics.size(), std::numeric_limits<double>::infinity());
        for (const auto& id : select_cells(config)) {
            const auto report = read_cell_report(config, *ledger.find(id), hash);
            std::vector<metrics::Aggregate> aggs;
            for (std::size_t k = 0; k < bar_metrics.size(); ++k) {
                aggs.push_back(metrics::aggregate(report.metric(bar_metrics[k])));
                best[k] = std::min(best[k], aggs.back().avg);
            }
            rows.emplace_back(id, std::move(aggs));
        }
        io::CsvWriter w(dir / "bars.csv");
        w.header({"scenario", "feature_set", "model", "metric", "avg", "min", "max", "avg_scaled", "min_scaled",
                  "max_scaled"});
        for (const auto& [id, aggs] : rows)
            for (std::size_t k = 0; k < bar_metrics.size(); ++k) {
                const auto& a = aggs[k];
                w.cell(lvse::to_string(id.scenario)).cell(lvse::to_string(id.feature_set)).cell(to_string(id.model));
                w.cell(bar_metrics[k]).cell(a.avg).cell(a.min).cell(a.max);
                w.cell(a.avg / best[k]).cell(a.min / best[k]).cell(a.max / best[k]);
                w.end_row();
            }
        files.push_back("bars.csv");
    }

    const auto has = [](const auto& list, auto v) { return std::find(list.begin(), list.end(), v) != list.end(); };
    std::vector<CellId> fig2, fig3;
    if (has(config.models, ModelKind::bnn)) {
        if (has(config.scenarios, ScenarioId::S3))
            for (auto f : config.feature_sets) fig2.push_back({ScenarioId::S3, f, ModelKind::bnn});
        if (has(config.feature_sets, FeatureSetId::FS2))
            for (auto s : config.scenarios) fig3.push_back({s, FeatureSetId::FS2, ModelKind::bnn});
    }
    json window = nullptr;
    if (!fig2.empty() || !fig3.empty()) {
        const CellId anchor = has(fig2, CellId{ScenarioId::S3, FeatureSetId::FS2, ModelKind::bnn})
                                  ? CellId{ScenarioId::S3, FeatureSetId::FS2, ModelKind::bnn}
                                  : (fig2.empty() ? fig3.front() : fig2.front());
        const auto anchor_table = io::read_csv(config.output_dir / ledger.find(anchor)->predictions);
        const auto begin = pick_window(anchor_table, anchor_table.column(config.study.bus + "_active"));
        const auto last = std::min<Eigen::Index>(begin + kExcerptSteps, static_cast<Eigen::Index>(anchor_table.keys.size())) - 1;
        window = {anchor_table.keys[static_cast<std::size_t>(begin)], anchor_table.keys[static_cast<std::size_t>(last)]};
        for (const auto& [prefix, cells] : {std::pair{"fig2_", &fig2}, std::pair{"fig3_", &fig3}})
            for (const auto& id : *cells) {
                const auto table = io::read_csv(config.output_dir / ledger.find(id)->predictions);
                if (table.keys != anchor_table.keys) throw AlignmentError("cell " + id.name() + " has a different test period");
                const auto name = prefix + id.name() + ".csv";
                write_excerpt(dir / name, table, config.study.bus, begin);
                files.push_back(name);
            }
    }

    const auto study_dir = config.output_dir / "study";
    if (fs::exists(study_dir / "study.json")) {
        if (io::read_json(study_dir / "study.json").at("config_hash").get<std::string>() != hash)
            throw ConfigError("uncertainty study was produced with a different config; rerun uncertainty-study");
        fs::copy_file(study_dir / "uncertainty_series.csv", dir / "fig6.csv", fs::copy_options::overwrite_existing);
        fs::copy_file(study_dir / "uncertainty_weekly.csv", dir / "fig6_weekly.csv", fs::copy_options::overwrite_existing);
        files.push_back("fig6.csv");
        files.push_back("fig6_weekly.csv");
    } else {
        std::cerr << "warning: no uncertainty study under " << study_dir.string() << "; fig6 skipped\n";
    }

    io::write_json(dir / "report.json",
                   {{"config_hash", hash}, {"bus", config.study.bus}, {"excerpt", window}, {"files", files}});
    for (const auto& f : files) std::cout << (dir / f).string() << "\n";
}

}  // namespace lvse::experiment
