#include "lvse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lvse/errors.hpp"
#include "lvse/io.hpp"

namespace lvse::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(Eigen::Index a, Eigen::Index b) {
    if (a != b) throw DimensionMismatch("series length", static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    if (a == 0) throw EmptySeries();
}

void check_shape(const RealSeries& a, const RealSeries& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionMismatch("series shape", static_cast<std::size_t>(a.size()), static_cast<std::size_t>(b.size()));
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<double> quantile_grid() {
    std::vector<double> q(99);
    for (int i = 0; i < 99; ++i) q[static_cast<std::size_t>(i)] = (i + 1) / 100.0;
    return q;
}

bool is_standard_grid(const std::vector<double>& levels) {
    if (levels.size() != 99) return false;
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - static_cast<double>(i + 1) / 100.0) > 1e-12) return false;
    return true;
}

double rmse(Series y, Series yhat) {
    check_lengths(y.size(), yhat.size());
    return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

Eigen::VectorXd rmse_per_bus(const RealSeries& y, const RealSeries& yhat) {
    check_shape(y, yhat);
    Eigen::VectorXd out(y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) out(j) = rmse(y.col(j), yhat.col(j));
    return out;
}

double pinball_loss(double y, double yhat, double q) {
    return y >= yhat ? (y - yhat) * q : (yhat - y) * (1.0 - q);
}

double pinball(Series y, const RealSeries& quantiles, const std::vector<double>& levels) {
    if (!is_standard_grid(levels)) throw GridMismatch("pinball requires the quantile grid 0.01..0.99");
    if (quantiles.cols() != static_cast<Eigen::Index>(levels.size()))
        throw GridMismatch("quantile columns do not match the grid");
    check_lengths(y.size(), quantiles.rows());
    double total = 0.0;
    for (Eigen::Index t = 0; t < y.size(); ++t)
        for (Eigen::Index k = 0; k < quantiles.cols(); ++k)
            total += pinball_loss(y(t), quantiles(t, k), levels[static_cast<std::size_t>(k)]);
    return total / static_cast<double>(y.size() * quantiles.cols());
}

Eigen::VectorXd pinball_per_bus(const RealSeries& y, const QuantileForecast& forecast) {
    if (static_cast<Eigen::Index>(forecast.values.size()) != y.cols())
        throw DimensionMismatch("quantile forecast buses", static_cast<std::size_t>(y.cols()),
                                forecast.values.size());
    Eigen::VectorXd out(y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j)
        out(j) = pinball(y.col(j), forecast.values[static_cast<std::size_t>(j)], forecast.levels);
    return out;
}

double winkler(Series y, Series lower, Series upper, double alpha) {
    check_lengths(y.size(), lower.size());
    check_lengths(y.size(), upper.size());
    double total = 0.0;
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        const double lo = lower(t), hi = upper(t);
        if (lo > hi) throw InvalidInterval("lower bound above upper bound at step " + std::to_string(t));
        double score = hi - lo;
        if (y(t) < lo) score += 2.0 * (lo - y(t)) / alpha;
        else if (y(t) > hi) score += 2.0 * (y(t) - hi) / alpha;
        total += score;
    }
    return total / static_cast<double>(y.size());
}

Eigen::VectorXd winkler_per_bus(const RealSeries& y, const RealSeries& lower, const RealSeries& upper, double alpha) {
    check_shape(y, lower);
    check_shape(y, upper);
    Eigen::VectorXd out(y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j) out(j) = winkler(y.col(j), lower.col(j), upper.col(j), alpha);
    return out;
}

CoverageWidth coverage_and_width(Series y, Series lower, Series upper, const std::vector<bool>* flags) {
    check_lengths(y.size(), lower.size());
    check_lengths(y.size(), upper.size());
    if (flags && static_cast<Eigen::Index>(flags->size()) != y.size())
        throw DimensionMismatch("activation flags", static_cast<std::size_t>(y.size()), flags->size());
    CoverageWidth out;
    long inside = 0;
    double w_all = 0.0, w_on = 0.0, w_off = 0.0;
    for (Eigen::Index t = 0; t < y.size(); ++t) {
        const double w = upper(t) - lower(t);
        if (lower(t) <= y(t) && y(t) <= upper(t)) ++inside;
        w_all += w;
        if (flags && (*flags)[static_cast<std::size_t>(t)]) {
            w_on += w;
            ++out.active_steps;
        } else {
            w_off += w;
        }
    }
    const auto n = static_cast<double>(y.size());
    out.coverage = static_cast<double>(inside) / n;
    out.width = w_all / n;
    const auto off = y.size() - out.active_steps;
    out.width_active = out.active_steps > 0 ? w_on / static_cast<double>(out.active_steps) : kNaN;
    out.width_inactive = off > 0 ? w_off / static_cast<double>(off) : kNaN;
    return out;
}

Aggregate aggregate(const Eigen::VectorXd& per_bus) {
    if (per_bus.size() == 0) throw EmptySeries();
    Aggregate a{kNaN, kNaN, kNaN};
    double sum = 0.0;
    long n = 0;
    for (double v : per_bus) {
        if (std::isnan(v)) continue;
        sum += v;
        a.min = n == 0 ? v : std::min(a.min, v);
        a.max = n == 0 ? v : std::max(a.max, v);
        ++n;
    }
    if (n > 0) a.avg = sum / static_cast<double>(n);
    return a;
}

const std::vector<std::string>& MetricsReport::metric_names() {
    static const std::vector<std::string> names = {"rmse",  "pinball",      "winkler",       "coverage",
                                                   "width", "width_active", "width_inactive"};
    return names;
}

const Eigen::VectorXd& MetricsReport::metric(const std::string& name) const {
    if (name == "rmse") return rmse;
    if (name == "pinball") return pinball;
    if (name == "winkler") return winkler;
    if (name == "coverage") return coverage;
    if (name == "width") return width;
    if (name == "width_active") return width_active;
    if (name == "width_inactive") return width_inactive;
    throw Error("unknown metric '" + name + "'");
}

MetricsReport evaluate(const std::vector<std::string>& buses, const RealSeries& y, const RealSeries& point,
                       const RealSeries& lower, const RealSeries& upper, const QuantileForecast& quantiles,
                       const FlagSeries& flags, double alpha) {
    if (static_cast<Eigen::Index>(buses.size()) != y.cols())
        throw DimensionMismatch("bus names", static_cast<std::size_t>(y.cols()), buses.size());
    if (flags.rows() != y.rows() || flags.cols() != y.cols())
        throw DimensionMismatch("activation flags", static_cast<std::size_t>(y.size()),
                                static_cast<std::size_t>(flags.size()));
    MetricsReport r;
    r.buses = buses;
    r.alpha = alpha;
    r.rmse = rmse_per_bus(y, point);
    r.pinball = pinball_per_bus(y, quantiles);
    r.winkler = winkler_per_bus(y, lower, upper, alpha);
    const auto j = y.cols();
    r.coverage.resize(j);
    r.width.resize(j);
    r.width_active.resize(j);
    r.width_inactive.resize(j);
    for (Eigen::Index b = 0; b < j; ++b) {
        std::vector<bool> f(static_cast<std::size_t>(y.rows()));
        for (Eigen::Index t = 0; t < y.rows(); ++t) f[static_cast<std::size_t>(t)] = flags(t, b) != 0;
        const auto cw = coverage_and_width(y.col(b), lower.col(b), upper.col(b), &f);
        r.coverage(b) = cw.coverage;
        r.width(b) = cw.width;
        r.width_active(b) = cw.width_active;
        r.width_inactive(b) = cw.width_inactive;
    }
    return r;
}

void write_csv(const MetricsReport& report, const std::filesystem::path& path) {
    io::CsvWriter w(path);
    std::vector<std::string> header = {"bus"};
    const auto& names = MetricsReport::metric_names();
    header.insert(header.end(), names.begin(), names.end());
    w.header(header);
    for (std::size_t b = 0; b < report.buses.size(); ++b) {
        w.cell(report.buses[b]);
        for (const auto& m : names) w.cell(report.metric(m)(static_cast<Eigen::Index>(b)));
        w.end_row();
    }
    for (const char* row : {"avg", "min", "max"}) {
        w.cell(row);
        for (const auto& m : names) {
            const auto& v = report.metric(m);
            const auto a = aggregate(v);
            const std::string r = row;
            w.cell(r == "avg" ? a.avg : r == "min" ? a.min : a.max);
        }
        w.end_row();
    }
}

nlohmann::json to_json(const MetricsReport& report) {
    nlohmann::json per_bus, agg;
    for (const auto& m : MetricsReport::metric_names()) {
        const auto& v = report.metric(m);
        per_bus[m] = to_vector(v);
        const auto a = aggregate(v);
        agg[m] = {{"avg", a.avg}, {"min", a.min}, {"max", a.max}};
    }
    return {{"buses", report.buses}, {"alpha", report.alpha}, {"per_bus", per_bus}, {"aggregate", agg}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.buses = j.at("buses").get<std::vector<std::string>>();
    r.alpha = j.at("alpha").get<double>();
    const auto& pb = j.at("per_bus");
    auto read = [&](const char* name) {
        std::vector<double> v;
        for (const auto& x : pb.at(name)) v.push_back(x.is_null() ? kNaN : x.get<double>());
        return from_vector(v);
    };
    r.rmse = read("rmse");
    r.pinball = read("pinball");
    r.winkler = read("winkler");
    r.coverage = read("coverage");
    r.width = read("width");
    r.width_active = read("width_active");
    r.width_inactive = read("width_inactive");
    return r;
}

}  // namespace lvse::metrics
