#include "costaware/market_data.hpp"

#include "costaware/errors.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

namespace costaware {

void TickSeries::validate() const {
    if (timestamps_ns.size() != midquotes.size())
        throw ValidationError("ticks for " + asset + ": timestamp and midquote counts differ");
    for (std::size_t k = 0; k < size(); ++k) {
        if (!(midquotes[k] > 0.0) || !std::isfinite(midquotes[k]))
            throw ValidationError("ticks for " + asset + ": non-positive midquote at index " + std::to_string(k));
        if (k > 0 && timestamps_ns[k] <= timestamps_ns[k - 1])
            throw ValidationError("ticks for " + asset + ": timestamps not strictly increasing at index " +
                                  std::to_string(k));
    }
}

void ReturnPanel::validate() const {
    if (returns.cols() < 1) throw ValidationError("return panel needs at least one asset");
    if (returns.rows() < 2) throw ValidationError("return panel needs at least two dates");
    if (static_cast<Eigen::Index>(dates.size()) != returns.rows() ||
        static_cast<Eigen::Index>(assets.size()) != returns.cols())
        throw ShapeError("return panel labels do not match matrix shape");
    if (!std::is_sorted(assets.begin(), assets.end()))
        throw ValidationError("return panel assets must be sorted");
    for (Eigen::Index t = 0; t < returns.rows(); ++t)
        for (Eigen::Index i = 0; i < returns.cols(); ++i)
            if (!(returns(t, i) > -1.0) || !std::isfinite(returns(t, i)))
                throw ValidationError("return panel: invalid return for " + assets[i] + " on " + dates[t]);
}

ReturnPanel ReturnPanel::select_assets(std::span<const Eigen::Index> columns) const {
    ReturnPanel out;
    out.dates = dates;
    out.returns.resize(returns.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const Eigen::Index c = columns[k];
        if (c < 0 || c >= returns.cols()) throw RangeError("select_assets: column out of range");
        out.assets.push_back(assets[c]);
        out.returns.col(static_cast<Eigen::Index>(k)) = returns.col(c);
    }
    return out;
}

ReturnPanel ReturnPanel::head(Eigen::Index n_rows) const {
    if (n_rows < 0 || n_rows > returns.rows()) throw RangeError("head: row count out of range");
    ReturnPanel out;
    out.dates.assign(dates.begin(), dates.begin() + n_rows);
    out.assets = assets;
    out.returns = returns.topRows(n_rows);
    return out;
}

Weights::Weights(Eigen::VectorXd values) : values_(std::move(values)) {
    if (values_.size() == 0) throw ValidationError("weights: empty vector");
    if (!values_.allFinite()) throw ValidationError("weights: non-finite entry");
    const double s = values_.sum();
    if (std::abs(s - 1.0) > kSumTolerance)
        throw ValidationError("weights must sum to 1 (sum=" + detail::format_double(s) + ")");
}

Weights Weights::equal(Eigen::Index n) {
    if (n < 1) throw ValidationError("weights: need at least one asset");
    return Weights(Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

}  // namespace

ReturnPanel load_return_panel(const std::string& path) {
    auto in = open_input(path);
    return read_return_panel(in);
}

ReturnPanel read_return_panel(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    struct Row {
        std::string date, asset;
        double value;
        std::size_t line;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_comment_or_blank(line)) continue;
        auto f = detail::split(line);
        if (!header_seen) {
            if (f.size() != 3 || f[0] != "date" || f[1] != "asset" || f[2] != "return")
                throw ParseError("expected header 'date,asset,return'", lineno);
            header_seen = true;
            continue;
        }
        if (f.size() != 3) throw ParseError("expected 3 fields, got " + std::to_string(f.size()), lineno);
        for (std::size_t k = 0; k < 3; ++k)
            if (f[k].empty()) throw ValidationError("line " + std::to_string(lineno) + ": missing cell");
        if (!detail::is_iso_date(f[0])) throw ParseError("malformed date '" + std::string(f[0]) + "'", lineno);
        auto v = detail::parse_double(f[2]);
        if (!v) throw ParseError("malformed return '" + std::string(f[2]) + "'", lineno);
        if (!(*v > -1.0) || !std::isfinite(*v))
            throw ValidationError("line " + std::to_string(lineno) + ": return " + std::string(f[2]) +
                                  " for " + std::string(f[1]) + " on " + std::string(f[0]) +
                                  " is not greater than -1");
        rows.push_back({std::string(f[0]), std::string(f[1]), *v, lineno});
    }
    if (rows.empty()) throw DataError("return panel: no data");

    std::set<std::string> date_set, asset_set;
    for (const auto& r : rows) {
        date_set.insert(r.date);
        asset_set.insert(r.asset);
    }
    ReturnPanel panel;
    panel.dates.assign(date_set.begin(), date_set.end());
    panel.assets.assign(asset_set.begin(), asset_set.end());
    std::unordered_map<std::string, Eigen::Index> di, ai;
    for (std::size_t k = 0; k < panel.dates.size(); ++k) di[panel.dates[k]] = static_cast<Eigen::Index>(k);
    for (std::size_t k = 0; k < panel.assets.size(); ++k) ai[panel.assets[k]] = static_cast<Eigen::Index>(k);

    const auto t = static_cast<Eigen::Index>(panel.dates.size());
    const auto n = static_cast<Eigen::Index>(panel.assets.size());
    panel.returns = Eigen::MatrixXd::Constant(t, n, std::nan(""));
    for (const auto& r : rows) {
        double& cell = panel.returns(di[r.date], ai[r.asset]);
        if (!std::isnan(cell))
            throw ValidationError("line " + std::to_string(r.line) + ": duplicate entry for " + r.asset + " on " +
                                  r.date);
        cell = r.value;
    }
    for (Eigen::Index a = 0; a < t; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            if (std::isnan(panel.returns(a, b)))
                throw ValidationError("missing cell: " + panel.assets[b] + " on " + panel.dates[a]);
    panel.validate();
    return panel;
}

void write_return_panel(const ReturnPanel& panel, std::ostream& out) {
    out << "date,asset,return\n";
    for (Eigen::Index t = 0; t < panel.n_days(); ++t)
        for (Eigen::Index i = 0; i < panel.n_assets(); ++i)
            out << panel.dates[t] << ',' << panel.assets[i] << ',' << detail::format_double(panel.returns(t, i))
                << '\n';
}

std::vector<DayTicks> load_ticks(const std::string& path) {
    auto in = open_input(path);
    return read_ticks(in);
}

std::vector<DayTicks> read_ticks(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::map<std::string, std::map<std::string, TickSeries>> by_day;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_comment_or_blank(line)) continue;
        auto f = detail::split(line);
        if (!header_seen) {
            if (f.size() != 4 || f[0] != "date" || f[1] != "asset" || f[2] != "timestamp_ns" || f[3] != "midquote")
                throw ParseError("expected header 'date,asset,timestamp_ns,midquote'", lineno);
            header_seen = true;
            continue;
        }
        if (f.size() != 4) throw ParseError("expected 4 fields, got " + std::to_string(f.size()), lineno);
        if (!detail::is_iso_date(f[0])) throw ParseError("malformed date", lineno);
        auto ts = detail::parse_int<std::int64_t>(f[2]);
        auto mq = detail::parse_double(f[3]);
        if (!ts || !mq) throw ParseError("malformed timestamp or midquote", lineno);
        if (!(*mq > 0.0)) throw ValidationError("line " + std::to_string(lineno) + ": midquote must be positive");
        auto& series = by_day[std::string(f[0])][std::string(f[1])];
        series.asset = std::string(f[1]);
        if (!series.timestamps_ns.empty() && *ts <= series.timestamps_ns.back())
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate or out-of-order timestamp for " +
                                  series.asset);
        series.timestamps_ns.push_back(*ts);
        series.midquotes.push_back(*mq);
    }
    if (by_day.empty()) throw DataError("ticks: no data");
    std::vector<DayTicks> out;
    for (auto& [date, assets] : by_day) {
        DayTicks d;
        d.date = date;
        for (auto& [name, series] : assets) {
            if (series.size() < 2)
                throw InsufficientDataError("ticks: asset " + name + " has fewer than 2 quotes on " + date);
            d.assets.push_back(std::move(series));
        }
        out.push_back(std::move(d));
    }
    return out;
}

void write_ticks(std::span<const DayTicks> days, std::ostream& out) {
    out << "date,asset,timestamp_ns,midquote\n";
    for (const auto& d : days)
        for (const auto& s : d.assets)
            for (std::size_t k = 0; k < s.size(); ++k)
                out << d.date << ',' << s.asset << ',' << s.timestamps_ns[k] << ','
                    << detail::format_double(s.midquotes[k]) << '\n';
}

std::map<std::string, double> read_caps(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::map<std::string, double> caps;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_comment_or_blank(line)) continue;
        auto f = detail::split(line);
        if (!header_seen) {
            if (f.size() != 2 || f[0] != "asset" || f[1] != "cap")
                throw ParseError("expected header 'asset,cap'", lineno);
            header_seen = true;
            continue;
        }
        if (f.size() != 2) throw ParseError("expected 2 fields", lineno);
        auto v = detail::parse_double(f[1]);
        if (!v || !(*v > 0.0)) throw ParseError("market cap must be a positive number", lineno);
        caps[std::string(f[0])] = *v;
    }
    return caps;
}

void write_caps(const std::map<std::string, double>& caps, std::ostream& out) {
    out << "asset,cap\n";
    for (const auto& [asset, cap] : caps) out << asset << ',' << detail::format_double(cap) << '\n';
}

SyncedReturns refresh_time_sample(std::span<const TickSeries> ticks, const std::string& block_id) {
    if (ticks.empty()) throw InsufficientDataError("refresh_time_sample: no assets");
    for (const auto& s : ticks) {
        if (s.size() < 2) throw InsufficientDataError("refresh_time_sample: asset " + s.asset + " has fewer than 2 quotes");
        s.validate();
    }
    const std::size_t n = ticks.size();
    std::vector<std::size_t> pos(n, 0);  // index of the last quote at or before the current refresh time

    std::int64_t tau = ticks[0].timestamps_ns.front();
    for (const auto& s : ticks) tau = std::max(tau, s.timestamps_ns.front());

    SyncedReturns out;
    out.block_id = block_id;
    for (const auto& s : ticks) out.assets.push_back(s.asset);

    std::vector<std::vector<double>> log_prices(n);
    for (;;) {
        out.refresh_times.push_back(tau);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& ts = ticks[i].timestamps_ns;
            while (pos[i] + 1 < ts.size() && ts[pos[i] + 1] <= tau) ++pos[i];
            log_prices[i].push_back(std::log(ticks[i].midquotes[pos[i]]));
        }
        bool exhausted = false;
        std::int64_t next = tau;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& ts = ticks[i].timestamps_ns;
            if (pos[i] + 1 >= ts.size()) {
                exhausted = true;
                break;
            }
            next = std::max(next, ts[pos[i] + 1]);
        }
        if (exhausted) break;
        tau = next;
    }

    const auto m = static_cast<Eigen::Index>(out.refresh_times.size());
    out.log_returns.resize(std::max<Eigen::Index>(m - 1, 0), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index l = 1; l < m; ++l)
            out.log_returns(l - 1, static_cast<Eigen::Index>(i)) = log_prices[i][l] - log_prices[i][l - 1];
    return out;
}

Weights drifted_weights(const Weights& w, const Eigen::VectorXd& r) {
    if (r.size() != w.size()) throw ShapeError("drifted_weights: weights and returns differ in length");
    const double growth = 1.0 + w.values().dot(r);
    if (!(growth > 0.0))
        throw DomainError("drifted_weights: portfolio gross return " + detail::format_double(growth) +
                          " is not positive");
    Eigen::VectorXd out = w.values().cwiseProduct((Eigen::VectorXd::Ones(r.size()) + r)) / growth;
    return Weights(std::move(out));
}

}  // namespace costaware
