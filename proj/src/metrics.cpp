// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace tinyedit
{

double normalize_points(int points)
{
    if (points < 1 || points > 4)
        throw std::invalid_argument(fmt::format("rubric points out of range: {}", points));
    return (points - 1) / 3.0 * 100.0;
}

double normalize_label(const RubricLabel& label)
{
    return normalize_points(label.points());
}

void ScoreTable::set_cell(const std::string& model, Criterion criterion, EditType type, double mean, int count)
{
    _cells[{ model, criterion, type }] = { mean, count };
}

void ScoreTable::add_failure(const std::string& model, Criterion criterion)
{
    ++_failures[{ model, criterion }];
}

std::optional<ScoreCell> ScoreTable::cell(const std::string& model, Criterion criterion, EditType type) const
{
    auto it = _cells.find({ model, criterion, type });
    if (it == _cells.end())
        return std::nullopt;
    return it->second;
}

std::optional<double> ScoreTable::macro(const std::string& model, Criterion criterion) const
{
    double sum = 0.0;
    int n = 0;
    for (auto type: kAllEditTypes)
        if (auto c = cell(model, criterion, type))
        {
            sum += c->mean;
            ++n;
        }
    if (n == 0)
        return std::nullopt;
    return sum / n;
}

std::optional<double> ScoreTable::overall(const std::string& model) const
{
    auto const a = macro(model, Criterion::InstructionFollowing);
    auto const b = macro(model, Criterion::VisualConsistency);
    if (!a || !b)
        return std::nullopt;
    return (*a + *b) / 2.0;
}

std::optional<double> ScoreTable::type_overall(const std::string& model, EditType type) const
{
    auto const a = cell(model, Criterion::InstructionFollowing, type);
    auto const b = cell(model, Criterion::VisualConsistency, type);
    if (!a || !b)
        return std::nullopt;
    return (a->mean + b->mean) / 2.0;
}

std::vector<EditType> ScoreTable::missing_types(const std::string& model, Criterion criterion) const
{
    std::vector<EditType> out;
    for (auto type: kAllEditTypes)
        if (!cell(model, criterion, type))
            out.push_back(type);
    return out;
}

int ScoreTable::failures(const std::string& model, Criterion criterion) const
{
    auto it = _failures.find({ model, criterion });
    return it == _failures.end() ? 0 : it->second;
}

std::vector<std::string> ScoreTable::models() const
{
    std::set<std::string> names;
    for (const auto& [key, _]: _cells)
        names.insert(std::get<0>(key));
    for (const auto& [key, _]: _failures)
        names.insert(key.first);
    return { names.begin(), names.end() };
}

ScoreTable aggregate(std::span<const VerdictRecord> verdicts)
{
    std::map<std::tuple<std::string, Criterion, EditType>, std::pair<double, int>> sums;
    ScoreTable table;
    for (const auto& v: verdicts)
    {
        if (v.failed() || !v.label)
        {
            table.add_failure(v.model_id, v.criterion);
            continue;
        }
        if (v.label->criterion() != v.criterion)
            throw std::invalid_argument(fmt::format("verdict for {} carries a label of the other criterion", v.sample_id));
        auto& [sum, n] = sums[{ v.model_id, v.criterion, v.edit_type }];
        sum += normalize_label(*v.label);
        ++n;
    }
    for (const auto& [key, acc]: sums)
        table.set_cell(std::get<0>(key), std::get<1>(key), std::get<2>(key), acc.first / acc.second, acc.second);
    return table;
}

namespace
{

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i)
    {
        auto const c = line[i];
        if (quoted)
        {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"')
            {
                field += '"';
                ++i;
            }
            else if (c == '"')
                quoted = false;
            else
                field += c;
        }
        else if (c == '"')
            quoted = true;
        else if (c == ',')
            fields.push_back(std::exchange(field, {}));
        else if (c != '\r')
            field += c;
    }
    fields.push_back(field);
    for (auto& f: fields)
    {
        auto const b = f.find_first_not_of(" \t");
        auto const e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string {} : f.substr(b, e - b + 1);
    }
    return fields;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c: s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

} // namespace

ScoreTable score_table_from_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw DatasetError("score CSV is empty");
    auto const header = split_csv_line(line);
    auto column = [&](std::string_view name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return static_cast<int>(i);
        return -1;
    };
    auto const c_model = column("model");
    auto const c_criterion = column("criterion");
    auto const c_type = column("edit_type");
    auto const c_score = column("score");
    auto const c_count = column("count");
    if (c_model < 0 || c_criterion < 0 || c_type < 0 || c_score < 0)
        throw DatasetError("score CSV needs columns model,criterion,edit_type,score");

    ScoreTable table;
    int line_no = 1;
    while (std::getline(in, line))
    {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto const f = split_csv_line(line);
        auto const need = static_cast<std::size_t>(std::max({ c_model, c_criterion, c_type, c_score, c_count })) + 1;
        if (f.size() < need)
            throw DatasetError(fmt::format("score CSV line {}: expected {} fields", line_no, need));
        // Averages are derived from the per-type rows, so our own exports read back cleanly.
        if (f[static_cast<std::size_t>(c_type)] == "average")
            continue;
        auto const criterion = parse_criterion(f[static_cast<std::size_t>(c_criterion)]);
        auto const type = parse_edit_type(f[static_cast<std::size_t>(c_type)]);
        if (!criterion || !type)
            throw DatasetError(fmt::format("score CSV line {}: unknown criterion or edit type", line_no));
        double score = 0.0;
        int count = 1;
        try
        {
            score = std::stod(f[static_cast<std::size_t>(c_score)]);
            if (c_count >= 0 && !f[static_cast<std::size_t>(c_count)].empty())
                count = std::stoi(f[static_cast<std::size_t>(c_count)]);
        }
        catch (const std::exception&)
        {
            throw DatasetError(fmt::format("score CSV line {}: bad number", line_no));
        }
        table.set_cell(f[static_cast<std::size_t>(c_model)], *criterion, *type, score, count);
    }
    return table;
}

std::string to_csv(const ScoreTable& table)
{
    std::string out = "model,criterion,edit_type,score,count\n";
    for (const auto& model: table.models())
    {
        for (auto criterion: kAllCriteria)
        {
            for (auto type: kAllEditTypes)
                if (auto c = table.cell(model, criterion, type))
                    out += fmt::format("{},{},{},{:.2f},{}\n", csv_field(model), to_token(criterion), to_token(type),
                                       c->mean, c->count);
            if (auto m = table.macro(model, criterion))
                out += fmt::format("{},{},average,{:.2f},\n", csv_field(model), to_token(criterion), *m);
        }
        if (auto o = table.overall(model))
            out += fmt::format("{},overall,average,{:.2f},\n", csv_field(model), *o);
    }
    return out;
}

nlohmann::ordered_json to_json(const ScoreTable& table)
{
    auto models = nlohmann::ordered_json::array();
    for (const auto& model: table.models())
    {
        nlohmann::ordered_json mj;
        mj["model"] = model;
        for (auto criterion: kAllCriteria)
        {
            nlohmann::ordered_json cj;
            nlohmann::ordered_json types;
            for (auto type: kAllEditTypes)
                if (auto c = table.cell(model, criterion, type))
                    types[std::string(to_token(type))] = { { "score", c->mean }, { "count", c->count } };
            cj["types"] = types.is_null() ? nlohmann::ordered_json::object() : types;
            auto const m = table.macro(model, criterion);
            cj["average"] = m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
            auto missing = nlohmann::ordered_json::array();
            for (auto type: table.missing_types(model, criterion))
                missing.push_back(std::string(to_token(type)));
            cj["missing_types"] = std::move(missing);
            cj["failures"] = table.failures(model, criterion);
            mj[std::string(to_token(criterion))] = std::move(cj);
        }
        auto const o = table.overall(model);
        mj["overall"] = o ? nlohmann::ordered_json(*o) : nlohmann::ordered_json(nullptr);
        models.push_back(std::move(mj));
    }
    return { { "models", std::move(models) } };
}

std::vector<double> mid_ranks(std::span<const double> values)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();)
    {
        auto j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]])
            ++j;
        auto const rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (auto k = i; k <= j; ++k)
            ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace
{

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_n)
{
    if (x.size() != y.size())
        throw std::invalid_argument(fmt::format("sequences differ in length ({} vs {})", x.size(), y.size()));
    if (x.size() < min_n)
        throw std::invalid_argument(fmt::format("need at least {} observations, got {}", min_n, x.size()));
}

double correlation(std::span<const double> x, std::span<const double> y)
{
    // Checked directly: the mean of a constant sequence can round away from it.
    auto constant = [](std::span<const double> v) { return std::ranges::all_of(v, [&](double e) { return e == v[0]; }); };
    if (constant(x) || constant(y))
        throw UndefinedStatistic("correlation is undefined for a constant sequence");
    auto const n = static_cast<double>(x.size());
    auto const mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    auto const my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw UndefinedStatistic("correlation is undefined for a constant sequence");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y, 2);
    auto const rx = mid_ranks(x);
    auto const ry = mid_ranks(y);
    return correlation(rx, ry);
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y, 2);
    PearsonResult result;
    result.r = correlation(x, y);
    auto const n = x.size();
    if (n >= 3)
    {
        auto const df = static_cast<double>(n - 2);
        auto const denom = 1.0 - result.r * result.r;
        if (denom <= 0.0)
            result.p = 0.0;
        else
        {
            auto const t = std::abs(result.r) * std::sqrt(df / denom);
            boost::math::students_t dist(df);
            result.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
        }
    }
    return result;
}

double mae(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y, 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        sum += std::abs(x[i] - y[i]);
    return sum / static_cast<double>(x.size());
}

std::string_view to_token(MeasurementLevel level)
{
    switch (level)
    {
        case MeasurementLevel::Nominal: return "nominal";
        case MeasurementLevel::Ordinal: return "ordinal";
        case MeasurementLevel::Interval: return "interval";
    }
    return "ordinal";
}

std::optional<MeasurementLevel> parse_measurement_level(std::string_view token)
{
    for (auto l: { MeasurementLevel::Nominal, MeasurementLevel::Ordinal, MeasurementLevel::Interval })
        if (to_token(l) == token)
            return l;
    return std::nullopt;
}

double krippendorff_alpha(const ReliabilityInput& input)
{
    std::size_t annotators = 0;
    for (const auto& row: input.ratings)
        annotators = std::max(annotators, row.size());
    if (annotators < 2)
        throw std::invalid_argument("krippendorff_alpha: need at least two annotators");

    // Distinct values and their index.
    std::vector<int> values;
    for (const auto& row: input.ratings)
        for (const auto& v: row)
            if (v)
                values.push_back(*v);
    std::ranges::sort(values);
    values.erase(std::unique(values.begin(), values.end()), values.end());
    auto const k = values.size();
    auto index = [&](int v) { return static_cast<std::size_t>(std::ranges::lower_bound(values, v) - values.begin()); };

    // Coincidence matrix over pairable units.
    std::vector<double> o(k * k, 0.0);
    for (const auto& row: input.ratings)
    {
        std::vector<std::size_t> unit;
        for (const auto& v: row)
            if (v)
                unit.push_back(index(*v));
        if (unit.size() < 2)
            continue;
        auto const w = 1.0 / static_cast<double>(unit.size() - 1);
        for (std::size_t a = 0; a < unit.size(); ++a)
            for (std::size_t b = 0; b < unit.size(); ++b)
                if (a != b)
                    o[unit[a] * k + unit[b]] += w;
    }
    std::vector<double> nc(k, 0.0);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d)
            nc[c] += o[c * k + d];
    auto const n = std::accumulate(nc.begin(), nc.end(), 0.0);
    if (n < 2.0)
        throw std::invalid_argument("krippendorff_alpha: need at least one item with two ratings");

    auto delta2 = [&](std::size_t c, std::size_t d) -> double {
        if (c == d)
            return 0.0;
        switch (input.level)
        {
            case MeasurementLevel::Nominal: return 1.0;
            case MeasurementLevel::Interval:
            {
                auto const diff = static_cast<double>(values[c] - values[d]);
                return diff * diff;
            }
            case MeasurementLevel::Ordinal:
            {
                auto const lo = std::min(c, d);
                auto const hi = std::max(c, d);
                double s = 0.0;
                for (auto g = lo; g <= hi; ++g)
                    s += nc[g];
                s -= (nc[lo] + nc[hi]) / 2.0;
                return s * s;
            }
        }
        return 0.0;
    };

    double observed = 0.0;
    double expected = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d)
        {
            auto const dist = delta2(c, d);
            observed += o[c * k + d] * dist;
            expected += nc[c] * nc[d] * dist;
        }
    observed /= n;
    expected /= n * (n - 1.0);
    if (expected == 0.0)
        throw UndefinedStatistic("krippendorff_alpha: no variation in the pairable values");
    return 1.0 - observed / expected;
}

double AreaStatistics::cdf(double x) const
{
    if (sorted_ratios.empty())
        return 0.0;
    auto const it = std::ranges::upper_bound(sorted_ratios, x);
    return static_cast<double>(it - sorted_ratios.begin()) / static_cast<double>(sorted_ratios.size());
}

AreaStatistics area_statistics(std::span<const double> ratios, int bins)
{
    if (bins < 1)
        throw std::invalid_argument("area_statistics: bins must be positive");
    AreaStatistics stats;
    stats.sorted_ratios.assign(ratios.begin(), ratios.end());
    std::ranges::sort(stats.sorted_ratios);
    std::vector<double> positive;
    for (auto r: stats.sorted_ratios)
        if (r > 0.0)
            positive.push_back(r);
    if (positive.empty())
        return stats;

    auto const lo = positive.front();
    auto const hi = positive.back();
    stats.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i)
        stats.bin_edges[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, static_cast<double>(i) / bins);
    stats.bin_edges.back() = hi;
    stats.bin_counts.assign(static_cast<std::size_t>(bins), 0);
    for (auto r: positive)
    {
        int bin = 0;
        if (hi > lo)
            bin = std::clamp(static_cast<int>(std::floor(std::log(r / lo) / std::log(hi / lo) * bins)), 0, bins - 1);
        ++stats.bin_counts[static_cast<std::size_t>(bin)];
    }
    return stats;
}

TrendResult sliding_trend(std::vector<TrendPoint> points, int window)
{
    if (window < 1)
        throw std::invalid_argument("sliding_trend: window must be positive");
    if (points.size() < static_cast<std::size_t>(window))
        throw std::invalid_argument(
            fmt::format("sliding_trend: need at least {} samples, got {}", window, points.size()));
    std::ranges::sort(points, [](const TrendPoint& a, const TrendPoint& b) {
        return a.area != b.area ? a.area < b.area : a.id < b.id;
    });

    TrendResult result;
    auto const w = static_cast<std::size_t>(window);
    // Each window is summed afresh: a running sum drifts and would give a
    // constant score series a tiny spurious variance.
    for (std::size_t start = 0; start + w <= points.size(); ++start)
    {
        double area_sum = 0.0;
        double score_sum = 0.0;
        for (std::size_t i = start; i < start + w; ++i)
        {
            area_sum += points[i].area;
            score_sum += points[i].score;
        }
        result.window_area.push_back(area_sum / window);
        result.window_score.push_back(score_sum / window);
    }
    if (result.window_area.size() < 2)
    {
        result.note = "fewer than two windows";
        return result;
    }
    try
    {
        auto const pr = pearson(result.window_area, result.window_score);
        result.r = pr.r;
        result.p = pr.p;
    }
    catch (const UndefinedStatistic& e)
    {
        result.note = e.what();
    }
    return result;
}

} // namespace tinyedit
