// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/judge.hpp"
#include "tinyedit/sample.hpp"

#include <istream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace tinyedit
{

/// A statistic with no defined value for the input (zero variance, no pairs).
class UndefinedStatistic: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// (points - 1) / 3 * 100.
double normalize_points(int points);
double normalize_label(const RubricLabel& label);

struct ScoreCell
{
    double mean = 0.0;
    int count = 0;
};

/// Per model/criterion/type means on the 0-100 scale, with macro and overall views.
class ScoreTable
{
  public:
    void set_cell(const std::string& model, Criterion criterion, EditType type, double mean, int count = 1);
    void add_failure(const std::string& model, Criterion criterion);

    [[nodiscard]] std::optional<ScoreCell> cell(const std::string& model, Criterion criterion, EditType type) const;
    /// Unweighted mean over the types present; nullopt if none.
    [[nodiscard]] std::optional<double> macro(const std::string& model, Criterion criterion) const;
    /// Mean of the two criterion macros; nullopt unless both exist.
    [[nodiscard]] std::optional<double> overall(const std::string& model) const;
    /// Mean of the two criteria for one type; nullopt unless both exist.
    [[nodiscard]] std::optional<double> type_overall(const std::string& model, EditType type) const;
    [[nodiscard]] std::vector<EditType> missing_types(const std::string& model, Criterion criterion) const;
    [[nodiscard]] int failures(const std::string& model, Criterion criterion) const;
    [[nodiscard]] std::vector<std::string> models() const;

  private:
    std::map<std::tuple<std::string, Criterion, EditType>, ScoreCell> _cells;
    std::map<std::pair<std::string, Criterion>, int> _failures;
};

/// Failed verdicts are excluded from the means and counted as failures.
ScoreTable aggregate(std::span<const VerdictRecord> verdicts);

/// Cells CSV with header model,criterion,edit_type,score[,count].
ScoreTable score_table_from_csv(std::istream& in);

/// One row per model x criterion x type, then per-criterion averages and overall rows.
std::string to_csv(const ScoreTable& table);
nlohmann::ordered_json to_json(const ScoreTable& table);

/// Average ranks (ties share the mean of their positions), 1-based.
std::vector<double> mid_ranks(std::span<const double> values);

double spearman(std::span<const double> x, std::span<const double> y);

struct PearsonResult
{
    double r = 0.0;
    std::optional<double> p; // two-sided; nullopt when n < 3
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);

double mae(std::span<const double> x, std::span<const double> y);

enum class MeasurementLevel
{
    Nominal,
    Ordinal,
    Interval,
};

std::string_view to_token(MeasurementLevel level);
std::optional<MeasurementLevel> parse_measurement_level(std::string_view token);

struct ReliabilityInput
{
    /// items x annotators; nullopt marks a missing rating.
    std::vector<std::vector<std::optional<int>>> ratings;
    MeasurementLevel level = MeasurementLevel::Ordinal;
};

/// 1 - D_o / D_e over the coincidence matrix.
double krippendorff_alpha(const ReliabilityInput& input);

struct AreaStatistics
{
    std::vector<double> sorted_ratios;
    std::vector<double> bin_edges; // bins + 1 geometric edges
    std::vector<int> bin_counts;

    /// Fraction of ratios <= x.
    [[nodiscard]] double cdf(double x) const;
};

/// Zero ratios appear in the CDF but not in the log-spaced histogram.
AreaStatistics area_statistics(std::span<const double> ratios, int bins = 10);

struct TrendPoint
{
    std::string id;
    double area = 0.0; // target box pixel area
    double score = 0.0;
};

struct TrendResult
{
    std::vector<double> window_area;  // mean area per window
    std::vector<double> window_score; // mean score per window
    std::optional<double> r;
    std::optional<double> p;
    std::string note; // why r is undefined, when it is
};

/// Sorts by area (ties by id), averages windows of `window` consecutive samples,
/// correlates window mean score against window mean area.
TrendResult sliding_trend(std::vector<TrendPoint> points, int window = 10);

} // namespace tinyedit
