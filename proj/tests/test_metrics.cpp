// SPDX-License-Identifier: Apache-2.0
#include "paper_tables.hpp"
#include "support.hpp"
#include "tinyedit/metrics.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace testing;

namespace
{

std::vector<double> v(std::initializer_list<double> xs)
{
    return xs;
}

VerdictRecord verdict(std::string model, Criterion c, EditType t, int points)
{
    VerdictRecord r;
    r.sample_id = "s";
    r.model_id = std::move(model);
    r.criterion = c;
    r.edit_type = t;
    r.label = RubricLabel::from_points(c, points);
    return r;
}

} // namespace

TEST_CASE("label normalization")
{
    CHECK(normalize_label(IFLabel::FlawlessExecution) == 100.0);
    CHECK(normalize_label(IFLabel::LocalizationFailure) == 0.0);
    double sum = 0;
    for (const auto& l: RubricLabel::all(Criterion::VisualConsistency))
        sum += normalize_label(l);
    CHECK(sum / 4 == doctest::Approx(50.0));
    for (int p = 1; p < 4; ++p)
        CHECK(normalize_points(p) < normalize_points(p + 1));
    CHECK_THROWS(normalize_points(0));
}

TEST_CASE("aggregate computes per type, macro and overall")
{
    std::vector<VerdictRecord> vs;
    for (auto t: kAllEditTypes)
        for (auto c: kAllCriteria)
            vs.push_back(verdict("m", c, t, 4));
    auto const all_top = aggregate(vs);
    for (auto t: kAllEditTypes)
        CHECK(all_top.cell("m", Criterion::VisualConsistency, t)->mean == 100.0);
    CHECK(all_top.overall("m") == 100.0);

    std::vector<VerdictRecord> mixed { verdict("m", Criterion::InstructionFollowing, EditType::Color, 4),
                                       verdict("m", Criterion::InstructionFollowing, EditType::Color, 1),
                                       verdict("m", Criterion::InstructionFollowing, EditType::OCR, 3),
                                       verdict("m", Criterion::VisualConsistency, EditType::OCR, 2) };
    auto failed = verdict("m", Criterion::VisualConsistency, EditType::Color, 4);
    failed.label.reset();
    failed.failure = FailureReason::TurnLimit;
    mixed.push_back(failed);
    auto const t = aggregate(mixed);
    CHECK(t.cell("m", Criterion::InstructionFollowing, EditType::Color)->mean == doctest::Approx(50.0));
    CHECK(t.cell("m", Criterion::InstructionFollowing, EditType::Color)->count == 2);
    CHECK(*t.macro("m", Criterion::InstructionFollowing) == doctest::Approx((50.0 + 200.0 / 3) / 2));
    CHECK(*t.macro("m", Criterion::VisualConsistency) == doctest::Approx(100.0 / 3));
    CHECK(t.failures("m", Criterion::VisualConsistency) == 1);
    CHECK_FALSE(t.cell("m", Criterion::VisualConsistency, EditType::Color));
    CHECK(t.missing_types("m", Criterion::InstructionFollowing).size() == 5);
    CHECK(*t.overall("m") == doctest::Approx((*t.macro("m", Criterion::InstructionFollowing)
                                              + *t.macro("m", Criterion::VisualConsistency)) / 2));
}

TEST_CASE("published per-type scores reproduce every average and combined cell")
{
    namespace P = testing::published;
    auto const t = P::table();
    for (std::size_t m = 0; m < P::kModels.size(); ++m)
    {
        std::string const model(P::kModels[m]);
        CAPTURE(model);
        CHECK(std::abs(*t.macro(model, Criterion::InstructionFollowing) - P::kInstructionAverage[m]) <= 0.01);
        CHECK(std::abs(*t.macro(model, Criterion::VisualConsistency) - P::kConsistencyAverage[m]) <= 0.01);
        CHECK(std::abs(*t.overall(model) - P::kOverall[m]) <= 0.01);
        for (std::size_t r = 0; r < P::kTypes.size(); ++r)
            CHECK(std::abs(*t.type_overall(model, P::kTypes[r]) - P::kCombined[r][m]) <= 0.01);
    }
    CHECK(std::abs((48.97 + 82.13) / 2 - 65.55) <= 0.01);
}

TEST_CASE("cells csv round trip")
{
    auto const t = testing::published::table();
    auto const csv = to_csv(t);
    CHECK(csv.rfind("model,criterion,edit_type,score,count\n", 0) == 0);
    CHECK(csv.find("Gemini-3-Pro,overall,average,65.55") != std::string::npos);
    CHECK(csv.find("Gemini-3-Pro,if,average,48.97") != std::string::npos);
    CHECK(csv.find("Gemini-3-Pro,vc,average,82.13") != std::string::npos);
    std::istringstream in(csv);
    auto const back = score_table_from_csv(in);
    CHECK(std::abs(*back.overall("MagicBrush") - 23.16) <= 0.01);
    auto const j = to_json(t);
    CHECK(j["models"].size() == 10);

    std::istringstream bad("model,edit_type,score\nx,color,3\n");
    CHECK_THROWS(score_table_from_csv(bad));
}

TEST_CASE("spearman examples and tie handling")
{
    CHECK(spearman(v({ 1, 2, 3 }), v({ 1, 2, 3 })) == doctest::Approx(1.0));
    CHECK(spearman(v({ 1, 2, 3 }), v({ 3, 2, 1 })) == doctest::Approx(-1.0));
    CHECK(spearman(v({ 1, 2, 3, 4 }), v({ 1, 3, 2, 4 })) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(mid_ranks(v({ 10, 20, 20, 30 })) == v({ 1, 2.5, 2.5, 4 }));
    CHECK_THROWS_AS(spearman(v({ 1, 1, 1 }), v({ 1, 2, 3 })), UndefinedStatistic);
    CHECK_THROWS(spearman(v({ 1, 2 }), v({ 1, 2, 3 })));
}

TEST_CASE("spearman is invariant under increasing transforms")
{
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 200; ++i)
    {
        std::vector<double> x(3 + rng() % 20);
        std::vector<double> y(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
        {
            x[k] = u(rng);
            y[k] = u(rng);
        }
        std::vector<double> tx(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            tx[k] = std::exp(x[k]) + 3 * x[k];
        CHECK(spearman(tx, y) == doctest::Approx(spearman(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("pearson examples")
{
    auto const x = v({ 1, 2, 3, 4, 5 });
    std::vector<double> affine;
    std::vector<double> neg;
    for (double e: x)
    {
        affine.push_back(2 * e + 3);
        neg.push_back(-e);
    }
    CHECK(pearson(x, affine).r == doctest::Approx(1.0));
    CHECK(pearson(x, neg).r == doctest::Approx(-1.0));
    auto const r = pearson(v({ 1, 2, 3 }), v({ 1, 2, 4 }));
    CHECK(std::abs(r.r - 3.0 / std::sqrt(28.0 / 3.0)) < 1e-12);
    CHECK(std::abs(r.r - 0.9820) < 1e-4);
    REQUIRE(r.p);
    CHECK(*r.p > 0.0);
    CHECK(*r.p < 1.0);
    CHECK_FALSE(pearson(v({ 1, 2 }), v({ 2, 1 })).p);
    CHECK_THROWS_AS(pearson(v({ 2, 2, 2 }), v({ 1, 2, 3 })), UndefinedStatistic);
}

TEST_CASE("pearson p value matches the t distribution")
{
    auto const small = pearson(v({ 1, 2, 3, 4, 5, 6, 7, 8, 9, 10 }), v({ 1, 2, 3, 4, 5, 6, 7, 8, 10, 9 }));
    CHECK(*small.p < 1e-5);
    // r = 0.5, n = 10: t = 0.5 * sqrt(8 / 0.75), two-sided p from t with 8 degrees of freedom
    std::vector<double> a { -1.5, -0.5, 0.5, 1.5, -1.5, -0.5, 0.5, 1.5, 0, 0 };
    std::vector<double> b(a.size());
    // b = 0.5 a + sqrt(0.75) z with z orthogonal to a and of equal norm
    std::vector<double> z { 0.5, -1.5, 1.5, -0.5, -0.5, 1.5, -1.5, 0.5, 0, 0 };
    for (std::size_t i = 0; i < a.size(); ++i)
        b[i] = 0.5 * a[i] + std::sqrt(0.75) * z[i];
    auto const half = pearson(a, b);
    CHECK(half.r == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(*half.p == doctest::Approx(0.14111).epsilon(1e-3));
}

TEST_CASE("pearson is affine invariant")
{
    std::mt19937 rng(37);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int i = 0; i < 200; ++i)
    {
        std::vector<double> x(3 + rng() % 30);
        std::vector<double> y(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
        {
            x[k] = u(rng);
            y[k] = u(rng);
        }
        auto const base = pearson(x, y).r;
        auto const a = 0.1 + std::abs(u(rng));
        auto const b = u(rng);
        std::vector<double> tx(x.size());
        std::vector<double> nx(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
        {
            tx[k] = a * x[k] + b;
            nx[k] = -x[k];
        }
        CHECK(std::abs(pearson(tx, y).r - base) < 1e-12);
        CHECK(std::abs(pearson(nx, y).r + base) < 1e-12);
    }
}

TEST_CASE("mean absolute error")
{
    CHECK(mae(v({ 1, 2, 3 }), v({ 1, 2, 3 })) == 0.0);
    CHECK(mae(v({ 1, 4 }), v({ 2, 3 })) == 1.0);
    CHECK(mae(v({ 1, 1, 1 }), v({ 4, 4, 4 })) == 3.0);
    CHECK(mae(v({ 1, 3 }), v({ 4, 2 })) == mae(v({ 4, 2 }), v({ 1, 3 })));
    CHECK_THROWS(mae(v({}), v({})));
}

TEST_CASE("krippendorff alpha basics")
{
    ReliabilityInput perfect;
    perfect.ratings = { { 1, 1, 1 }, { 2, 2, 2 }, { 4, 4, std::nullopt }, { 3, 3, 3 } };
    for (auto level: { MeasurementLevel::Nominal, MeasurementLevel::Ordinal, MeasurementLevel::Interval })
    {
        perfect.level = level;
        CHECK(krippendorff_alpha(perfect) == 1.0);
    }

    ReliabilityInput nominal;
    nominal.level = MeasurementLevel::Nominal;
    nominal.ratings = { { 1, 1 }, { 1, 1 }, { 2, 2 }, { 2, 1 } };
    CHECK(krippendorff_alpha(nominal) == doctest::Approx(oracle_alpha(nominal.ratings, Level::Nominal)).epsilon(1e-12));
    // n = 8 values (5 of A, 3 of B): D_o = 2/8, D_e = 2*5*3/(8*7) -> alpha = 1 - (1/4)/(15/28) = 8/15
    CHECK(krippendorff_alpha(nominal) == doctest::Approx(1.0 - (0.25) / (30.0 / 56.0)));

    ReliabilityInput single;
    single.ratings = { { 1, std::nullopt } };
    CHECK_THROWS(krippendorff_alpha(single));

    ReliabilityInput constant;
    constant.ratings = { { 2, 2 }, { 2, 2 } };
    CHECK_THROWS_AS(krippendorff_alpha(constant), UndefinedStatistic);
}

TEST_CASE("krippendorff alpha matches the definitional oracle")
{
    std::mt19937 rng(41);
    int checked = 0;
    for (int i = 0; i < 400; ++i)
    {
        auto const annotators = 2 + static_cast<int>(rng() % 3);
        auto const items = 1 + static_cast<int>(rng() % 8);
        std::vector<std::vector<std::optional<int>>> ratings(static_cast<std::size_t>(items));
        for (auto& row: ratings)
            for (int a = 0; a < annotators; ++a)
                row.push_back(rng() % 5 == 0 ? std::nullopt : std::optional<int>(1 + static_cast<int>(rng() % 4)));
        for (auto [level, oracle_level]: { std::pair { MeasurementLevel::Nominal, Level::Nominal },
                                           std::pair { MeasurementLevel::Ordinal, Level::Ordinal },
                                           std::pair { MeasurementLevel::Interval, Level::Interval } })
        {
            ReliabilityInput in { ratings, level };
            double expected = 0;
            bool defined = true;
            try
            {
                expected = oracle_alpha(ratings, oracle_level);
                defined = std::isfinite(expected);
            }
            catch (...)
            {
                defined = false;
            }
            if (!defined)
            {
                CHECK_THROWS(krippendorff_alpha(in));
                continue;
            }
            CHECK(std::abs(krippendorff_alpha(in) - expected) < 1e-9);
            ++checked;
        }
    }
    CHECK(checked > 600);
}

TEST_CASE("area statistics")
{
    auto const s = area_statistics(v({ 0.03, 0.01, 0.02 }));
    CHECK(s.sorted_ratios == v({ 0.01, 0.02, 0.03 }));
    CHECK(s.cdf(0.02) == doctest::Approx(2.0 / 3));
    CHECK(s.cdf(0.001) == 0.0);
    CHECK(s.cdf(1.0) == 1.0);

    auto const same = area_statistics(v({ 0.05, 0.05, 0.05 }));
    int occupied = 0;
    for (int c: same.bin_counts)
        occupied += c > 0;
    CHECK(occupied == 1);

    auto const span = area_statistics(v({ 1e-4, 3e-4, 2e-3, 0.05, 1e-1 }));
    REQUIRE(span.bin_edges.size() == 11);
    CHECK(span.bin_edges.front() == doctest::Approx(1e-4));
    CHECK(span.bin_edges.back() == doctest::Approx(1e-1));
    for (std::size_t i = 1; i < span.bin_edges.size(); ++i)
        CHECK(span.bin_edges[i] / span.bin_edges[i - 1] == doctest::Approx(std::pow(10.0, 0.3)));
    int total = 0;
    for (int c: span.bin_counts)
        total += c;
    CHECK(total == 5);
}

TEST_CASE("sliding trend")
{
    std::vector<TrendPoint> pts;
    for (int i = 0; i < 15; ++i)
        pts.push_back({ "p" + std::to_string(i), double(100 + i * 10), double(i) });
    auto const short_run = sliding_trend(pts, 10);
    CHECK(short_run.window_score.size() == 6);
    CHECK(short_run.window_area.size() == 6);
    CHECK(short_run.window_score.front() == doctest::Approx(4.5));

    std::mt19937 rng(43);
    std::vector<TrendPoint> many;
    for (int i = 0; i < 200; ++i)
    {
        auto const area = double(1 + rng() % 100000);
        many.push_back({ "q" + std::to_string(i), area, std::log(area) * 10 });
    }
    std::shuffle(many.begin(), many.end(), rng);
    auto const trend = sliding_trend(many, 10);
    CHECK(trend.window_score.size() == 191);
    REQUIRE(trend.r);
    CHECK(*trend.r > 0.9);

    std::vector<TrendPoint> linear;
    for (int i = 0; i < 200; ++i)
        linear.push_back({ "l" + std::to_string(i), double(50 + 7 * i), double(3 * i) });
    CHECK(*sliding_trend(linear, 10).r > 0.99);

    for (auto& p: linear)
        p.score = 50.0;
    auto const flat = sliding_trend(linear, 10);
    CHECK_FALSE(flat.r);
    CHECK_FALSE(flat.note.empty());

    std::vector<TrendPoint> few(pts.begin(), pts.begin() + 5);
    CHECK_THROWS_AS(sliding_trend(few, 10), std::invalid_argument);
}

TEST_CASE("sliding trend breaks area ties by id")
{
    std::vector<TrendPoint> pts;
    for (int i = 0; i < 12; ++i)
        pts.push_back({ std::string(1, char('a' + i)), 5.0, double(i % 2 ? 0 : 100) });
    auto reversed = pts;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(sliding_trend(pts, 3).window_score == sliding_trend(reversed, 3).window_score);
}
