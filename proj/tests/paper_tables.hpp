// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/metrics.hpp"
#include "tinyedit/sample.hpp"

#include <array>
#include <string_view>

// Published per-type scores for ten editing models, their per-criterion
// averages, and the combined per-type and overall scores.
namespace testing::published
{

inline constexpr std::array<std::string_view, 10> kModels { "Gemini-3-Pro", "GPT-Image-1", "OmniGen2",
                                                            "Bagel-Think",  "UniREdit-Bagel", "MagicBrush",
                                                            "Qwen-Edit",    "UniWorld-V1", "UniWorld-V2",
                                                            "Step1X-Edit" };

// Row order of the tables below.
inline constexpr std::array<tinyedit::EditType, 7> kTypes {
    tinyedit::EditType::Material, tinyedit::EditType::Color,       tinyedit::EditType::OCR,
    tinyedit::EditType::Shape,    tinyedit::EditType::Removal,     tinyedit::EditType::Replacement,
    tinyedit::EditType::Count,
};

using Grid = std::array<std::array<double, 10>, 7>;
using Row = std::array<double, 10>;

inline constexpr Grid kInstruction { {
    { 59.92, 54.07, 36.11, 51.19, 51.59, 12.70, 24.80, 16.06, 51.98, 52.78 },
    { 49.21, 40.17, 22.37, 39.82, 39.97, 14.62, 18.84, 10.70, 45.27, 42.74 },
    { 54.84, 39.73, 14.73, 22.34, 22.56, 6.04, 8.09, 15.45, 40.95, 47.69 },
    { 55.07, 53.62, 21.74, 49.28, 40.58, 20.29, 7.25, 10.14, 46.38, 44.93 },
    { 60.26, 65.68, 37.82, 43.09, 60.01, 26.80, 40.76, 21.20, 56.32, 56.00 },
    { 48.23, 45.93, 30.50, 37.59, 39.01, 25.53, 12.77, 14.19, 45.65, 46.10 },
    { 15.28, 18.06, 6.94, 5.56, 12.50, 1.39, 6.67, 9.11, 9.72, 8.33 },
} };
inline constexpr Row kInstructionAverage { 48.97, 45.32, 24.32, 35.55, 38.03, 15.34, 17.03, 13.84, 42.32, 42.65 };

inline constexpr Grid kConsistency { {
    { 88.10, 34.54, 57.94, 90.87, 31.73, 35.77, 73.02, 64.68, 63.49, 72.22 },
    { 84.76, 35.57, 44.79, 84.65, 38.97, 34.01, 70.20, 50.67, 65.14, 73.11 },
    { 78.23, 34.82, 63.13, 76.58, 36.82, 30.73, 65.49, 41.85, 54.63, 71.09 },
    { 82.61, 39.13, 60.87, 86.21, 45.45, 37.68, 59.42, 60.87, 60.87, 76.81 },
    { 87.25, 35.36, 67.51, 91.49, 37.28, 30.01, 70.68, 49.79, 48.73, 71.80 },
    { 81.49, 34.81, 65.96, 89.13, 36.23, 33.33, 69.50, 55.80, 69.50, 68.79 },
    { 72.46, 31.94, 58.33, 86.11, 34.85, 15.28, 56.94, 33.33, 38.56, 43.06 },
} };
inline constexpr Row kConsistencyAverage { 82.13, 35.17, 59.79, 86.43, 37.33, 30.97, 66.46, 51.00, 57.27, 68.13 };

inline constexpr Grid kCombined { {
    { 74.01, 44.31, 47.03, 71.03, 41.66, 24.24, 48.91, 40.37, 57.74, 62.50 },
    { 66.99, 37.87, 33.58, 62.24, 39.47, 24.32, 44.52, 30.69, 55.21, 57.93 },
    { 66.54, 37.28, 38.93, 49.46, 29.69, 18.39, 36.79, 28.65, 47.79, 59.39 },
    { 68.84, 46.38, 41.31, 67.75, 43.02, 28.99, 33.34, 35.51, 53.63, 60.87 },
    { 73.76, 50.52, 52.67, 67.29, 48.65, 28.41, 55.72, 35.50, 52.53, 63.90 },
    { 64.86, 40.37, 48.23, 63.36, 37.62, 29.43, 41.13, 35.00, 57.58, 57.45 },
    { 43.87, 25.00, 32.64, 45.84, 23.68, 8.34, 31.81, 21.22, 24.14, 25.70 },
} };
inline constexpr Row kOverall { 65.55, 40.25, 42.06, 61.00, 37.68, 23.16, 41.75, 32.42, 49.80, 55.39 };

/// The per-type cells as a score table.
inline tinyedit::ScoreTable table()
{
    tinyedit::ScoreTable t;
    for (std::size_t m = 0; m < kModels.size(); ++m)
        for (std::size_t r = 0; r < kTypes.size(); ++r)
        {
            t.set_cell(std::string(kModels[m]), tinyedit::Criterion::InstructionFollowing, kTypes[r], kInstruction[r][m]);
            t.set_cell(std::string(kModels[m]), tinyedit::Criterion::VisualConsistency, kTypes[r], kConsistency[r][m]);
        }
    return t;
}

} // namespace testing::published
