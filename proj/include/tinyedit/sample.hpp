// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace tinyedit
{

struct ImageDims
{
    int width = 0;
    int height = 0;

    [[nodiscard]] std::int64_t area() const { return std::int64_t { width } * height; }
    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Integer pixel rectangle, origin top-left, half-open: [x1, x2) x [y1, y2).
struct BBox
{
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    [[nodiscard]] int width() const { return x2 - x1; }
    [[nodiscard]] int height() const { return y2 - y1; }
    [[nodiscard]] int min_side() const { return width() < height() ? width() : height(); }
    [[nodiscard]] std::int64_t area() const { return std::int64_t { width() } * height(); }

    /// Positive extent and non-negative origin.
    [[nodiscard]] bool well_formed() const { return x2 > x1 && y2 > y1 && x1 >= 0 && y1 >= 0; }
    [[nodiscard]] bool within(ImageDims dims) const
    {
        return well_formed() && x2 <= dims.width && y2 <= dims.height;
    }
    [[nodiscard]] bool contains(const BBox& other) const
    {
        return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Smallest box enclosing every input box. Throws on an empty sequence.
BBox enclosing_box(std::span<const BBox> boxes);
std::string to_string(const BBox& box);

enum class EditType
{
    Material,
    Color,
    OCR,
    Shape,
    Removal,
    Replacement,
    Count,
};

inline constexpr std::array<EditType, 7> kAllEditTypes {
    EditType::Material, EditType::Color,       EditType::OCR,   EditType::Shape,
    EditType::Removal,  EditType::Replacement, EditType::Count,
};

/// Stable lowercase serialization token ("material", "ocr", ...).
std::string_view to_token(EditType type);
/// Human-facing table row name ("Change Material", "Removal Object", ...).
std::string_view display_name(EditType type);
std::optional<EditType> parse_edit_type(std::string_view token);

enum class Criterion
{
    InstructionFollowing,
    VisualConsistency,
};

inline constexpr std::array<Criterion, 2> kAllCriteria { Criterion::InstructionFollowing,
                                                         Criterion::VisualConsistency };

std::string_view to_token(Criterion criterion); // "if" / "vc"
std::optional<Criterion> parse_criterion(std::string_view token);

enum class IFLabel
{
    LocalizationFailure = 1,
    WrongAction = 2,
    OverModification = 3,
    FlawlessExecution = 4,
};

enum class VCLabel
{
    SceneCollapse = 1,
    MultipleAnomalies = 2,
    SingleAnomaly = 3,
    PerfectConsistency = 4,
};

[[nodiscard]] constexpr int points(IFLabel label) { return static_cast<int>(label); }
[[nodiscard]] constexpr int points(VCLabel label) { return static_cast<int>(label); }
std::string_view label_name(IFLabel label);
std::string_view label_name(VCLabel label);

/// A rubric verdict of either criterion, ordered by its point value 1..4.
class RubricLabel
{
  public:
    RubricLabel(IFLabel label): _criterion(Criterion::InstructionFollowing), _points(tinyedit::points(label)) {}
    RubricLabel(VCLabel label): _criterion(Criterion::VisualConsistency), _points(tinyedit::points(label)) {}

    /// Throws std::invalid_argument unless 1 <= points <= 4.
    static RubricLabel from_points(Criterion criterion, int points);

    /// Case-insensitive match of the descriptive name after whitespace normalization.
    static std::optional<RubricLabel> parse(Criterion criterion, std::string_view text);

    /// The four labels of a criterion, worst first.
    static std::array<RubricLabel, 4> all(Criterion criterion);

    [[nodiscard]] Criterion criterion() const { return _criterion; }
    [[nodiscard]] int points() const { return _points; }
    [[nodiscard]] std::string_view name() const;

    [[nodiscard]] IFLabel as_if() const;
    [[nodiscard]] VCLabel as_vc() const;

    friend bool operator==(const RubricLabel&, const RubricLabel&) = default;

  private:
    RubricLabel(Criterion criterion, int points): _criterion(criterion), _points(points) {}

    Criterion _criterion;
    int _points;
};

/// Per-target labels combine to the worst (minimum point) label.
template <typename Label>
Label worst_of_targets(std::span<const Label> labels)
{
    if (labels.empty())
        throw std::invalid_argument("worst_of_targets: no labels");
    auto worst = labels.front();
    for (const auto& label: labels)
    {
        if constexpr (std::is_same_v<Label, RubricLabel>)
        {
            if (label.criterion() != worst.criterion())
                throw std::invalid_argument("worst_of_targets: labels of different criteria");
            if (label.points() < worst.points())
                worst = label;
        }
        else
        {
            if (points(label) < points(worst))
                worst = label;
        }
    }
    return worst;
}

enum class SampleStatus
{
    Draft,
    Verified,
    Discarded,
};

std::string_view to_token(SampleStatus status);
std::optional<SampleStatus> parse_sample_status(std::string_view token);

/// Raw VQA fields the sample was derived from.
struct Provenance
{
    std::string question;
    std::vector<std::string> options;
    std::optional<int> answer;
    std::optional<int> negative_option;
    std::optional<std::uint64_t> seed;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EditSample
{
    std::string id;
    std::string source_image;
    std::optional<std::string> reference_image;
    std::string source_caption;
    std::string reference_caption;
    std::string target_object;
    EditType edit_type = EditType::Color;
    std::string instruction;
    std::vector<BBox> target_bboxes;
    Provenance provenance;
    SampleStatus status = SampleStatus::Draft;

    friend bool operator==(const EditSample&, const EditSample&) = default;
};

struct RawVQASample
{
    std::string id;
    std::string image;
    std::string question;
    std::vector<std::string> options;
    int answer_key = 0;
};

struct Violation
{
    std::string code;
    std::string message;
    bool warning = false;
};

struct ValidationReport
{
    std::vector<Violation> violations;

    /// No blocking (non-warning) violations.
    [[nodiscard]] bool ok() const;
    [[nodiscard]] bool empty() const { return violations.empty(); }
    [[nodiscard]] bool has(std::string_view code) const;
    void add(std::string code, std::string message, bool warning = false);
    [[nodiscard]] std::string summary() const;
};

ValidationReport validate_sample(const EditSample& sample, ImageDims source_dims);

/// Reads the source image header under base_dir; an unreadable image yields
/// the "image-unreadable" violation.
ValidationReport validate_sample(const EditSample& sample, const std::filesystem::path& base_dir);

/// Checks the raw-sample invariants; need_counterfactual requires an incorrect option.
ValidationReport validate_raw_sample(const RawVQASample& raw, bool need_counterfactual = true);

class DatasetError: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

nlohmann::ordered_json to_json(const EditSample& sample);
EditSample sample_from_json(const nlohmann::json& json);
nlohmann::ordered_json to_json(const BBox& box);
BBox bbox_from_json(const nlohmann::json& json);

/// Canonical single-line encoding with a fixed field order.
std::string encode_sample(const EditSample& sample);
EditSample decode_sample(std::string_view line);

RawVQASample raw_sample_from_json(const nlohmann::json& json);
nlohmann::ordered_json to_json(const RawVQASample& raw);

std::vector<EditSample> load_dataset(const std::filesystem::path& path);
std::vector<RawVQASample> load_raw_samples(const std::filesystem::path& path);

/// Writes the dataset to a temporary sibling, then renames it over path.
void save_dataset(const std::filesystem::path& path, std::span<const EditSample> samples);

/// Write-then-rename of arbitrary text content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

} // namespace tinyedit
