// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/backends.hpp"
#include "tinyedit/geometry.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tinyedit
{

enum class ImageRole
{
    Source,
    Edited,
    Reference,
};

/// "Source Image", "Edited Image", "Reference Image".
std::string_view role_name(ImageRole role);
/// Accepts the canonical names and the "Original Image" alias for Source.
std::optional<ImageRole> parse_role(std::string_view name);

class EpisodeImageSet
{
  public:
    EpisodeImageSet() = default;
    EpisodeImageSet(Image source, Image edited, std::optional<Image> reference = std::nullopt);

    void set(ImageRole role, Image image);
    [[nodiscard]] bool has(ImageRole role) const { return _images.contains(role); }
    /// Throws std::out_of_range for a missing role.
    [[nodiscard]] const Image& get(ImageRole role) const;
    [[nodiscard]] std::shared_ptr<const Image> shared(ImageRole role) const;
    [[nodiscard]] std::vector<ImageRole> roles() const;

  private:
    std::map<ImageRole, std::shared_ptr<const Image>> _images;
};

inline constexpr std::string_view kZoomTool = "zoom_in_image";
inline constexpr std::string_view kDiffTool = "localize_differences";
inline constexpr std::string_view kDetectTool = "detect_object";

struct ToolInvocation
{
    std::string name;
    nlohmann::json parameters = nlohmann::json::object();

    friend bool operator==(const ToolInvocation&, const ToolInvocation&) = default;
};

nlohmann::ordered_json to_json(const ToolInvocation& invocation);

struct Observation
{
    enum class Kind
    {
        Ok,
        ProtocolError,
        BackendFailure,
    };

    Kind kind = Kind::Ok;
    std::string text;
    std::vector<std::shared_ptr<const Image>> images;
};

struct EnhancementPolicy
{
    int trigger_min_dim = 224; // crops with a shorter side below this are enhanced
    int target_min_dim = 512;  // local fallback target
    int backend_scale = 4;
};

struct ToolSuiteConfig
{
    DiffParams diff;
    EnhancementPolicy enhancement;
    double detection_floor = 0.35; // detections must score strictly above this
};

/// Returns an empty string when the invocation matches its schema against the
/// roles in images, otherwise the reason it does not.
std::string validate_invocation(const ToolInvocation& invocation, const EpisodeImageSet& images);

class ToolSuite
{
  public:
    explicit ToolSuite(ToolSuiteConfig config = {}, std::shared_ptr<DetectorBackend> detector = nullptr,
                       std::shared_ptr<EnhancerBackend> enhancer = nullptr);

    /// Never throws for judge mistakes or backend failures; those come back as observations.
    Observation execute(const ToolInvocation& invocation, const EpisodeImageSet& images) const;

    /// Enhances a crop whose shorter side is below the trigger: remote backend
    /// when configured and successful, otherwise the bicubic fallback.
    Image enhance(const Image& crop) const;

    /// Detections scoring above the floor, clipped to the image.
    std::vector<Detection> detect(const Image& image, std::string_view query) const;

    [[nodiscard]] const ToolSuiteConfig& config() const { return _config; }

  private:
    Observation zoom(const nlohmann::json& params, const EpisodeImageSet& images) const;
    Observation differences(const nlohmann::json& params, const EpisodeImageSet& images) const;
    Observation detect_observation(const nlohmann::json& params, const EpisodeImageSet& images) const;

    ToolSuiteConfig _config;
    std::shared_ptr<DetectorBackend> _detector;
    std::shared_ptr<EnhancerBackend> _enhancer;
};

/// Observation text used when localize_differences reports `count` regions.
std::string difference_observation_text(std::size_t count);
std::string not_detected_text(std::string_view object_name, ImageRole role);

} // namespace tinyedit
