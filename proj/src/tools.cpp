// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/tools.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace tinyedit
{

std::string_view role_name(ImageRole role)
{
    switch (role)
    {
        case ImageRole::Source: return "Source Image";
        case ImageRole::Edited: return "Edited Image";
        case ImageRole::Reference: return "Reference Image";
    }
    return "Source Image";
}

std::optional<ImageRole> parse_role(std::string_view name)
{
    if (name == "Source Image" || name == "Original Image")
        return ImageRole::Source;
    if (name == "Edited Image")
        return ImageRole::Edited;
    if (name == "Reference Image")
        return ImageRole::Reference;
    return std::nullopt;
}

EpisodeImageSet::EpisodeImageSet(Image source, Image edited, std::optional<Image> reference)
{
    set(ImageRole::Source, std::move(source));
    set(ImageRole::Edited, std::move(edited));
    if (reference)
        set(ImageRole::Reference, std::move(*reference));
}

void EpisodeImageSet::set(ImageRole role, Image image)
{
    _images[role] = std::make_shared<const Image>(std::move(image));
}

const Image& EpisodeImageSet::get(ImageRole role) const
{
    return *shared(role);
}

std::shared_ptr<const Image> EpisodeImageSet::shared(ImageRole role) const
{
    auto it = _images.find(role);
    if (it == _images.end())
        throw std::out_of_range(fmt::format("episode has no '{}'", role_name(role)));
    return it->second;
}

std::vector<ImageRole> EpisodeImageSet::roles() const
{
    std::vector<ImageRole> out;
    for (const auto& [role, _]: _images)
        out.push_back(role);
    return out;
}

nlohmann::ordered_json to_json(const ToolInvocation& invocation)
{
    nlohmann::ordered_json j;
    j["name"] = invocation.name;
    j["parameters"] = nlohmann::ordered_json::parse(invocation.parameters.dump());
    return j;
}

namespace
{

struct ParamSpec
{
    std::string_view name;
    enum class Type
    {
        Role,
        Text,
        Box,
    } type;
};

struct ToolSpec
{
    std::string_view name;
    std::vector<ParamSpec> params;
};

const std::vector<ToolSpec>& tool_specs()
{
    using T = ParamSpec::Type;
    static const std::vector<ToolSpec> specs {
        { kZoomTool, { { "bbox_2d", T::Box }, { "target_image", T::Role } } },
        { kDiffTool, { { "comparison_image_1", T::Role }, { "comparison_image_2", T::Role } } },
        { kDetectTool, { { "target_image", T::Role }, { "detect_object_name", T::Text } } },
    };
    return specs;
}

std::string ordinal(std::size_t n)
{
    static constexpr std::array<std::string_view, 10> words { "first",   "second", "third", "fourth", "fifth",
                                                              "sixth",   "seventh", "eighth", "ninth", "tenth" };
    if (n >= 1 && n <= words.size())
        return std::string(words[n - 1]);
    auto const suffix = (n % 100 >= 11 && n % 100 <= 13) ? "th"
                        : n % 10 == 1                    ? "st"
                        : n % 10 == 2                    ? "nd"
                        : n % 10 == 3                    ? "rd"
                                                         : "th";
    return fmt::format("{}{}", n, suffix);
}

Observation protocol_error(std::string text)
{
    return { Observation::Kind::ProtocolError, std::move(text), {} };
}

Observation backend_failure(std::string_view tool, std::string_view detail)
{
    return { Observation::Kind::BackendFailure,
             fmt::format("The {} tool is temporarily unavailable ({}). You may retry the call later, use another "
                         "tool, or answer from the images you already have.",
                         tool, detail),
             {} };
}

ImageRole role_param(const nlohmann::json& params, std::string_view key)
{
    return *parse_role(params.at(std::string(key)).get<std::string>());
}

} // namespace

std::string validate_invocation(const ToolInvocation& invocation, const EpisodeImageSet& images)
{
    auto const& specs = tool_specs();
    auto spec = std::ranges::find(specs, std::string_view(invocation.name), &ToolSpec::name);
    if (spec == specs.end())
        return fmt::format("Unknown tool '{}'. Valid tools are: {}, {}, {}.", invocation.name, kZoomTool, kDiffTool,
                           kDetectTool);
    if (!invocation.parameters.is_object())
        return fmt::format("The parameters of {} must be a JSON object.", invocation.name);

    for (const auto& [key, _]: invocation.parameters.items())
        if (std::ranges::find(spec->params, std::string_view(key), &ParamSpec::name) == spec->params.end())
            return fmt::format("Unexpected parameter '{}' for {}.", key, invocation.name);

    for (const auto& param: spec->params)
    {
        auto const key = std::string(param.name);
        if (!invocation.parameters.contains(key))
            return fmt::format("Missing required parameter '{}' for {}.", key, invocation.name);
        auto const& value = invocation.parameters[key];
        switch (param.type)
        {
            case ParamSpec::Type::Role:
            {
                if (!value.is_string())
                    return fmt::format("Parameter '{}' must be an image name string.", key);
                auto const role = parse_role(value.get<std::string>());
                if (!role || !images.has(*role))
                {
                    std::string valid;
                    for (auto r: images.roles())
                        valid += fmt::format("{}'{}'", valid.empty() ? "" : ", ", role_name(r));
                    return fmt::format("Parameter '{}' must be one of {}; got {}.", key, valid, value.dump());
                }
                break;
            }
            case ParamSpec::Type::Text:
                if (!value.is_string() || value.get<std::string>().find_first_not_of(" \t") == std::string::npos)
                    return fmt::format("Parameter '{}' must be a non-empty string.", key);
                break;
            case ParamSpec::Type::Box:
            {
                if (!value.is_array() || value.size() != 4
                    || !std::ranges::all_of(value, [](const nlohmann::json& v) { return v.is_number(); }))
                    return fmt::format("Parameter '{}' must be an array of four numbers [x1, y1, x2, y2].", key);
                auto const c = value.get<std::vector<double>>();
                if (!(c[2] > c[0]) || !(c[3] > c[1]))
                    return fmt::format("Invalid {} {}: the bounding box must satisfy x2 > x1 and y2 > y1.", key,
                                       value.dump());
                break;
            }
        }
    }
    return {};
}

ToolSuite::ToolSuite(ToolSuiteConfig config, std::shared_ptr<DetectorBackend> detector,
                     std::shared_ptr<EnhancerBackend> enhancer)
    : _config(std::move(config)), _detector(std::move(detector)), _enhancer(std::move(enhancer))
{
    _config.diff.validate();
}

Observation ToolSuite::execute(const ToolInvocation& invocation, const EpisodeImageSet& images) const
{
    if (auto const problem = validate_invocation(invocation, images); !problem.empty())
        return protocol_error(problem);
    if (invocation.name == kZoomTool)
        return zoom(invocation.parameters, images);
    if (invocation.name == kDiffTool)
        return differences(invocation.parameters, images);
    return detect_observation(invocation.parameters, images);
}

Image ToolSuite::enhance(const Image& crop) const
{
    auto const& policy = _config.enhancement;
    if (crop.empty() || std::min(crop.width(), crop.height()) >= policy.trigger_min_dim)
        return crop;
    if (_enhancer)
    {
        try
        {
            auto out = _enhancer->enhance(crop, policy.backend_scale);
            // Accept only outputs that keep the aspect ratio within a pixel of rounding.
            auto const expect_h = static_cast<double>(out.width()) * crop.height() / crop.width();
            if (!out.empty() && std::abs(expect_h - out.height()) <= 1.0)
                return out;
            spdlog::warn("enhancer changed the aspect ratio ({}x{} -> {}x{}); using local upscale", crop.width(),
                         crop.height(), out.width(), out.height());
        }
        catch (const std::exception& e)
        {
            spdlog::warn("enhancer failed ({}); using local upscale", e.what());
        }
    }
    return upscale_fallback(crop, policy.target_min_dim);
}

std::vector<Detection> ToolSuite::detect(const Image& image, std::string_view query) const
{
    if (!_detector)
        throw BackendError(BackendError::Kind::Unreachable, "no detector backend configured");
    std::vector<Detection> out;
    for (auto d: _detector->detect(image, query))
    {
        if (!(d.score > _config.detection_floor))
            continue;
        d.box.x1 = std::clamp(d.box.x1, 0, image.width());
        d.box.y1 = std::clamp(d.box.y1, 0, image.height());
        d.box.x2 = std::clamp(d.box.x2, 0, image.width());
        d.box.y2 = std::clamp(d.box.y2, 0, image.height());
        if (d.box.x2 > d.box.x1 && d.box.y2 > d.box.y1)
            out.push_back(d);
    }
    return out;
}

Observation ToolSuite::zoom(const nlohmann::json& params, const EpisodeImageSet& images) const
{
    auto const role = role_param(params, "target_image");
    auto const& image = images.get(role);
    auto const c = params.at("bbox_2d").get<std::vector<double>>();
    BBox box { static_cast<int>(std::floor(c[0])), static_cast<int>(std::floor(c[1])),
               static_cast<int>(std::ceil(c[2])), static_cast<int>(std::ceil(c[3])) };
    box.x1 = std::clamp(box.x1, 0, image.width());
    box.y1 = std::clamp(box.y1, 0, image.height());
    box.x2 = std::clamp(box.x2, 0, image.width());
    box.y2 = std::clamp(box.y2, 0, image.height());
    if (box.x2 <= box.x1 || box.y2 <= box.y1)
        return protocol_error(fmt::format("The bbox_2d {} lies outside the '{}' ({}x{} pixels).",
                                          params.at("bbox_2d").dump(), role_name(role), image.width(),
                                          image.height()));
    auto zoomed = enhance(crop(image, box));
    return { Observation::Kind::Ok,
             fmt::format("The provided image is the zoomed-in region {} of the '{}'.", to_string(box), role_name(role)),
             { std::make_shared<const Image>(std::move(zoomed)) } };
}

std::string difference_observation_text(std::size_t count)
{
    static constexpr std::string_view kLayout =
        "the layout is a side-by-side comparison: the Left side is the original crop, and the Right side is the "
        "edited crop, clearly separated by a vertical red line. Please note that these detections are based on "
        "strict pixel-level comparison and might include negligible variations imperceptible to humans. You should "
        "disregard insignificant fluctuations and only focus on the crops showing significant, visually obvious "
        "changes.";
    if (count == 0)
        return "No difference regions were detected between the two compared images.";
    if (count == 1)
        return fmt::format("The provided first image shows a specific difference region. For this image, {}", kLayout);
    return fmt::format("From provided the first image to the {} image show specific difference regions. For each of "
                       "these images, {}",
                       ordinal(count), kLayout);
}

std::string not_detected_text(std::string_view object_name, ImageRole role)
{
    return fmt::format("No {} detected in the evaluated '{}'.", object_name, role_name(role));
}

Observation ToolSuite::differences(const nlohmann::json& params, const EpisodeImageSet& images) const
{
    auto const& a = images.get(role_param(params, "comparison_image_1"));
    auto const& b = images.get(role_param(params, "comparison_image_2"));
    auto const regions = localize_diff_regions(a, b, _config.diff);
    Observation obs { Observation::Kind::Ok, difference_observation_text(regions.size()), {} };
    for (const auto& region: regions)
        obs.images.push_back(std::make_shared<const Image>(enhance(region.composite)));
    return obs;
}

Observation ToolSuite::detect_observation(const nlohmann::json& params, const EpisodeImageSet& images) const
{
    auto const role = role_param(params, "target_image");
    auto const name = params.at("detect_object_name").get<std::string>();
    auto const& image = images.get(role);
    std::vector<Detection> found;
    try
    {
        found = detect(image, name);
    }
    catch (const std::exception& e)
    {
        return backend_failure(kDetectTool, e.what());
    }
    if (found.empty())
        return { Observation::Kind::Ok, not_detected_text(name, role), {} };

    auto marked = image;
    std::string listing;
    for (const auto& d: found)
    {
        draw_box_outline(marked, d.box);
        listing += fmt::format("{}{} (confidence {:.2f})", listing.empty() ? "" : "; ", to_string(d.box), d.score);
    }
    return { Observation::Kind::Ok,
             fmt::format("Detected {} {} in the evaluated '{}', marked with red boxes in the provided image: {}.",
                         found.size(), name, role_name(role), listing),
             { std::make_shared<const Image>(std::move(marked)) } };
}

} // namespace tinyedit
