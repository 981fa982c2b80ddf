// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"
#include "tinyedit/tools.hpp"

#include <doctest.h>

using namespace testing;

namespace
{

ToolInvocation call(std::string name, nlohmann::json params)
{
    return { std::move(name), std::move(params) };
}

EpisodeImageSet scene(int w = 300, int h = 260)
{
    auto const src = pattern_image(w, h, 31);
    return EpisodeImageSet(src, src);
}

} // namespace

TEST_CASE("zoom crops the requested box before enhancement")
{
    auto images = scene();
    ToolSuiteConfig cfg;
    cfg.enhancement.trigger_min_dim = 1; // never enhance
    ToolSuite const tools(cfg);
    auto const obs =
        tools.execute(call("zoom_in_image", { { "bbox_2d", { 20, 40, 150, 200 } }, { "target_image", "Edited Image" } }),
                      images);
    CHECK(obs.kind == Observation::Kind::Ok);
    REQUIRE(obs.images.size() == 1);
    CHECK(obs.images[0]->dims() == ImageDims { 130, 160 });
    CHECK(*obs.images[0] == crop(images.get(ImageRole::Edited), { 20, 40, 150, 200 }));
}

TEST_CASE("small crops go through the fallback upscale")
{
    auto images = scene();
    ToolSuite const tools;
    auto const obs =
        tools.execute(call("zoom_in_image", { { "bbox_2d", { 20, 40, 150, 200 } }, { "target_image", "Source Image" } }),
                      images);
    REQUIRE(obs.images.size() == 1);
    CHECK(obs.images[0]->dims() == ImageDims { 520, 640 });
}

TEST_CASE("enhancer backend is used and its failures fall back")
{
    Image const crop_img(100, 50, { 3, 3, 3 });
    auto good = std::make_shared<StubEnhancer>();
    ToolSuite const with_backend({}, nullptr, good);
    CHECK(with_backend.enhance(crop_img).dims() == ImageDims { 400, 200 });
    CHECK(good->calls == 1);

    auto failing = std::make_shared<StubEnhancer>(StubEnhancer::Behaviour::Fail);
    ToolSuite const with_failing({}, nullptr, failing);
    CHECK(with_failing.enhance(crop_img) == upscale_fallback(crop_img, 512));

    auto skewed = std::make_shared<StubEnhancer>(StubEnhancer::Behaviour::WrongAspect);
    ToolSuite const with_skewed({}, nullptr, skewed);
    auto const out = with_skewed.enhance(crop_img);
    CHECK(out.width() == 2 * out.height());

    Image const large(300, 240);
    CHECK(with_backend.enhance(large) == large);
}

TEST_CASE("difference tool reports one composite per region")
{
    auto const a = pattern_image(300, 200, 41);
    auto b = a;
    fill_rect(b, { 10, 10, 40, 40 }, kBlack);
    fill_rect(b, { 120, 20, 150, 60 }, kWhite);
    fill_rect(b, { 240, 140, 280, 190 }, { 0, 255, 0 });
    EpisodeImageSet const images(a, b);
    ToolSuite const tools;
    auto const obs = tools.execute(
        call("localize_differences", { { "comparison_image_1", "Source Image" }, { "comparison_image_2", "Edited Image" } }),
        images);
    CHECK(obs.images.size() == 3);
    CHECK(obs.text.find("From provided the first image to the third image show specific difference regions")
          != std::string::npos);
    CHECK(difference_observation_text(3) == obs.text);
}

TEST_CASE("difference tool on identical images")
{
    auto images = scene();
    ToolSuite const tools;
    auto const obs = tools.execute(
        call("localize_differences", { { "comparison_image_1", "Original Image" }, { "comparison_image_2", "Edited Image" } }),
        images);
    CHECK(obs.kind == Observation::Kind::Ok);
    CHECK(obs.images.empty());
}

TEST_CASE("detector outcomes")
{
    auto images = scene(100, 100);
    SUBCASE("nothing found")
    {
        ToolSuite const tools({}, std::make_shared<StubDetector>(std::vector<Detection> {}));
        auto const obs = tools.execute(
            call("detect_object", { { "target_image", "Source Image" }, { "detect_object_name", "yellow bicycle" } }),
            images);
        CHECK(obs.text == "No yellow bicycle detected in the evaluated 'Source Image'.");
        CHECK(obs.images.empty());
    }
    SUBCASE("boxes are drawn")
    {
        ToolSuite const tools({}, std::make_shared<StubDetector>(std::vector<Detection> { { { 10, 10, 50, 50 }, 0.9 } }));
        auto const obs = tools.execute(
            call("detect_object", { { "target_image", "Source Image" }, { "detect_object_name", "cup" } }), images);
        REQUIRE(obs.images.size() == 1);
        CHECK(obs.images[0]->at(10, 10) == kRed);
        CHECK(obs.images[0]->at(30, 11) == kRed);
        CHECK(obs.images[0]->at(30, 30) == images.get(ImageRole::Source).at(30, 30));
        CHECK(obs.text.find("[10, 10, 50, 50]") != std::string::npos);
    }
    SUBCASE("low confidence is not a detection")
    {
        ToolSuite const tools({}, std::make_shared<StubDetector>(std::vector<Detection> { { { 10, 10, 50, 50 }, 0.2 } }));
        auto const obs = tools.execute(
            call("detect_object", { { "target_image", "Edited Image" }, { "detect_object_name", "cup" } }), images);
        CHECK(obs.text == "No cup detected in the evaluated 'Edited Image'.");
    }
    SUBCASE("unreachable backend")
    {
        ToolSuite const tools({}, std::make_shared<StubDetector>(std::vector<Detection> {}, true));
        auto const obs = tools.execute(
            call("detect_object", { { "target_image", "Edited Image" }, { "detect_object_name", "cup" } }), images);
        CHECK(obs.kind == Observation::Kind::BackendFailure);
        CHECK(obs.text.find("No cup detected") == std::string::npos);
    }
    SUBCASE("no backend configured")
    {
        ToolSuite const tools;
        auto const obs = tools.execute(
            call("detect_object", { { "target_image", "Edited Image" }, { "detect_object_name", "cup" } }), images);
        CHECK(obs.kind == Observation::Kind::BackendFailure);
    }
}

TEST_CASE("schema violations come back as protocol errors")
{
    auto images = scene();
    ToolSuite const tools;
    auto const bad_box = tools.execute(
        call("zoom_in_image", { { "bbox_2d", { 50, 40, 50, 200 } }, { "target_image", "Edited Image" } }), images);
    CHECK(bad_box.kind == Observation::Kind::ProtocolError);
    CHECK(bad_box.text.find("x2 > x1") != std::string::npos);
    CHECK(bad_box.images.empty());

    auto const unknown = tools.execute(call("segment_anything", nlohmann::json::object()), images);
    CHECK(unknown.kind == Observation::Kind::ProtocolError);
    CHECK(unknown.text.find("zoom_in_image") != std::string::npos);

    CHECK_FALSE(validate_invocation(call("zoom_in_image", { { "bbox_2d", { 0, 0, 5, 5 } } }), images).empty());
    CHECK_FALSE(validate_invocation(
                    call("zoom_in_image", { { "bbox_2d", { 0, 0, 5, 5 } }, { "target_image", "Reference Image" } }),
                    images)
                    .empty());
    CHECK_FALSE(validate_invocation(call("zoom_in_image", { { "bbox_2d", { 0, 0, 5, 5 } },
                                                            { "target_image", "Edited Image" },
                                                            { "scale", 2 } }),
                                    images)
                    .empty());
    CHECK_FALSE(validate_invocation(call("detect_object", { { "target_image", "Edited Image" },
                                                            { "detect_object_name", "" } }),
                                    images)
                    .empty());
    CHECK(validate_invocation(call("detect_object", { { "target_image", "Edited Image" },
                                                      { "detect_object_name", "cup" } }),
                              images)
              .empty());
}

TEST_CASE("tools are deterministic and leave the image set alone")
{
    auto const a = pattern_image(200, 200, 51);
    auto b = a;
    fill_rect(b, { 60, 60, 90, 100 }, kBlack);
    EpisodeImageSet const images(a, b);
    ToolSuite const tools;
    auto const inv =
        call("localize_differences", { { "comparison_image_1", "Source Image" }, { "comparison_image_2", "Edited Image" } });
    auto const first = tools.execute(inv, images);
    auto const second = tools.execute(inv, images);
    CHECK(first.text == second.text);
    REQUIRE(first.images.size() == second.images.size());
    for (std::size_t i = 0; i < first.images.size(); ++i)
        CHECK(*first.images[i] == *second.images[i]);
    CHECK(images.get(ImageRole::Source) == a);
    CHECK(images.get(ImageRole::Edited) == b);
}

TEST_CASE("role names")
{
    CHECK(parse_role("Original Image") == ImageRole::Source);
    CHECK(role_name(ImageRole::Source) == "Source Image");
    CHECK_FALSE(parse_role("Mask Image"));
}
