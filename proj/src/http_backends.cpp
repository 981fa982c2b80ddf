// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/backends.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <thread>

namespace tinyedit
{

namespace
{

struct SplitUrl
{
    std::string origin; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url)
{
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument(fmt::format("backend url needs a scheme: '{}'", url));
    auto const path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return { url, "/" };
    return { url.substr(0, path_start), url.substr(path_start) };
}

/// Shared POST-JSON client with retry, rate limit and timeout handling.
class JsonClient
{
  public:
    explicit JsonClient(HttpEndpoint endpoint)
        : _endpoint(std::move(endpoint)), _url(split_url(_endpoint.url)), _bucket(_endpoint.rate_per_second)
    {
    }

    nlohmann::json post(const nlohmann::json& body)
    {
        auto const payload = body.dump();
        BackendError last(BackendError::Kind::Unreachable, "no attempt made");
        for (int attempt = 0; attempt <= _endpoint.retries; ++attempt)
        {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(100 * (1 << std::min(attempt, 5))));
            _bucket.acquire();
            try
            {
                return post_once(payload);
            }
            catch (const BackendError& e)
            {
                last = e;
                auto const retryable = e.kind() == BackendError::Kind::Unreachable
                                       || e.kind() == BackendError::Kind::Timeout
                                       || (e.kind() == BackendError::Kind::Http && (e.status() >= 500 || e.status() == 429));
                spdlog::debug("backend {} attempt {} failed: {}", _url.origin, attempt + 1, e.what());
                if (!retryable)
                    throw;
            }
        }
        throw last;
    }

  private:
    nlohmann::json post_once(const std::string& payload)
    {
        httplib::Client client(_url.origin);
        auto const seconds = std::chrono::duration_cast<std::chrono::seconds>(_endpoint.timeout);
        auto const micros = std::chrono::duration_cast<std::chrono::microseconds>(_endpoint.timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());
        httplib::Headers headers;
        if (!_endpoint.bearer_token.empty())
            headers.emplace("Authorization", "Bearer " + _endpoint.bearer_token);

        auto result = client.Post(_url.path, headers, payload, "application/json");
        if (!result)
        {
            auto const err = result.error();
            auto const kind = (err == httplib::Error::Read || err == httplib::Error::Write
                               || err == httplib::Error::ConnectionTimeout)
                                  ? BackendError::Kind::Timeout
                                  : BackendError::Kind::Unreachable;
            throw BackendError(kind, fmt::format("{}: {}", _url.origin, httplib::to_string(err)));
        }
        if (result->status < 200 || result->status >= 300)
            throw BackendError(BackendError::Kind::Http,
                               fmt::format("{}{} returned HTTP {}", _url.origin, _url.path, result->status),
                               result->status);
        auto parsed = nlohmann::json::parse(result->body, nullptr, false);
        if (parsed.is_discarded())
            throw BackendError(BackendError::Kind::BadResponse, "backend reply is not JSON");
        return parsed;
    }

    HttpEndpoint _endpoint;
    SplitUrl _url;
    TokenBucket _bucket;
};

std::string png_base64(const Image& image)
{
    return base64_encode(encode_png(image));
}

Image image_from_reply(const nlohmann::json& reply)
{
    if (!reply.contains("image") || !reply["image"].is_string())
        throw BackendError(BackendError::Kind::BadResponse, "backend reply lacks an 'image' string");
    try
    {
        return decode_image(base64_decode(reply["image"].get<std::string>()));
    }
    catch (const std::exception& e)
    {
        throw BackendError(BackendError::Kind::BadResponse, fmt::format("backend image undecodable: {}", e.what()));
    }
}

} // namespace

struct HttpChatBackend::Impl
{
    explicit Impl(HttpEndpoint e): endpoint(e), client(std::move(e)) {}

    HttpEndpoint endpoint;
    JsonClient client;
};

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint): _impl(std::make_unique<Impl>(std::move(endpoint))) {}

HttpChatBackend::~HttpChatBackend() = default;

std::string HttpChatBackend::complete(std::span<const ChatMessage> messages)
{
    auto wire = nlohmann::json::array();
    for (const auto& m: messages)
    {
        auto content = nlohmann::json::array();
        for (const auto& part: m.parts)
        {
            if (part.is_image())
                content.push_back({ { "type", "image_url" },
                                    { "image_url", { { "url", "data:image/png;base64," + png_base64(*part.image) } } } });
            else
                content.push_back({ { "type", "text" }, { "text", part.text } });
        }
        wire.push_back({ { "role", m.role }, { "content", std::move(content) } });
    }
    nlohmann::json body { { "messages", std::move(wire) }, { "temperature", _impl->endpoint.temperature } };
    if (!_impl->endpoint.model.empty())
        body["model"] = _impl->endpoint.model;

    auto const reply = _impl->client.post(body);
    try
    {
        auto const& content = reply.at("choices").at(0).at("message").at("content");
        if (content.is_string())
            return content.get<std::string>();
        std::string text;
        for (const auto& part: content)
            if (part.value("type", "") == "text")
                text += part.value("text", "");
        return text;
    }
    catch (const nlohmann::json::exception&)
    {
        throw BackendError(BackendError::Kind::BadResponse, "chat reply lacks choices[0].message.content");
    }
}

struct HttpDetectorBackend::Impl
{
    explicit Impl(HttpEndpoint e): client(std::move(e)) {}

    JsonClient client;
};

HttpDetectorBackend::HttpDetectorBackend(HttpEndpoint endpoint): _impl(std::make_unique<Impl>(std::move(endpoint))) {}

HttpDetectorBackend::~HttpDetectorBackend() = default;

std::vector<Detection> HttpDetectorBackend::detect(const Image& image, std::string_view query)
{
    auto const reply = _impl->client.post({ { "image", png_base64(image) }, { "query", query } });
    if (!reply.contains("boxes") || !reply["boxes"].is_array())
        throw BackendError(BackendError::Kind::BadResponse, "detector reply lacks 'boxes'");
    auto const& boxes = reply["boxes"];
    auto const scores = reply.value("scores", nlohmann::json::array());
    if (scores.size() != boxes.size())
        throw BackendError(BackendError::Kind::BadResponse, "detector reply has mismatched boxes/scores");
    std::vector<Detection> out;
    for (std::size_t i = 0; i < boxes.size(); ++i)
    {
        auto const& b = boxes[i];
        if (!b.is_array() || b.size() != 4 || !scores[i].is_number())
            throw BackendError(BackendError::Kind::BadResponse, "detector box is not [x1,y1,x2,y2]");
        BBox box { static_cast<int>(std::floor(b[0].get<double>())), static_cast<int>(std::floor(b[1].get<double>())),
                   static_cast<int>(std::ceil(b[2].get<double>())), static_cast<int>(std::ceil(b[3].get<double>())) };
        out.push_back({ box, scores[i].get<double>() });
    }
    return out;
}

struct HttpEnhancerBackend::Impl
{
    explicit Impl(HttpEndpoint e): client(std::move(e)) {}

    JsonClient client;
};

HttpEnhancerBackend::HttpEnhancerBackend(HttpEndpoint endpoint): _impl(std::make_unique<Impl>(std::move(endpoint))) {}

HttpEnhancerBackend::~HttpEnhancerBackend() = default;

Image HttpEnhancerBackend::enhance(const Image& image, int scale)
{
    return image_from_reply(_impl->client.post({ { "image", png_base64(image) }, { "scale", scale } }));
}

struct HttpEditorBackend::Impl
{
    explicit Impl(HttpEndpoint e): client(std::move(e)) {}

    JsonClient client;
};

HttpEditorBackend::HttpEditorBackend(HttpEndpoint endpoint): _impl(std::make_unique<Impl>(std::move(endpoint))) {}

HttpEditorBackend::~HttpEditorBackend() = default;

Image HttpEditorBackend::edit(const Image& image, std::string_view instruction)
{
    return image_from_reply(_impl->client.post({ { "image", png_base64(image) }, { "instruction", instruction } }));
}

} // namespace tinyedit
