// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tinyedit/image.hpp"
#include "tinyedit/sample.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tinyedit
{

class BackendError: public std::runtime_error
{
  public:
    enum class Kind
    {
        Unreachable,
        Timeout,
        BadResponse,
        Http,
    };

    BackendError(Kind kind, const std::string& message, int status = 0)
        : std::runtime_error(message), _kind(kind), _status(status)
    {
    }

    [[nodiscard]] Kind kind() const { return _kind; }
    [[nodiscard]] int status() const { return _status; }

  private:
    Kind _kind;
    int _status;
};

/// One piece of a chat message: text, or an image when `image` is set.
struct ContentPart
{
    std::string text;
    std::shared_ptr<const Image> image;

    [[nodiscard]] bool is_image() const { return image != nullptr; }
};

struct ChatMessage
{
    std::string role; // "system", "user" or "assistant"
    std::vector<ContentPart> parts;

    static ChatMessage text(std::string role, std::string content);
    void add_text(std::string content);
    void add_image(std::shared_ptr<const Image> image);

    /// Concatenated text parts.
    [[nodiscard]] std::string text_content() const;
    [[nodiscard]] std::size_t image_count() const;
};

class ChatBackend
{
  public:
    virtual ~ChatBackend() = default;
    /// Returns the assistant reply for the full message history.
    virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

struct Detection
{
    BBox box;
    double score = 0.0;
};

class DetectorBackend
{
  public:
    virtual ~DetectorBackend() = default;
    virtual std::vector<Detection> detect(const Image& image, std::string_view query) = 0;
};

class EnhancerBackend
{
  public:
    virtual ~EnhancerBackend() = default;
    virtual Image enhance(const Image& image, int scale) = 0;
};

class EditorBackend
{
  public:
    virtual ~EditorBackend() = default;
    virtual Image edit(const Image& image, std::string_view instruction) = 0;
};

struct HttpEndpoint
{
    std::string url;
    std::chrono::milliseconds timeout { 30'000 };
    int retries = 2;
    double rate_per_second = 0.0; // 0 = unlimited
    std::string bearer_token;     // read from the environment, never persisted
    std::string model;            // chat backends only
    double temperature = 0.0;
};

/// Blocking token bucket; thread safe.
class TokenBucket
{
  public:
    TokenBucket(double rate_per_second, double burst = 1.0);
    void acquire();

  private:
    std::mutex _mutex;
    double _rate;
    double _burst;
    double _tokens;
    std::chrono::steady_clock::time_point _last;
};

class HttpChatBackend: public ChatBackend
{
  public:
    explicit HttpChatBackend(HttpEndpoint endpoint);
    ~HttpChatBackend() override;
    std::string complete(std::span<const ChatMessage> messages) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

class HttpDetectorBackend: public DetectorBackend
{
  public:
    explicit HttpDetectorBackend(HttpEndpoint endpoint);
    ~HttpDetectorBackend() override;
    std::vector<Detection> detect(const Image& image, std::string_view query) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

class HttpEnhancerBackend: public EnhancerBackend
{
  public:
    explicit HttpEnhancerBackend(HttpEndpoint endpoint);
    ~HttpEnhancerBackend() override;
    Image enhance(const Image& image, int scale) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

class HttpEditorBackend: public EditorBackend
{
  public:
    explicit HttpEditorBackend(HttpEndpoint endpoint);
    ~HttpEditorBackend() override;
    Image edit(const Image& image, std::string_view instruction) override;

  private:
    struct Impl;
    std::unique_ptr<Impl> _impl;
};

/// Replays canned replies. A script is chosen by the first marker found in the
/// conversation's opening messages; the reply index is the number of assistant
/// messages already in the history (the last reply repeats past the end).
class ScriptedChatBackend: public ChatBackend
{
  public:
    struct Script
    {
        std::string marker; // empty matches anything
        std::vector<std::string> replies;
    };

    explicit ScriptedChatBackend(std::vector<Script> scripts);

    /// Accepts {"if": [...], "vc": [...], "default": [...]} or
    /// {"scripts": [{"match": "...", "replies": [...]}]}.
    static std::unique_ptr<ScriptedChatBackend> from_json(const nlohmann::json& json);
    static std::unique_ptr<ScriptedChatBackend> from_file(const std::filesystem::path& path);

    std::string complete(std::span<const ChatMessage> messages) override;
    [[nodiscard]] std::size_t calls() const { return _calls.load(); }

  private:
    std::vector<Script> _scripts;
    std::atomic<std::size_t> _calls { 0 };
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

} // namespace tinyedit
