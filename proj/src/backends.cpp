// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/backends.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <thread>

namespace tinyedit
{

ChatMessage ChatMessage::text(std::string role, std::string content)
{
    ChatMessage m;
    m.role = std::move(role);
    m.add_text(std::move(content));
    return m;
}

void ChatMessage::add_text(std::string content)
{
    parts.push_back({ std::move(content), nullptr });
}

void ChatMessage::add_image(std::shared_ptr<const Image> image)
{
    parts.push_back({ {}, std::move(image) });
}

std::string ChatMessage::text_content() const
{
    std::string out;
    for (const auto& part: parts)
        if (!part.is_image())
            out += part.text;
    return out;
}

std::size_t ChatMessage::image_count() const
{
    std::size_t n = 0;
    for (const auto& part: parts)
        n += part.is_image() ? 1 : 0;
    return n;
}

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : _rate(rate_per_second), _burst(std::max(1.0, burst)), _tokens(_burst), _last(std::chrono::steady_clock::now())
{
}

void TokenBucket::acquire()
{
    if (_rate <= 0.0)
        return;
    std::unique_lock lock(_mutex);
    for (;;)
    {
        auto const now = std::chrono::steady_clock::now();
        _tokens = std::min(_burst, _tokens + std::chrono::duration<double>(now - _last).count() * _rate);
        _last = now;
        if (_tokens >= 1.0)
        {
            _tokens -= 1.0;
            return;
        }
        auto const wait = std::chrono::duration<double>((1.0 - _tokens) / _rate);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

ScriptedChatBackend::ScriptedChatBackend(std::vector<Script> scripts): _scripts(std::move(scripts))
{
    for (const auto& s: _scripts)
        if (s.replies.empty())
            throw std::invalid_argument("scripted backend: script without replies");
}

std::unique_ptr<ScriptedChatBackend> ScriptedChatBackend::from_json(const nlohmann::json& json)
{
    std::vector<Script> scripts;
    if (json.contains("scripts"))
    {
        for (const auto& s: json.at("scripts"))
            scripts.push_back({ s.value("match", std::string {}), s.at("replies").get<std::vector<std::string>>() });
    }
    else
    {
        if (json.contains("if"))
            scripts.push_back({ "Evaluation Dimension: Instruction Following", json["if"].get<std::vector<std::string>>() });
        if (json.contains("vc"))
            scripts.push_back({ "Evaluation Dimension: Visual Consistency", json["vc"].get<std::vector<std::string>>() });
        if (json.contains("default"))
            scripts.push_back({ "", json["default"].get<std::vector<std::string>>() });
    }
    if (scripts.empty())
        throw std::invalid_argument("scripted backend: no scripts defined");
    return std::make_unique<ScriptedChatBackend>(std::move(scripts));
}

std::unique_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument(fmt::format("cannot open judge script {}", path.string()));
    return from_json(nlohmann::json::parse(in));
}

std::string ScriptedChatBackend::complete(std::span<const ChatMessage> messages)
{
    ++_calls;
    std::string opening;
    std::size_t assistant_turns = 0;
    for (const auto& m: messages)
    {
        if (m.role == "assistant")
            ++assistant_turns;
        else if (assistant_turns == 0)
            opening += m.text_content();
    }
    for (const auto& script: _scripts)
    {
        if (!script.marker.empty() && opening.find(script.marker) == std::string::npos)
            continue;
        return script.replies[std::min(assistant_turns, script.replies.size() - 1)];
    }
    throw BackendError(BackendError::Kind::BadResponse, "scripted backend: no script matches the conversation");
}

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    auto const n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                   static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text)
{
    std::string clean;
    clean.reserve(text.size());
    for (char c: text)
        if (!std::isspace(static_cast<unsigned char>(c)))
            clean.push_back(c);
    if (clean.size() % 4 != 0)
        throw std::invalid_argument("base64: length is not a multiple of 4");
    std::vector<std::uint8_t> out(clean.size() / 4 * 3);
    auto const n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                   static_cast<int>(clean.size()));
    if (n < 0)
        throw std::invalid_argument("base64: invalid input");
    // EVP_DecodeBlock keeps the zero bytes produced by padding.
    std::size_t pad = 0;
    if (!clean.empty() && clean.back() == '=')
        pad = clean.size() >= 2 && clean[clean.size() - 2] == '=' ? 2 : 1;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i)
        out += fmt::format("{:02x}", digest[i]);
    return out;
}

std::string sha256_hex(std::string_view text)
{
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::vector<std::uint8_t> bytes { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
    return sha256_hex(bytes);
}

} // namespace tinyedit
