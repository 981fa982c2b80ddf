// SPDX-License-Identifier: Apache-2.0
#include "tinyedit/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace tinyedit
{

namespace pt = boost::property_tree;

namespace
{

std::string unquote(std::string v)
{
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
        return v.substr(1, v.size() - 2);
    return v;
}

bool looks_secret(std::string_view key)
{
    for (std::string_view word: { "key", "token", "secret", "password" })
        if (key.find(word) != std::string_view::npos)
            return true;
    return false;
}

template <typename T>
T number(const pt::ptree& section, const std::string& where, const std::string& key, T fallback)
{
    auto const raw = section.get_optional<std::string>(key);
    if (!raw)
        return fallback;
    std::istringstream in(unquote(*raw));
    T value {};
    in >> value;
    if (in.fail() || !(in >> std::ws).eof())
        throw ConfigError(fmt::format("[{}] {}: '{}' is not a valid number", where, key, *raw));
    return value;
}

void check_keys(const pt::ptree& section, const std::string& name, const std::set<std::string>& allowed)
{
    for (const auto& [key, child]: section)
    {
        if (looks_secret(key))
            throw ConfigError(fmt::format("[{}] {}: secrets are not read from the config file; set {} or {}", name,
                                          key, kJudgeKeyEnv, kEditorKeyEnv));
        if (!allowed.contains(key))
            throw ConfigError(fmt::format("[{}] unknown key '{}'", name, key));
    }
}

HttpEndpoint endpoint(const pt::ptree& s, const std::string& name, double default_rate)
{
    HttpEndpoint e;
    e.url = unquote(s.get<std::string>("url", ""));
    e.model = unquote(s.get<std::string>("model", ""));
    e.temperature = number(s, name, "temperature", 0.0);
    e.timeout = std::chrono::milliseconds(number(s, name, "timeout_ms", 30'000));
    e.retries = number(s, name, "retries", 2);
    e.rate_per_second = number(s, name, "rate", default_rate);
    if (e.retries < 0 || e.timeout.count() <= 0 || e.rate_per_second < 0.0)
        throw ConfigError(fmt::format("[{}] timeout_ms must be positive, retries and rate non-negative", name));
    return e;
}

} // namespace

void HarnessConfig::validate() const
{
    if (workers < 1 || workers > 256)
        throw ConfigError(fmt::format("workers must be in [1, 256], got {}", workers));
    if (turn_limit < 1)
        throw ConfigError(fmt::format("turn_limit must be positive, got {}", turn_limit));
    if (tools.detection_floor < 0.0 || tools.detection_floor >= 1.0)
        throw ConfigError("detection score floor must be in [0, 1)");
    if (tools.enhancement.trigger_min_dim < 1 || tools.enhancement.target_min_dim < 1
        || tools.enhancement.backend_scale < 1)
        throw ConfigError("enhancement sizes must be positive");
    try
    {
        expansion.validate();
        tools.diff.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw ConfigError(e.what());
    }
}

nlohmann::ordered_json HarnessConfig::describe() const
{
    auto ep = [](const std::optional<HttpEndpoint>& e, bool chat) -> nlohmann::ordered_json {
        if (!e)
            return nullptr;
        nlohmann::ordered_json j;
        j["url"] = e->url;
        if (chat)
        {
            j["model"] = e->model;
            j["temperature"] = e->temperature;
        }
        j["timeout_ms"] = e->timeout.count();
        j["retries"] = e->retries;
        j["rate"] = e->rate_per_second;
        return j;
    };
    nlohmann::ordered_json j;
    j["judge"] = judge ? ep(judge, true)
                       : nlohmann::ordered_json { { "scripted", judge_script.filename().string() } };
    j["detector"] = ep(detector, false);
    j["enhancer"] = ep(enhancer, false);
    j["editor"] = ep(editor, false);
    j["workers"] = workers;
    j["detection_floor"] = tools.detection_floor;
    j["diff"] = { { "intensity_threshold", tools.diff.intensity_threshold },
                  { "min_region_area", tools.diff.min_region_area },
                  { "merge_distance", tools.diff.merge_distance },
                  { "max_regions", tools.diff.max_regions } };
    j["expansion"] = { { "lambda_max", expansion.lambda_max },
                       { "lambda_min", expansion.lambda_min },
                       { "s_min", expansion.s_min },
                       { "s_max", expansion.s_max } };
    return j;
}

HarnessConfig parse_config(std::istream& in)
{
    // The ini reader only knows ';' comments.
    std::ostringstream filtered;
    std::string line;
    while (std::getline(in, line))
    {
        auto const first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line[first] == '#')
            continue;
        filtered << line << '\n';
    }
    std::istringstream clean(filtered.str());
    pt::ptree tree;
    try
    {
        pt::read_ini(clean, tree);
    }
    catch (const pt::ini_parser_error& e)
    {
        throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
    }

    HarnessConfig config;
    const std::set<std::string> http_keys { "url", "timeout_ms", "retries", "rate" };
    for (const auto& [name, section]: tree)
    {
        if (section.empty() && !section.data().empty())
            throw ConfigError(fmt::format("key '{}' must be inside a section", name));
        if (name == "judge")
        {
            check_keys(section, name, { "url", "timeout_ms", "retries", "rate", "model", "temperature", "script" });
            auto e = endpoint(section, name, 2.0);
            if (!e.url.empty())
                config.judge = std::move(e);
            config.judge_script = unquote(section.get<std::string>("script", ""));
        }
        else if (name == "detector")
        {
            auto keys = http_keys;
            keys.insert("score_floor");
            check_keys(section, name, keys);
            auto e = endpoint(section, name, 0.0);
            if (!e.url.empty())
                config.detector = std::move(e);
            config.tools.detection_floor = number(section, name, "score_floor", config.tools.detection_floor);
        }
        else if (name == "enhancer" || name == "editor")
        {
            check_keys(section, name, name == "editor" ? std::set<std::string> { "url", "timeout_ms", "retries", "rate", "model" }
                                                       : http_keys);
            auto e = endpoint(section, name, 0.0);
            if (!e.url.empty())
                (name == "editor" ? config.editor : config.enhancer) = std::move(e);
        }
        else if (name == "run")
        {
            check_keys(section, name, { "workers", "turn_limit", "seed" });
            config.workers = number(section, name, "workers", config.workers);
            config.turn_limit = number(section, name, "turn_limit", config.turn_limit);
            config.seed = number(section, name, "seed", config.seed);
        }
        else if (name == "diff")
        {
            check_keys(section, name, { "intensity_threshold", "min_region_area", "merge_distance", "max_regions" });
            auto& d = config.tools.diff;
            d.intensity_threshold = number(section, name, "intensity_threshold", d.intensity_threshold);
            d.min_region_area = number(section, name, "min_region_area", d.min_region_area);
            d.merge_distance = number(section, name, "merge_distance", d.merge_distance);
            d.max_regions = number(section, name, "max_regions", d.max_regions);
        }
        else if (name == "expansion")
        {
            check_keys(section, name, { "lambda_max", "lambda_min", "s_min", "s_max" });
            auto& x = config.expansion;
            x.lambda_max = number(section, name, "lambda_max", x.lambda_max);
            x.lambda_min = number(section, name, "lambda_min", x.lambda_min);
            x.s_min = number(section, name, "s_min", x.s_min);
            x.s_max = number(section, name, "s_max", x.s_max);
        }
        else if (name == "enhancement")
        {
            check_keys(section, name, { "trigger_min_dim", "target_min_dim", "backend_scale" });
            auto& en = config.tools.enhancement;
            en.trigger_min_dim = number(section, name, "trigger_min_dim", en.trigger_min_dim);
            en.target_min_dim = number(section, name, "target_min_dim", en.target_min_dim);
            en.backend_scale = number(section, name, "backend_scale", en.backend_scale);
        }
        else
            throw ConfigError(fmt::format("unknown config section [{}]", name));
    }
    config.validate();
    return config;
}

HarnessConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot open config {}", path.string()));
    auto config = parse_config(in);
    if (!config.judge_script.empty() && config.judge_script.is_relative())
        config.judge_script = path.parent_path() / config.judge_script;
    return config;
}

void apply_environment_secrets(HarnessConfig& config)
{
    auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? std::string(v) : std::string {};
    };
    if (config.judge)
        config.judge->bearer_token = env(kJudgeKeyEnv);
    if (config.editor)
        config.editor->bearer_token = env(kEditorKeyEnv);
}

std::unique_ptr<ChatBackend> make_judge_backend(const HarnessConfig& config)
{
    if (!config.judge_script.empty())
        return ScriptedChatBackend::from_file(config.judge_script);
    if (config.judge)
        return std::make_unique<HttpChatBackend>(*config.judge);
    throw ConfigError("no judge configured: set [judge] url or script");
}

ToolSuite make_tool_suite(const HarnessConfig& config)
{
    std::shared_ptr<DetectorBackend> detector;
    std::shared_ptr<EnhancerBackend> enhancer;
    if (config.detector)
        detector = std::make_shared<HttpDetectorBackend>(*config.detector);
    if (config.enhancer)
        enhancer = std::make_shared<HttpEnhancerBackend>(*config.enhancer);
    return ToolSuite(config.tools, detector, enhancer);
}

} // namespace tinyedit
