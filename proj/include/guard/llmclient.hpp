#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#ifdef GUARD_HAS_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "guard/common.hpp"

// Transport-agnostic chat-completion client. Live and record modes POST to an
// OpenAI-compatible endpoint; replay mode answers from a fixture file and
// never touches the network, so the whole pipeline is runnable in CI.

namespace guard {

struct ChatRequest {
    std::string model_name;
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_tokens = 512;

    // Stable hash of all other fields over a fixed serialization; identical
    // requests share one key across processes and platforms.
    std::string request_key() const {
        nlohmann::json j = nlohmann::json::array(
            {"chat-v1", model_name, system, user, temperature, max_tokens});
        return fnv1a64_hex(j.dump());
    }
};

enum class FixtureMode { record, replay, live };

inline std::string_view fixture_mode_name(FixtureMode m) {
    switch (m) {
        case FixtureMode::record: return "record";
        case FixtureMode::replay: return "replay";
        case FixtureMode::live: return "live";
    }
    return "replay";
}

inline std::optional<FixtureMode> parse_fixture_mode(std::string_view s) {
    if (s == "record") return FixtureMode::record;
    if (s == "replay") return FixtureMode::replay;
    if (s == "live") return FixtureMode::live;
    return std::nullopt;
}

// request_key -> recorded response text, persisted as a single JSON object.
class FixtureStore {
public:
    FixtureStore() = default;

    FixtureStore(FixtureStore&& other) noexcept {
        std::lock_guard lock(other.mutex_);
        responses_ = std::move(other.responses_);
        path_ = std::move(other.path_);
    }

    FixtureStore& operator=(FixtureStore&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mutex_, other.mutex_);
            responses_ = std::move(other.responses_);
            path_ = std::move(other.path_);
        }
        return *this;
    }

    static FixtureStore load(const std::filesystem::path& path) {
        FixtureStore store;
        store.path_ = path;
        if (std::filesystem::exists(path)) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_text_file(path));
            } catch (const nlohmann::json::exception& e) {
                throw Error("malformed fixture file " + path.string() + ": " + e.what());
            }
            if (!j.is_object()) throw Error("fixture file must hold a JSON object");
            for (auto& [k, v] : j.items()) {
                if (!v.is_string()) throw Error("fixture value for " + k + " is not a string");
                store.responses_[k] = v.get<std::string>();
            }
        }
        return store;
    }

    void save(const std::filesystem::path& path) const {
        std::lock_guard lock(mutex_);
        nlohmann::json j = nlohmann::json::object();
        for (auto& [k, v] : responses_) j[k] = v;
        write_text_file(path, j.dump(2) + "\n");
    }

    std::optional<std::string> lookup(const std::string& key) const {
        std::lock_guard lock(mutex_);
        auto it = responses_.find(key);
        if (it == responses_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& key, std::string response) {
        std::lock_guard lock(mutex_);
        responses_[key] = std::move(response);
    }

    void persist() const {
        if (!path_.empty()) save(path_);
    }

    size_t size() const {
        std::lock_guard lock(mutex_);
        return responses_.size();
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::string> responses_;
    std::filesystem::path path_;
};

struct EndpointConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "GUARD_API_KEY";
    int max_retries = 3;
    int backoff_ms = 250;
    int timeout_s = 60;
    int max_concurrent = 4;
};

class ChatClient {
public:
    ChatClient(FixtureMode mode, FixtureStore* fixtures, EndpointConfig endpoint = {})
        : mode_(mode), fixtures_(fixtures), endpoint_(std::move(endpoint)) {
        if (mode_ != FixtureMode::live && fixtures_ == nullptr)
            throw Error("record/replay mode requires a fixture store");
    }

    FixtureMode mode() const { return mode_; }

    std::string chat(const ChatRequest& req) {
        const std::string key = req.request_key();
        if (mode_ == FixtureMode::replay) {
            auto hit = fixtures_->lookup(key);
            if (!hit) throw Error("replay miss for request_key " + key);
            return *hit;
        }
        std::string response = post_with_retries(req);
        if (mode_ == FixtureMode::record) {
            fixtures_->put(key, response);
            fixtures_->persist();
        }
        return response;
    }

private:
    std::string post_with_retries(const ChatRequest& req) {
        std::string last_error;
        for (int attempt = 0; attempt < endpoint_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(endpoint_.backoff_ms << (attempt - 1));
                std::this_thread::sleep_for(delay);
            }
            try {
                return post_once(req);
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        throw Error("chat request failed after " + std::to_string(endpoint_.max_retries) +
                    " attempts: " + last_error);
    }

    std::string post_once(const ChatRequest& req) {
        auto [host, prefix] = split_base_url(endpoint_.base_url);
        httplib::Client cli(host);
        cli.set_connection_timeout(endpoint_.timeout_s, 0);
        cli.set_read_timeout(endpoint_.timeout_s, 0);
        httplib::Headers headers;
        if (const char* secret = std::getenv(endpoint_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + secret);

        nlohmann::json body{{"model", req.model_name},
                            {"messages", nlohmann::json::array()},
                            {"temperature", req.temperature},
                            {"max_tokens", req.max_tokens}};
        if (!req.system.empty())
            body["messages"].push_back({{"role", "system"}, {"content", req.system}});
        body["messages"].push_back({{"role", "user"}, {"content", req.user}});

        ConcurrencyGate gate(*this);
        auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(),
                            "application/json");
        if (!res) throw Error("transport failure: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("malformed completion body: ") + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
            throw Error("completion body has no choices");
        const auto& msg = j["choices"][0];
        if (!msg.contains("message") || !msg["message"].contains("content") ||
            !msg["message"]["content"].is_string())
            throw Error("completion body has no message content");
        return msg["message"]["content"].get<std::string>();
    }

    // "scheme://host[:port]" plus an optional path prefix ("/v1").
    static std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
        size_t scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos) throw Error("base_url must include a scheme");
        size_t path_start = base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {base_url, ""};
        std::string prefix = base_url.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        return {base_url.substr(0, path_start), prefix};
    }

    // Bounds simultaneous live requests from this client.
    class ConcurrencyGate {
    public:
        explicit ConcurrencyGate(ChatClient& c) : client_(c) {
            std::unique_lock lock(client_.gate_mutex_);
            client_.gate_cv_.wait(
                lock, [&] { return client_.in_flight_ < client_.endpoint_.max_concurrent; });
            ++client_.in_flight_;
        }
        ~ConcurrencyGate() {
            {
                std::lock_guard lock(client_.gate_mutex_);
                --client_.in_flight_;
            }
            client_.gate_cv_.notify_one();
        }

    private:
        ChatClient& client_;
    };

    FixtureMode mode_;
    FixtureStore* fixtures_;
    EndpointConfig endpoint_;
    std::mutex gate_mutex_;
    std::condition_variable gate_cv_;
    int in_flight_ = 0;
};

}  // namespace guard
