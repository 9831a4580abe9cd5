#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "physr/error.hpp"

namespace physr::llm {

/// The endpoint could not be reached or kept failing after retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// A replayed request does not match the recorded one.
class ReplayMismatchError : public Error {
public:
    using Error::Error;
};

struct Image {
    std::string media_type = "image/png";
    /// Base64 payload without the data-URL prefix.
    std::string base64;
};

struct Message {
    std::string role; // "system", "user" or "assistant"
    std::string content;
    std::vector<Image> images;
};

struct Request {
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 4096;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t total() const noexcept { return prompt_tokens + completion_tokens; }
};

struct Response {
    std::string text;
    std::optional<Usage> usage;
};

class Client {
public:
    virtual ~Client() = default;
    virtual Response complete(const Request& request) = 0;
};

/// Chat-completions message array (images become image_url content parts).
nlohmann::json messages_json(const Request& request);

/// The last JSON object embedded in free text (prose, code fences). Brace
/// spans that do not start like a JSON object (`{x}` in code) are skipped; a
/// span that does but fails to parse, e.g. because of comments, is an error.
/// Returns nullopt and sets `error` when nothing usable is found.
std::optional<nlohmann::ordered_json> last_json_object(std::string_view text, std::string* error = nullptr);

/// Hex SHA-256 of the canonical JSON of messages, temperature and max_tokens.
std::string request_digest(const Request& request);

/// Read a file and base64-encode it; the media type follows the extension.
Image load_image(const std::filesystem::path& path);

struct HttpConfig {
    /// Base URL up to and including the API version, e.g. "https://api.openai.com/v1".
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    /// Used when `api_key` is empty.
    std::string api_key_env = "OPENAI_API_KEY";
    std::string api_key;
    int timeout_seconds = 120;
    int max_retries = 3;
    int backoff_ms = 1000;
};

/// POSTs to <base_url>/chat/completions. Retries connection failures, 429
/// and 5xx responses with doubling backoff; other statuses fail at once.
class HttpClient : public Client {
public:
    explicit HttpClient(HttpConfig config);
    Response complete(const Request& request) override;
    const HttpConfig& config() const noexcept { return config_; }

private:
    HttpConfig config_;
};

struct TranscriptEntry {
    int seq = 0;
    std::string request_digest;
    std::string response_text;
    std::optional<Usage> usage;
};

using Transcript = std::vector<TranscriptEntry>;

nlohmann::json transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);
Transcript load_transcript(const std::filesystem::path& path);
void save_transcript(const Transcript& t, const std::filesystem::path& path);

/// Serves recorded responses in sequence order. Strict mode checks each
/// request digest; loose mode only checks that entries remain.
class ReplayClient : public Client {
public:
    explicit ReplayClient(Transcript transcript, bool loose = false);
    Response complete(const Request& request) override;
    std::size_t consumed() const noexcept { return next_; }
    std::size_t remaining() const noexcept { return transcript_.size() - next_; }

private:
    Transcript transcript_;
    bool loose_;
    std::size_t next_ = 0;
};

/// Answers from a callback (or a fixed list); for tests and offline runs.
class ScriptedClient : public Client {
public:
    using Script = std::function<Response(const Request&, int call)>;
    explicit ScriptedClient(Script script);
    explicit ScriptedClient(std::vector<std::string> responses);
    Response complete(const Request& request) override;
    int calls() const noexcept { return calls_; }

private:
    Script script_;
    int calls_ = 0;
};

/// Forwards to another client and records every exchange.
class RecordingClient : public Client {
public:
    explicit RecordingClient(Client& inner) : inner_(inner) {}
    Response complete(const Request& request) override;
    const Transcript& transcript() const noexcept { return transcript_; }

private:
    Client& inner_;
    Transcript transcript_;
};

} // namespace physr::llm
