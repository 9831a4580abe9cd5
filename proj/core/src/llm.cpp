#include "physr/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>
#include <openssl/sha.h>

namespace physr::llm {

nlohmann::json messages_json(const Request& request) {
    auto out = nlohmann::json::array();
    for (const auto& m : request.messages) {
        if (m.images.empty()) {
            out.push_back({{"role", m.role}, {"content", m.content}});
            continue;
        }
        auto parts = nlohmann::json::array();
        parts.push_back({{"type", "text"}, {"text", m.content}});
        for (const auto& img : m.images) {
            parts.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64}}}});
        }
        out.push_back({{"role", m.role}, {"content", parts}});
    }
    return out;
}

namespace {

// End of the brace span opened at `open` (index of the closing brace), skipping
// braces inside double-quoted strings.
std::optional<std::size_t> matching_brace(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i;
    }
    return std::nullopt;
}

bool looks_like_object(std::string_view span) {
    for (std::size_t i = 1; i < span.size(); ++i) {
        const char c = span[i];
        if (c == ' ' || c == '\n' || c == '\r' || c == '\t') continue;
        return c == '"' || c == '}';
    }
    return false;
}

} // namespace

std::optional<nlohmann::ordered_json> last_json_object(std::string_view text, std::string* error) {
    std::vector<std::string_view> spans;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        const auto close = matching_brace(text, i);
        if (!close) continue;
        const std::string_view span = text.substr(i, *close - i + 1);
        if (looks_like_object(span)) {
            spans.push_back(span);
            i = *close;
        }
    }
    if (spans.empty()) {
        if (error) *error = "no JSON object found in the response";
        return std::nullopt;
    }
    try {
        return nlohmann::ordered_json::parse(spans.back());
    } catch (const nlohmann::json::parse_error& e) {
        if (error) *error = fmt::format("the last JSON object is not valid JSON: {}", e.what());
        return std::nullopt;
    }
}

std::string request_digest(const Request& request) {
    // nlohmann::json objects keep keys sorted, so dump() is canonical.
    const nlohmann::json body{
        {"messages", messages_json(request)}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
    const std::string text = body.dump();
    unsigned char hash[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), hash);
    std::string hex;
    hex.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char c : hash) hex += fmt::format("{:02x}", c);
    return hex;
}

Image load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot read image '{}'", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();

    std::string encoded(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(encoded.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    encoded.resize(static_cast<std::size_t>(n));

    std::string ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    Image img;
    img.base64 = std::move(encoded);
    if (ext == ".jpg" || ext == ".jpeg") img.media_type = "image/jpeg";
    else if (ext == ".gif") img.media_type = "image/gif";
    else if (ext == ".webp") img.media_type = "image/webp";
    else img.media_type = "image/png";
    return img;
}

namespace {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // path prefix, no trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ArgumentError(fmt::format("endpoint '{}' lacks a scheme", url));
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    e.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
    return e;
}

std::optional<Usage> usage_from(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("usage") || !j["usage"].is_object()) return std::nullopt;
    const auto& u = j["usage"];
    Usage usage;
    usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
    usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
    return usage;
}

} // namespace

HttpClient::HttpClient(HttpConfig config) : config_(std::move(config)) {
    if (config_.api_key.empty() && !config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) config_.api_key = key;
    }
    split_url(config_.base_url);
}

Response HttpClient::complete(const Request& request) {
    const Endpoint ep = split_url(config_.base_url);
    const nlohmann::json body{{"model", config_.model},
                              {"messages", messages_json(request)},
                              {"temperature", request.temperature},
                              {"max_tokens", request.max_tokens}};
    const std::string payload = body.dump();

    httplib::Client cli(ep.origin);
    cli.set_connection_timeout(config_.timeout_seconds, 0);
    cli.set_read_timeout(config_.timeout_seconds, 0);
    cli.set_write_timeout(config_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    int delay = config_.backoff_ms;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
        auto res = cli.Post(ep.path + "/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        if (res->status != 200)
            throw TransportError(fmt::format("endpoint returned HTTP {}: {}", res->status, res->body.substr(0, 500)));
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
            Response out;
            out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            out.usage = usage_from(j);
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(fmt::format("malformed completion response: {}", e.what()));
        }
    }
    throw TransportError(fmt::format("request failed after {} attempts: {}", config_.max_retries + 1, last_error));
}

nlohmann::json transcript_to_json(const Transcript& t) {
    auto out = nlohmann::json::array();
    for (const auto& e : t) {
        nlohmann::json j{{"seq", e.seq}, {"request_digest", e.request_digest}, {"response_text", e.response_text}};
        if (e.usage)
            j["usage"] = {{"prompt_tokens", e.usage->prompt_tokens}, {"completion_tokens", e.usage->completion_tokens}};
        out.push_back(std::move(j));
    }
    return out;
}

Transcript transcript_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw DataError("transcript must be a JSON array");
    Transcript t;
    try {
        for (const auto& e : j) {
            TranscriptEntry entry;
            entry.seq = e.at("seq").get<int>();
            entry.request_digest = e.at("request_digest").get<std::string>();
            entry.response_text = e.at("response_text").get<std::string>();
            entry.usage = usage_from(e);
            t.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(fmt::format("malformed transcript entry: {}", ex.what()));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].seq != static_cast<int>(i))
            throw DataError(fmt::format("transcript entry {} has seq {}", i, t[i].seq));
    }
    return t;
}

Transcript load_transcript(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot read transcript '{}'", path.string()));
    try {
        return transcript_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(fmt::format("transcript '{}' is not valid JSON: {}", path.string(), e.what()));
    }
}

void save_transcript(const Transcript& t, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError(fmt::format("cannot write transcript '{}'", path.string()));
    out << transcript_to_json(t).dump(2) << '\n';
}

ReplayClient::ReplayClient(Transcript transcript, bool loose) : transcript_(std::move(transcript)), loose_(loose) {}

Response ReplayClient::complete(const Request& request) {
    if (next_ >= transcript_.size())
        throw ReplayMismatchError(fmt::format("transcript exhausted after {} responses", transcript_.size()));
    const auto& entry = transcript_[next_];
    if (!loose_) {
        const std::string digest = request_digest(request);
        if (digest != entry.request_digest)
            throw ReplayMismatchError(fmt::format("request {} digest {} does not match recorded {}", next_, digest,
                                                  entry.request_digest));
    }
    ++next_;
    return Response{entry.response_text, entry.usage};
}

ScriptedClient::ScriptedClient(Script script) : script_(std::move(script)) {}

ScriptedClient::ScriptedClient(std::vector<std::string> responses)
    : script_([responses = std::move(responses)](const Request&, int call) -> Response {
          if (call >= static_cast<int>(responses.size()))
              throw TransportError(fmt::format("scripted client has no response #{}", call));
          return Response{responses[static_cast<std::size_t>(call)], std::nullopt};
      }) {}

Response ScriptedClient::complete(const Request& request) {
    return script_(request, calls_++);
}

Response RecordingClient::complete(const Request& request) {
    Response r = inner_.complete(request);
    transcript_.push_back(
        TranscriptEntry{static_cast<int>(transcript_.size()), request_digest(request), r.text, r.usage});
    return r;
}

} // namespace physr::llm
