#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "physr/llm.hpp"

using namespace physr;
using namespace physr::llm;

namespace {

Request sample_request(const std::string& user = "hello") {
    Request r;
    r.messages.push_back({"system", "be terse", {}});
    r.messages.push_back({"user", user, {}});
    return r;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("physr_llm_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Local chat-completions stand-in; fails the first `failures` requests with 503.
class FakeServer {
public:
    explicit FakeServer(int failures) : failures_(failures) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            if (hits_ <= failures_) {
                res.status = 503;
                return;
            }
            const auto body = nlohmann::json::parse(req.body);
            const std::string echo = body["messages"].back()["content"].get<std::string>();
            nlohmann::json out{{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo: " + echo}}}}}},
                               {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    int port() const { return port_; }
    int hits() const { return hits_; }
    std::string last_body() const { return last_body_; }
    std::string last_auth() const { return last_auth_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int failures_;
    std::atomic<int> hits_{0};
    std::string last_body_;
    std::string last_auth_;
};

} // namespace

TEST_CASE("request digest is stable and sensitive to content") {
    const auto a = request_digest(sample_request());
    CHECK(a.size() == 64);
    CHECK(a == request_digest(sample_request()));
    CHECK(a != request_digest(sample_request("hello!")));
    Request hot = sample_request();
    hot.temperature = 0.7;
    CHECK(a != request_digest(hot));
    Request img = sample_request();
    img.messages.back().images.push_back({"image/png", "AAAA"});
    CHECK(a != request_digest(img));
}

TEST_CASE("image messages become content parts") {
    Request r = sample_request();
    r.messages.back().images.push_back({"image/png", "QUJD"});
    const auto j = messages_json(r);
    CHECK(j[0]["content"] == "be terse");
    REQUIRE(j[1]["content"].is_array());
    CHECK(j[1]["content"][0]["text"] == "hello");
    CHECK(j[1]["content"][1]["image_url"]["url"] == "data:image/png;base64,QUJD");
}

TEST_CASE("load_image base64-encodes the file") {
    const auto dir = temp_dir("img");
    std::ofstream(dir / "p.png", std::ios::binary) << "ABC";
    const auto img = load_image(dir / "p.png");
    CHECK(img.base64 == "QUJD");
    CHECK(img.media_type == "image/png");
    CHECK_THROWS_AS(load_image(dir / "missing.png"), DataError);
}

TEST_CASE("last_json_object") {
    std::string err;
    SUBCASE("takes the last object after prose") {
        const auto j = last_json_object("I think {\"a\": 1} first.\n```json\n{\"b\": {\"c\": \"}\"}}\n```\n", &err);
        REQUIRE(j);
        CHECK((*j)["b"]["c"] == "}");
    }
    SUBCASE("skips code braces") {
        const auto j = last_json_object("{\"tool_call\": {\"tool_name\": \"x\"}}\nprint(f\"{v}\")", &err);
        REQUIRE(j);
        CHECK(j->contains("tool_call"));
    }
    SUBCASE("no object") {
        CHECK_FALSE(last_json_object("nothing here", &err));
        CHECK(err.find("no JSON") != std::string::npos);
    }
    SUBCASE("comments are rejected") {
        CHECK_FALSE(last_json_object("{\"a\": 1 // note\n}", &err));
        CHECK(err.find("not valid JSON") != std::string::npos);
    }
}

TEST_CASE("transcript round trip and replay") {
    ScriptedClient scripted(std::vector<std::string>{"one", "two"});
    RecordingClient rec(scripted);
    CHECK(rec.complete(sample_request("a")).text == "one");
    CHECK(rec.complete(sample_request("b")).text == "two");
    CHECK_THROWS_AS(rec.complete(sample_request("c")), TransportError);

    const auto dir = temp_dir("transcript");
    save_transcript(rec.transcript(), dir / "t.json");
    const auto loaded = load_transcript(dir / "t.json");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].seq == 1);
    CHECK(loaded[1].request_digest == request_digest(sample_request("b")));
    CHECK_FALSE(loaded[0].usage);

    SUBCASE("strict replay reproduces responses") {
        ReplayClient replay(loaded);
        CHECK(replay.complete(sample_request("a")).text == "one");
        CHECK(replay.complete(sample_request("b")).text == "two");
        CHECK_THROWS_AS(replay.complete(sample_request("c")), ReplayMismatchError);
    }
    SUBCASE("strict replay rejects a different request") {
        ReplayClient replay(loaded);
        CHECK_THROWS_AS(replay.complete(sample_request("z")), ReplayMismatchError);
    }
    SUBCASE("loose replay ignores digests") {
        ReplayClient replay(loaded, true);
        CHECK(replay.complete(sample_request("z")).text == "one");
        CHECK(replay.remaining() == 1);
    }
}

TEST_CASE("transcript validation") {
    CHECK_THROWS_AS(transcript_from_json(nlohmann::json::object()), DataError);
    CHECK_THROWS_AS(transcript_from_json(nlohmann::json::parse(R"([{"seq": 1, "request_digest": "x", "response_text": ""}])")),
                    DataError);
    const auto t = transcript_from_json(nlohmann::json::parse(
        R"([{"seq": 0, "request_digest": "x", "response_text": "r", "usage": {"prompt_tokens": 3, "completion_tokens": 4}}])"));
    REQUIRE(t[0].usage);
    CHECK(t[0].usage->total() == 7);
    CHECK(transcript_to_json(t) == nlohmann::json::parse(
        R"([{"seq": 0, "request_digest": "x", "response_text": "r", "usage": {"prompt_tokens": 3, "completion_tokens": 4}}])"));
}

TEST_CASE("http client speaks chat completions and retries server errors") {
    FakeServer server(2);
    HttpConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(server.port()) + "/v1/";
    cfg.model = "test-model";
    cfg.api_key = "k123";
    cfg.backoff_ms = 1;
    HttpClient client(cfg);
    const auto r = client.complete(sample_request("ping"));
    CHECK(r.text == "echo: ping");
    REQUIRE(r.usage);
    CHECK(r.usage->prompt_tokens == 11);
    CHECK(server.hits() == 3);
    CHECK(server.last_auth() == "Bearer k123");
    const auto body = nlohmann::json::parse(server.last_body());
    CHECK(body["model"] == "test-model");
    CHECK(body["messages"].size() == 2);
}

TEST_CASE("http client gives up after the retry budget") {
    FakeServer server(100);
    HttpConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(server.port()) + "/v1";
    cfg.max_retries = 2;
    cfg.backoff_ms = 1;
    HttpClient client(cfg);
    CHECK_THROWS_AS(client.complete(sample_request()), TransportError);
    CHECK(server.hits() == 3);
    CHECK_THROWS_AS(HttpClient(HttpConfig{"no-scheme", "m", "", "", 1, 0, 1}), ArgumentError);
}
