#include "mldist/mock_server.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mldist/trace.hpp"

namespace mldist {

MockLmServer::MockLmServer(ScenarioStore store)
    : store_(std::move(store)), server_(std::make_unique<httplib::Server>()) {
    install_handlers();
}

MockLmServer::~MockLmServer() { stop(); }

void MockLmServer::install_handlers() {
    server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"status\": \"ok\"}", "application/json");
    });

    server_->Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", {{"message", e.what()}}}}.dump(),
                            "application/json");
            return;
        }
        const std::string model = body.value("model", std::string());
        const std::string prompt = body.value("prompt", std::string());
        const std::string fp = fingerprint(model, prompt);
        const Completion* script = store_.find(fp);
        if (!script) {
            res.status = 404;
            res.set_content(
                nlohmann::json{{"error",
                                {{"message", "no scripted completion for fingerprint " + fp}}}}
                    .dump(),
                "application/json");
            return;
        }

        nlohmann::json tokens = nlohmann::json::array();
        nlohmann::json token_logprobs = nlohmann::json::array();
        nlohmann::json top_logprobs = nlohmann::json::array();
        nlohmann::json text_offset = nlohmann::json::array();
        std::size_t offset = 0;
        for (const auto& t : script->tokens) {
            tokens.push_back(t.token);
            token_logprobs.push_back(t.logprob);
            top_logprobs.push_back(t.top);
            text_offset.push_back(offset);
            offset += t.token.size();
        }
        nlohmann::json out;
        out["id"] = "cmpl-" + fp;
        out["object"] = "text_completion";
        out["model"] = model;
        out["choices"] = nlohmann::json::array({nlohmann::json{
            {"index", 0},
            {"text", script->text},
            {"finish_reason", "stop"},
            {"logprobs",
             {{"tokens", tokens},
              {"token_logprobs", token_logprobs},
              {"top_logprobs", top_logprobs},
              {"text_offset", text_offset}}},
        }});
        res.set_content(out.dump(), "application/json");
    });
}

int MockLmServer::start(const std::string& host) {
    const int port = server_->bind_to_any_port(host.c_str());
    if (port < 0) throw TransportError("mock server failed to bind on " + host);
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void MockLmServer::run(const std::string& host, int port) {
    if (!server_->listen(host.c_str(), port))
        throw TransportError("mock server failed to listen on " + host + ":" +
                             std::to_string(port));
}

void MockLmServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace mldist
