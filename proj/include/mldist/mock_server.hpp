#pragma once

#include <memory>
#include <string>
#include <thread>

#include "mldist/gateway.hpp"

namespace httplib {
class Server;
}

namespace mldist {

// Deterministic completions fixture speaking the same wire shape as a real
// endpoint, driven by a scenario file. Unknown fingerprints get a 404 naming
// the fingerprint so scenario gaps are easy to diagnose.
class MockLmServer {
public:
    explicit MockLmServer(ScenarioStore store);
    ~MockLmServer();

    // Binds an OS-assigned port on host and serves on a background thread.
    // Returns the bound port.
    int start(const std::string& host = "127.0.0.1");
    // Serves on a fixed port, blocking.
    void run(const std::string& host, int port);
    void stop();

private:
    void install_handlers();

    ScenarioStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace mldist
