// Standalone mock completions endpoint driven by a scenario file.

#include <iostream>

#include <CLI11.hpp>

#include "mldist/gateway.hpp"
#include "mldist/mock_server.hpp"

int main(int argc, char** argv) {
    CLI::App app{"deterministic mock completions endpoint"};
    std::string scenario;
    std::string host = "127.0.0.1";
    int port = 8976;
    app.add_option("--scenario", scenario, "scenario file (line-delimited JSON)")->required();
    app.add_option("--host", host);
    app.add_option("--port", port);
    CLI11_PARSE(app, argc, argv);

    try {
        mldist::MockLmServer server(mldist::ScenarioStore::load(scenario));
        std::cerr << "mock server listening on " << host << ":" << port << "\n";
        server.run(host, port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
