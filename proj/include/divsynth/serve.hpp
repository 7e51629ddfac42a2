#pragma once

#include "divsynth/models.hpp"
#include "divsynth/synth.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace divsynth {

/// Everything a request handler reads. Built once at startup, never mutated.
struct ServeState {
    std::shared_ptr<const Synthesizer> model;
    std::vector<std::string> class_names;
    std::vector<Rgb> palette;
    std::size_t width = 0;
    std::size_t height = 0;
    std::map<std::string, SemanticLayout> layouts;

    /// Loads the generator from a checkpoint and every *.pgm under layouts_dir
    /// (id = file stem).
    static ServeState load(const std::filesystem::path& checkpoint, const std::filesystem::path& layouts_dir);
    void validate() const;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

// Socket-free handlers; the HTTP routes are thin wrappers around these.
ApiResponse api_meta(const ServeState& state);
ApiResponse api_layout(const ServeState& state, const std::string& id);
ApiResponse api_synthesize(const ServeState& state, const std::string& body);
ApiResponse api_sweep(const ServeState& state, const std::string& body);

void install_routes(httplib::Server& server, const ServeState& state);

/// Blocks serving until the process is stopped. Throws if the bind fails.
void run_server(const ServeState& state, const std::string& bind, int port);

} // namespace divsynth
