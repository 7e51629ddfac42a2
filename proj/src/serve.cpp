#include "divsynth/serve.hpp"
#include "divsynth/checkpoint.hpp"
#include "divsynth/config.hpp"
#include "divsynth/evaluation.hpp"
#include "divsynth/netpbm.hpp"
#include "divsynth/png.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>

namespace divsynth {

using nlohmann::json;

namespace {

ApiResponse error(int status, const std::string& message)
{
    ApiResponse r;
    r.status = status;
    r.body = json{{"error", message}}.dump();
    return r;
}

// canonical 6-decimal form; the rendered noise is exactly what the client is told
double canonical(double v)
{
    return std::round(v * 1e6) / 1e6;
}

std::string noise_text(std::span<const double> n)
{
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < n.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f", n[i]);
        out += (i ? "," : "") + std::string(buf);
    }
    return out;
}

json palette_json(const std::vector<Rgb>& palette)
{
    json p = json::array();
    for (const Rgb& c : palette) p.push_back({c[0], c[1], c[2]});
    return p;
}

/// Parses the body and resolves the layout; on failure returns the error response.
std::optional<ApiResponse> parse_request(const ServeState& state, const std::string& body, json& req,
                                         const SemanticLayout*& layout)
{
    try {
        req = json::parse(body);
    } catch (const json::parse_error& e) {
        return error(400, std::string("request body is not valid JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("layout_id") || !req["layout_id"].is_string()) {
        return error(400, "request needs a string field layout_id");
    }
    const auto it = state.layouts.find(req["layout_id"].get<std::string>());
    if (it == state.layouts.end()) return error(404, "unknown layout id '" + req["layout_id"].get<std::string>() + "'");
    layout = &it->second;
    return std::nullopt;
}

std::optional<std::vector<double>> number_list(const json& v)
{
    if (!v.is_array()) return std::nullopt;
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) return std::nullopt;
        out.push_back(e.get<double>());
    }
    return out;
}

} // namespace

ServeState ServeState::load(const std::filesystem::path& checkpoint, const std::filesystem::path& layouts_dir)
{
    const auto entries = checkpoint_load(checkpoint);
    const RunConfig config = config_from_text(unpack_text(find_entry(entries, "meta.config").value));
    const SyntheticWorldConfig world = config.world();
    ServeState s;
    s.model = load_synthesizer(config.model_spec(), config.base(), entries);
    s.class_names = world.class_names;
    s.palette = world.palette;
    s.width = world.width;
    s.height = world.height;
    if (!std::filesystem::is_directory(layouts_dir)) {
        throw std::runtime_error("layouts directory " + layouts_dir.string() + " does not exist");
    }
    for (const auto& e : std::filesystem::directory_iterator(layouts_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
        SemanticLayout l = read_layout(e.path(), s.class_names.size());
        if (l.width() != s.width || l.height() != s.height) {
            throw std::runtime_error("layout " + e.path().string() + " is not " + std::to_string(s.width) + "x" +
                                     std::to_string(s.height));
        }
        s.layouts.emplace(e.path().stem().string(), std::move(l));
    }
    s.validate();
    return s;
}

void ServeState::validate() const
{
    if (!model) throw std::invalid_argument("serve: no model loaded");
    if (class_names.size() != model->class_count() || palette.size() != model->class_count()) {
        throw std::invalid_argument("serve: class metadata does not match the model");
    }
    if (layouts.empty()) throw std::invalid_argument("serve: no layouts in the catalog");
}

ApiResponse api_meta(const ServeState& state)
{
    json ids = json::array();
    for (const auto& [id, _] : state.layouts) ids.push_back(id);
    ApiResponse r;
    r.body = json{{"class_count", state.model->class_count()},
                  {"class_names", state.class_names},
                  {"layout_ids", ids},
                  {"image_size", {{"width", state.width}, {"height", state.height}}},
                  {"palette", palette_json(state.palette)}}
                 .dump();
    return r;
}

ApiResponse api_layout(const ServeState& state, const std::string& id)
{
    const auto it = state.layouts.find(id);
    if (it == state.layouts.end()) return error(404, "unknown layout id '" + id + "'");
    const SemanticLayout& l = it->second;
    ApiResponse r;
    r.body = json{{"id", id},
                  {"width", l.width()},
                  {"height", l.height()},
                  {"pixels", std::vector<int>(l.pixels().begin(), l.pixels().end())},
                  {"palette", palette_json(state.palette)}}
                 .dump();
    return r;
}

ApiResponse api_synthesize(const ServeState& state, const std::string& body)
{
    json req;
    const SemanticLayout* layout = nullptr;
    if (auto err = parse_request(state, body, req, layout)) return *err;
    const std::size_t arity = state.model->class_count();
    const auto raw = req.contains("noise") ? number_list(req["noise"]) : std::nullopt;
    if (!raw) return error(400, "noise must be an array of " + std::to_string(arity) + " numbers");
    if (raw->size() != arity) {
        return error(400, "noise has " + std::to_string(raw->size()) + " entries, expected " + std::to_string(arity));
    }
    std::size_t clamped = 0;
    NoiseVector n = NoiseVector::clamped(*raw, &clamped);
    std::vector<double> canon(n.entries().begin(), n.entries().end());
    for (double& v : canon) v = canonical(v);
    n = NoiseVector(canon);

    ApiResponse r;
    r.content_type = "image/png";
    r.body = encode_png(state.model->render(*layout, n));
    r.headers["X-Noise-Clamped"] = std::to_string(clamped);
    r.headers["X-Noise"] = noise_text(canon);
    return r;
}

ApiResponse api_sweep(const ServeState& state, const std::string& body)
{
    json req;
    const SemanticLayout* layout = nullptr;
    if (auto err = parse_request(state, body, req, layout)) return *err;
    const std::size_t arity = state.model->class_count();
    if (!req.contains("class") || !req["class"].is_number_integer()) return error(400, "class must be an integer");
    const auto cls = req["class"].get<long long>();
    if (cls < 0 || static_cast<std::size_t>(cls) >= arity) {
        return error(400, "class must lie in [0," + std::to_string(arity) + ")");
    }
    std::vector<double> steps = default_linkage_steps();
    if (req.contains("steps")) {
        const json& s = req["steps"];
        if (s.is_number_integer()) {
            const auto count = s.get<long long>();
            if (count < 2 || count > 64) return error(400, "steps count must lie in [2,64]");
            steps.clear();
            for (long long k = 0; k < count; ++k) steps.push_back(-1.0 + 2.0 * double(k) / double(count - 1));
        } else if (auto list = number_list(s)) {
            if (list->size() < 2 || list->size() > 64) return error(400, "steps list needs 2 to 64 values");
            steps = *list;
        } else {
            return error(400, "steps must be a count or an array of numbers");
        }
    }
    std::size_t clamped = 0;
    json images = json::array();
    json values = json::array();
    for (double v : steps) {
        std::vector<double> raw(arity, 0.0);
        raw[static_cast<std::size_t>(cls)] = v;
        std::size_t c = 0;
        NoiseVector n = NoiseVector::clamped(raw, &c);
        clamped += c;
        const double value = canonical(n[static_cast<std::size_t>(cls)]);
        raw.assign(arity, 0.0);
        raw[static_cast<std::size_t>(cls)] = value;
        values.push_back(value);
        images.push_back({{"value", value},
                          {"format", "png_base64"},
                          {"data", base64_encode(encode_png(state.model->render(*layout, NoiseVector(raw))))}});
    }
    ApiResponse r;
    r.body = json{{"layout_id", req["layout_id"]}, {"class", cls}, {"steps", values}, {"images", images}}.dump();
    r.headers["X-Noise-Clamped"] = std::to_string(clamped);
    return r;
}

void install_routes(httplib::Server& server, const ServeState& state)
{
    auto send = [](httplib::Response& res, const ApiResponse& a) {
        res.status = a.status;
        for (const auto& [k, v] : a.headers) res.set_header(k, v);
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Expose-Headers", "X-Noise-Clamped, X-Noise");
        res.set_content(a.body, a.content_type);
    };
    server.Get("/api/meta", [&state, send](const httplib::Request&, httplib::Response& res) {
        send(res, api_meta(state));
    });
    server.Get(R"(/api/layout/([^/]+))", [&state, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_layout(state, req.matches[1]));
    });
    server.Post("/api/synthesize", [&state, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_synthesize(state, req.body));
    });
    server.Post("/api/sweep", [&state, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_sweep(state, req.body));
    });
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", what}}.dump(), "application/json");
    });
}

void run_server(const ServeState& state, const std::string& bind, int port)
{
    state.validate();
    httplib::Server server;
    install_routes(server, state);
    if (!server.bind_to_port(bind, port)) {
        throw std::runtime_error("cannot bind " + bind + ":" + std::to_string(port));
    }
    std::fprintf(stderr, "serving %zu layouts on http://%s:%d\n", state.layouts.size(), bind.c_str(), port);
    if (!server.listen_after_bind()) throw std::runtime_error("server stopped unexpectedly");
}

} // namespace divsynth
