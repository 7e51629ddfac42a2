#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "divsynth/checkpoint.hpp"
#include "divsynth/config.hpp"
#include "divsynth/evaluation.hpp"
#include "divsynth/netpbm.hpp"
#include "divsynth/png.hpp"
#include "divsynth/serve.hpp"
#include "test_util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace divsynth;
using namespace testutil;
using nlohmann::json;

namespace {

// brightness of each segment follows its own noise entry
class SegmentBrightness : public Synthesizer {
public:
    explicit SegmentBrightness(std::vector<Rgb> palette) : palette_(std::move(palette)) {}
    std::size_t class_count() const override { return palette_.size(); }
    ImageRGB render(const SemanticLayout& l, const NoiseVector& n) const override
    {
        ImageRGB img(l.width(), l.height());
        for (std::size_t y = 0; y < l.height(); ++y)
            for (std::size_t x = 0; x < l.width(); ++x) {
                const std::size_t c = l.at(y, x);
                const float k = static_cast<float>(0.6 + 0.3 * n[c]);
                for (std::size_t ch = 0; ch < 3; ++ch) img.set(ch, y, x, palette_[c][ch] * k);
            }
        return img;
    }

private:
    std::vector<Rgb> palette_;
};

struct Fixture {
    TempDir dir{"serve"};
    ServeState state;
    Dataset data;

    Fixture()
    {
        RunConfig cfg;
        cfg.apply_text("crn_width = 8\nphi_channels = 4,8\nepochs = 1\ntrain_count = 2\ntest_count = 3\n");
        cfg.validate();
        data = synth_generate_splits(cfg.world(), cfg.train_count(), cfg.test_count());
        Trainer t(cfg.model_spec(), cfg.train_config());
        t.set_config_echo(cfg.resolved_text());
        t.train(data);
        checkpoint_save(dir.path() / "model.dsyn", t.checkpoint());
        std::filesystem::create_directories(dir.path() / "layouts");
        std::size_t k = 0;
        for (const Sample* s : data.split(Split::test))
            write_layout(dir.path() / "layouts" / ("facade_" + std::to_string(k++) + ".pgm"), s->layout);
        write_file_atomic(dir.path() / "layouts" / "notes.txt", "ignored");
        state = ServeState::load(dir.path() / "model.dsyn", dir.path() / "layouts");
    }
};

Fixture& fixture()
{
    static Fixture f;
    return f;
}

std::string synth_body(const std::string& id, const std::vector<double>& noise)
{
    return json{{"layout_id", id}, {"noise", noise}}.dump();
}

} // namespace

TEST_CASE("meta and layouts")
{
    const ServeState& s = fixture().state;
    const ApiResponse meta = api_meta(s);
    CHECK(meta.status == 200);
    const json m = json::parse(meta.body);
    CHECK(m["class_count"] == 4);
    CHECK(m["class_names"] == json{"wall", "window", "door", "roof"});
    CHECK(m["layout_ids"] == json{"facade_0", "facade_1", "facade_2"});
    CHECK(m["image_size"]["width"] == 32);
    CHECK(api_meta(s).body == meta.body);

    const json l = json::parse(api_layout(s, "facade_1").body);
    CHECK(l["width"] == 32);
    CHECK(l["pixels"].size() == 32 * 32);
    const SemanticLayout& src = fixture().data.split(Split::test)[1]->layout;
    for (std::size_t i = 0; i < src.pixel_count(); ++i) REQUIRE(l["pixels"][i] == src.pixels()[i]);
    CHECK(l["palette"].size() == 4);
    CHECK(api_layout(s, "nope").status == 404);
}

TEST_CASE("synthesize")
{
    const ServeState& s = fixture().state;
    const ApiResponse a = api_synthesize(s, synth_body("facade_0", {0, 0, 0, 0}));
    REQUIRE(a.status == 200);
    CHECK(a.content_type == "image/png");
    CHECK(api_synthesize(s, synth_body("facade_0", {0, 0, 0, 0})).body == a.body);
    const ImageRGB img = decode_png(a.body);
    CHECK(img.width() == 32);
    CHECK(a.headers.at("X-Noise-Clamped") == "0");
    CHECK(a.headers.at("X-Noise") == "0.000000,0.000000,0.000000,0.000000");

    SUBCASE("out-of-range noise is clamped and reported")
    {
        const ApiResponse c = api_synthesize(s, synth_body("facade_0", {2.0, -3.0, 0.5, 1.0}));
        CHECK(c.status == 200);
        CHECK(c.headers.at("X-Noise-Clamped") == "2");
        CHECK(c.headers.at("X-Noise") == "1.000000,-1.000000,0.500000,1.000000");
        CHECK(c.body == api_synthesize(s, synth_body("facade_0", {1.0, -1.0, 0.5, 1.0})).body);
    }
    SUBCASE("noise is canonicalised to 6 decimals")
    {
        CHECK(api_synthesize(s, synth_body("facade_0", {0.1234564, 0, 0, 0})).body ==
              api_synthesize(s, synth_body("facade_0", {0.1234561, 0, 0, 0})).body);
    }
    SUBCASE("errors")
    {
        const ApiResponse short_noise = api_synthesize(s, synth_body("facade_0", {0, 0, 0}));
        CHECK(short_noise.status == 400);
        CHECK(json::parse(short_noise.body)["error"] == "noise has 3 entries, expected 4");
        CHECK(api_synthesize(s, synth_body("facade_0", {0, 0, 0, 0, 0})).status == 400);
        CHECK(api_synthesize(s, synth_body("missing", {0, 0, 0, 0})).status == 404);
        CHECK(api_synthesize(s, "{not json").status == 400);
        CHECK(api_synthesize(s, R"({"layout_id":"facade_0","noise":[0,"a",0,0]})").status == 400);
        CHECK(api_synthesize(s, R"({"layout_id":"facade_0"})").status == 400);
        CHECK(api_synthesize(s, R"({"noise":[0,0,0,0]})").status == 400);
    }
}

TEST_CASE("sweep")
{
    const ServeState& s = fixture().state;
    const ApiResponse r = api_sweep(s, R"({"layout_id":"facade_2","class":0})");
    REQUIRE(r.status == 200);
    const json j = json::parse(r.body);
    CHECK(j["steps"] == json{-1.0, -0.5, 0.0, 0.5, 1.0});
    REQUIRE(j["images"].size() == 5);
    const ImageRGB third = decode_png(base64_decode(j["images"][2]["data"].get<std::string>()));
    CHECK(encode_png(third) == api_synthesize(s, synth_body("facade_2", {0, 0, 0, 0})).body);

    CHECK(json::parse(api_sweep(s, R"({"layout_id":"facade_2","class":1,"steps":3})").body)["steps"] ==
          json{-1.0, 0.0, 1.0});
    CHECK(json::parse(api_sweep(s, R"({"layout_id":"facade_2","class":1,"steps":[0.25,2]})").body)["steps"] ==
          json{0.25, 1.0});
    CHECK(api_sweep(s, R"({"layout_id":"facade_2","class":4})").status == 400);
    CHECK(api_sweep(s, R"({"layout_id":"facade_2","class":-1})").status == 400);
    CHECK(api_sweep(s, R"({"layout_id":"facade_2"})").status == 400);
    CHECK(api_sweep(s, R"({"layout_id":"facade_2","class":0,"steps":1})").status == 400);
    CHECK(api_sweep(s, R"({"layout_id":"facade_2","class":0,"steps":"x"})").status == 400);
    CHECK(api_sweep(s, R"({"layout_id":"zzz","class":0})").status == 404);
}

TEST_CASE("differences between two requests concentrate in the swept segment")
{
    ServeState s;
    const SyntheticWorldConfig wc;
    s.model = std::make_shared<SegmentBrightness>(wc.palette);
    s.class_names = wc.class_names;
    s.palette = wc.palette;
    s.width = s.height = 32;
    const SemanticLayout l = fixture().data.split(Split::test)[0]->layout;
    s.layouts.emplace("f", l);
    s.validate();
    const ImageRGB a = decode_png(api_synthesize(s, synth_body("f", {0, 0, 0, 0})).body);
    const ImageRGB b = decode_png(api_synthesize(s, synth_body("f", {0, 0.8, 0, 0})).body);
    CHECK(linkage_from_sweep({a, b}, l, 1) == kLinkageCap);
}

TEST_CASE("state loading")
{
    Fixture& f = fixture();
    CHECK_THROWS(ServeState::load(f.dir.path() / "model.dsyn", f.dir.path() / "nowhere"));
    CHECK_THROWS(ServeState::load(f.dir.path() / "missing.dsyn", f.dir.path() / "layouts"));
    TempDir empty("serve_empty");
    CHECK_THROWS(ServeState::load(f.dir.path() / "model.dsyn", empty.path()));
    write_layout(empty.path() / "small.pgm", SemanticLayout(16, 16, 4));
    CHECK_THROWS(ServeState::load(f.dir.path() / "model.dsyn", empty.path()));
}

TEST_CASE("http: concurrent identical requests return identical bodies")
{
    const ServeState& s = fixture().state;
    httplib::Server server;
    install_routes(server, s);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread loop([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string body = synth_body("facade_1", {0.25, -0.5, 0.75, 0.0});
    const std::string expected = api_synthesize(s, body).body;
    std::vector<std::string> got(16);
    std::vector<int> status(16, 0);
    std::vector<std::thread> clients;
    for (std::size_t i = 0; i < 16; ++i) {
        clients.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            c.set_connection_timeout(30);
            c.set_read_timeout(60);
            if (auto r = c.Post("/api/synthesize", body, "application/json")) {
                status[i] = r->status;
                got[i] = r->body;
            }
        });
    }
    for (auto& t : clients) t.join();
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(status[i] == 200);
        CHECK(got[i] == expected);
    }

    httplib::Client c("127.0.0.1", port);
    auto bad = c.Post("/api/synthesize", synth_body("facade_1", {0.0, 0.0}), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["error"] == "noise has 2 entries, expected 4");
    auto meta = c.Get("/api/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(meta->get_header_value("Access-Control-Allow-Origin") == "*");
    auto layout = c.Get("/api/layout/nope");
    REQUIRE(layout);
    CHECK(layout->status == 404);
    auto pre = c.Options("/api/synthesize");
    REQUIRE(pre);
    CHECK(pre->status == 204);

    server.stop();
    loop.join();
}
