#include "divsynth/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

namespace divsynth {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

namespace {

struct Header {
    char kind = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t maxval = 0;
    std::size_t payload = 0; // offset of the first raster byte
};

class HeaderReader {
public:
    HeaderReader(std::string_view bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::size_t pos() const { return pos_; }

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what)
    {
        skip_space_and_comments();
        const std::size_t start = pos_;
        std::size_t v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (v > 1u << 24) throw ParseError(std::string("netpbm ") + what + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + what, start);
        return v;
    }

    void single_whitespace()
    {
        if (pos_ >= bytes_.size()) throw ParseError("netpbm: header ends before raster", pos_);
        const char c = bytes_[pos_];
        if (c != ' ' && c != '\t' && c != '\n' && c != '\r') {
            throw ParseError("netpbm: expected whitespace after maxval", pos_);
        }
        ++pos_;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

Header parse_header(std::string_view bytes, char expected)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != expected) {
        throw ParseError(std::string("netpbm: expected magic P") + expected, 0);
    }
    Header h;
    h.kind = expected;
    HeaderReader rest(bytes, 2);
    h.width = rest.number("width");
    h.height = rest.number("height");
    h.maxval = rest.number("maxval");
    rest.single_whitespace();
    if (h.width == 0 || h.height == 0) throw ParseError("netpbm: zero image dimension", rest.pos());
    if (h.maxval == 0 || h.maxval > 255) throw ParseError("netpbm: only 8-bit maxval (1..255) supported", rest.pos());
    h.payload = rest.pos();
    const std::size_t channels = expected == '6' ? 3 : 1;
    const std::size_t need = h.width * h.height * channels;
    if (bytes.size() < h.payload + need) {
        throw ParseError("netpbm: truncated raster, need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - h.payload),
                         bytes.size());
    }
    return h;
}

} // namespace

std::uint8_t quantize_intensity(float v)
{
    const double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

std::string encode_layout_pgm(const SemanticLayout& layout)
{
    std::string out = "P5\n" + std::to_string(layout.width()) + " " + std::to_string(layout.height()) + "\n255\n";
    const auto px = layout.pixels();
    out.append(reinterpret_cast<const char*>(px.data()), px.size());
    return out;
}

SemanticLayout decode_layout_pgm(std::string_view bytes, std::size_t class_count)
{
    const Header h = parse_header(bytes, '5');
    std::vector<std::uint8_t> px(h.width * h.height);
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(bytes[h.payload + i]);
        if (px[i] >= class_count) {
            throw ParseError("layout pixel class " + std::to_string(px[i]) + " >= class count " +
                                 std::to_string(class_count),
                             h.payload + i);
        }
    }
    return SemanticLayout(h.width, h.height, class_count, std::move(px));
}

std::string encode_image_ppm(const ImageRGB& image)
{
    std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    out.reserve(out.size() + 3 * image.width() * image.height());
    for (std::size_t y = 0; y < image.height(); ++y)
        for (std::size_t x = 0; x < image.width(); ++x)
            for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(quantize_intensity(image.at(c, y, x))));
    return out;
}

ImageRGB decode_image_ppm(std::string_view bytes)
{
    const Header h = parse_header(bytes, '6');
    ImageRGB img(h.width, h.height);
    const auto maxval = static_cast<float>(h.maxval);
    std::size_t i = h.payload;
    for (std::size_t y = 0; y < h.height; ++y)
        for (std::size_t x = 0; x < h.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const auto b = static_cast<std::uint8_t>(bytes[i]);
                if (b > h.maxval) throw ParseError("ppm sample exceeds maxval", i);
                img.set(c, y, x, static_cast<float>(b) / maxval);
                ++i;
            }
    return img;
}

void write_layout(const fs::path& path, const SemanticLayout& layout)
{
    write_file_atomic(path, encode_layout_pgm(layout));
}

SemanticLayout read_layout(const fs::path& path, std::size_t class_count)
{
    return decode_layout_pgm(read_file(path), class_count);
}

void write_image(const fs::path& path, const ImageRGB& image)
{
    write_file_atomic(path, encode_image_ppm(image));
}

ImageRGB read_image(const fs::path& path)
{
    return decode_image_ppm(read_file(path));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path)
{
    const std::string text = read_file(path);
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected <layout-path>\\t<image-path>");
        }
        fs::path l = line.substr(0, tab);
        fs::path i = line.substr(tab + 1);
        if (l.is_relative()) l = base / l;
        if (i.is_relative()) i = base / i;
        out.emplace_back(std::move(l), std::move(i));
    }
    if (out.empty()) throw std::runtime_error(path.string() + ": manifest lists no pairs");
    return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries)
{
    std::string text;
    for (const auto& [l, i] : entries) text += l.generic_string() + "\t" + i.generic_string() + "\n";
    write_file_atomic(path, text);
}

Dataset load_dataset(const fs::path& manifest, std::size_t class_count, Split tag)
{
    Dataset ds;
    ds.class_count = class_count;
    for (const auto& [l, i] : read_manifest(manifest)) {
        ds.samples.push_back(Sample{read_layout(l, class_count), read_image(i), tag});
    }
    ds.validate();
    return ds;
}

void save_dataset(const fs::path& dir, const Dataset& dataset)
{
    for (Split s : {Split::train, Split::val, Split::test}) {
        const auto part = dataset.split(s);
        if (part.empty()) continue;
        std::vector<ManifestEntry> entries;
        for (std::size_t k = 0; k < part.size(); ++k) {
            std::ostringstream stem;
            stem << split_name(s) << '_' << std::setw(5) << std::setfill('0') << k;
            const fs::path l = fs::path("layouts") / (stem.str() + ".pgm");
            const fs::path i = fs::path("images") / (stem.str() + ".ppm");
            write_layout(dir / l, part[k]->layout);
            write_image(dir / i, part[k]->image);
            entries.emplace_back(l, i);
        }
        write_manifest(dir / (std::string(split_name(s)) + "_manifest.tsv"), entries);
    }
}

} // namespace divsynth
