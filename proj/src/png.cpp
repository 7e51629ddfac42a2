#include "divsynth/png.hpp"
#include "divsynth/netpbm.hpp"

#include <zlib.h>

#include <array>
#include <cstdint>
#include <stdexcept>

namespace divsynth {

namespace {

constexpr std::string_view kSignature("\x89PNG\r\n\x1a\n", 8);

void put_u32(std::string& out, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(std::string_view b, std::size_t pos)
{
    if (b.size() < pos + 4) throw ParseError("png truncated", b.size());
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(b[pos + i]);
    return v;
}

void put_chunk(std::string& out, const char* type, std::string_view data)
{
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.append(type, 4);
    out.append(data);
    const auto* p = reinterpret_cast<const Bytef*>(out.data() + start);
    put_u32(out, static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(out.size() - start))));
}

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

} // namespace

std::string encode_png(const ImageRGB& image)
{
    const std::size_t w = image.width(), h = image.height();
    std::string raw;
    raw.reserve(h * (1 + 3 * w));
    for (std::size_t y = 0; y < h; ++y) {
        raw.push_back('\0'); // filter: none
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) raw.push_back(static_cast<char>(quantize_intensity(image.at(c, y, x))));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::string z(zlen, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw std::runtime_error("png: zlib compression failed");
    }
    z.resize(zlen);

    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5); // depth 8, RGB, deflate, filter 0, no interlace

    std::string out(kSignature);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});
    return out;
}

ImageRGB decode_png(std::string_view b)
{
    if (b.substr(0, 8) != kSignature) throw ParseError("not a png (bad signature)", 0);
    std::size_t pos = 8;
    std::size_t w = 0, h = 0;
    std::string idat;
    bool seen_end = false;
    while (!seen_end) {
        const std::uint32_t len = get_u32(b, pos);
        if (b.size() < pos + 12 + len) throw ParseError("png chunk truncated", pos);
        const std::string_view type = b.substr(pos + 4, 4);
        const std::string_view data = b.substr(pos + 8, len);
        const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(b.data() + pos + 4), len + 4);
        if (crc != get_u32(b, pos + 8 + len)) throw ParseError("png chunk crc mismatch", pos);
        if (type == "IHDR") {
            if (len != 13) throw ParseError("png IHDR has wrong length", pos);
            w = get_u32(data, 0);
            h = get_u32(data, 4);
            if (data.substr(8, 5) != std::string_view("\x08\x02\x00\x00\x00", 5)) {
                throw ParseError("png flavour not supported (need 8-bit RGB, no interlace)", pos + 16);
            }
        } else if (type == "IDAT") {
            idat.append(data);
        } else if (type == "IEND") {
            seen_end = true;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0) throw ParseError("png has no IHDR", 8);
    std::string raw(h * (1 + 3 * w), '\0');
    uLongf rlen = static_cast<uLongf>(raw.size());
    if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &rlen, reinterpret_cast<const Bytef*>(idat.data()),
                   static_cast<uLong>(idat.size())) != Z_OK ||
        rlen != raw.size()) {
        throw ParseError("png image data does not inflate to the expected size", pos);
    }
    ImageRGB img(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t row = y * (1 + 3 * w);
        if (raw[row] != '\0') throw ParseError("png row filter not supported", row);
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.set(c, y, x, static_cast<std::uint8_t>(raw[row + 1 + 3 * x + c]) / 255.0f);
    }
    return img;
}

std::string base64_encode(std::string_view bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) | std::uint8_t(bytes[i + 2]);
        out += {kB64[(v >> 18) & 63], kB64[(v >> 12) & 63], kB64[(v >> 6) & 63], kB64[v & 63]};
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = std::uint8_t(bytes[i]) << 16;
        out += {kB64[(v >> 18) & 63], kB64[(v >> 12) & 63], '=', '='};
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8);
        out += {kB64[(v >> 18) & 63], kB64[(v >> 12) & 63], kB64[(v >> 6) & 63], '='};
    }
    return out;
}

std::string base64_decode(std::string_view text)
{
    std::array<int, 256> table;
    table.fill(-1);
    for (int i = 0; i < 64; ++i) table[static_cast<std::uint8_t>(kB64[i])] = i;
    if (text.size() % 4) throw ParseError("base64 length is not a multiple of 4", text.size());
    std::string out;
    for (std::size_t i = 0; i < text.size(); i += 4) {
        std::uint32_t v = 0;
        int pad = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char ch = text[i + k];
            if (ch == '=' && i + 4 == text.size() && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = table[static_cast<std::uint8_t>(ch)];
            if (d < 0 || pad) throw ParseError("invalid base64 character", i + k);
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
    }
    return out;
}

} // namespace divsynth
