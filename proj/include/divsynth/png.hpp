#pragma once

#include "divsynth/layout.hpp"

#include <string>
#include <string_view>

namespace divsynth {

/// 8-bit RGB, non-interlaced, filter 0 on every row, zlib level 6. Same image,
/// same bytes.
std::string encode_png(const ImageRGB& image);

/// Reads back what encode_png writes (8-bit RGB, no interlace). Other PNG
/// flavours are rejected with ParseError.
ImageRGB decode_png(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

} // namespace divsynth
