#pragma once

#include "divsynth/layout.hpp"
#include "divsynth/synth.hpp"

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace divsynth {

/// Malformed file contents. offset() is the byte position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset)
    {
    }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Layouts are binary PGM (P5, maxval 255), one byte per pixel holding the
// class index. Images are binary PPM (P6, maxval 255) with byte = floor(v*255 + 0.5).

std::string encode_layout_pgm(const SemanticLayout& layout);
SemanticLayout decode_layout_pgm(std::string_view bytes, std::size_t class_count);

std::string encode_image_ppm(const ImageRGB& image);
ImageRGB decode_image_ppm(std::string_view bytes);

std::uint8_t quantize_intensity(float v);

void write_layout(const std::filesystem::path& path, const SemanticLayout& layout);
SemanticLayout read_layout(const std::filesystem::path& path, std::size_t class_count);
void write_image(const std::filesystem::path& path, const ImageRGB& image);
ImageRGB read_image(const std::filesystem::path& path);

/// Manifest lines are `<layout-path>\t<image-path>`; relative paths resolve
/// against the manifest's directory.
using ManifestEntry = std::pair<std::filesystem::path, std::filesystem::path>;
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Loads every pair listed in a manifest, tagging them with `tag`.
Dataset load_dataset(const std::filesystem::path& manifest, std::size_t class_count, Split tag);

/// Writes layouts/, images/ and one manifest per non-empty split under dir.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

} // namespace divsynth
