#ifndef BV_IO_HPP
#define BV_IO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bv/image.hpp"

namespace bv {

// ---- PFM (portable float map, "Pf" single channel) ----
// Written with scale -1.0 (little-endian), rows bottom-to-top as the format
// prescribes; the in-memory grid keeps row 0 on top.
void write_pfm(const std::filesystem::path& path, const Grid<float>& g);
Grid<float> read_pfm(const std::filesystem::path& path);

// ---- PNG (8-bit RGB) ----
void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png(const std::filesystem::path& path);

// ---- small text helpers ----
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Atomic file replacement: write to <path>.tmp### then rename.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::optional<uint64_t> file_content_hash(const std::filesystem::path& path);

}  // namespace bv

#endif
