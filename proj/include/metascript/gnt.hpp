#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace metascript {

// One sample of a CASIA GNT file: record framing is
//   u32 LE total size, 2-byte GB2312 tag (high byte first),
//   u16 LE width, u16 LE height, width*height gray bytes (255 = paper).
struct GntRecord {
  char32_t codepoint;
  Eigen::ArrayXXf gray;  // [0,1], bright = paper
};

std::optional<char32_t> gb2312_to_unicode(unsigned char b0, unsigned char b1);
std::optional<std::pair<unsigned char, unsigned char>> unicode_to_gb2312(char32_t cp);

// records with undecodable tags are skipped with a warning
std::vector<GntRecord> read_gnt(const std::string& path);
void write_gnt(const std::string& path, const std::vector<GntRecord>& records);

// Convert a directory of .gnt files into the dataset layout under root
// (writers/<id>/<hex>.png). The writer id is the filename stem up to the
// first '-'. Prototypes are rendered separately from a font. Returns the
// number of imported glyphs.
int import_casia(const std::string& gnt_dir, const std::string& root, int resolution = 128);

}  // namespace metascript
