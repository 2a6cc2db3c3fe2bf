#include "metascript/gnt.hpp"

#include "metascript/dataset.hpp"
#include "metascript/glyph.hpp"
#include "metascript/png_io.hpp"

#include <iconv.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace metascript {

namespace {

class Iconv {
 public:
  Iconv(const char* to, const char* from) : cd_(iconv_open(to, from)) {
    if (cd_ == reinterpret_cast<iconv_t>(-1))
      throw std::runtime_error(std::string("iconv_open ") + from + " -> " + to + " failed");
  }
  ~Iconv() { iconv_close(cd_); }

  bool convert(const char* in, size_t in_len, char* out, size_t out_cap, size_t& out_len) {
    char* ip = const_cast<char*>(in);
    char* op = out;
    size_t il = in_len, ol = out_cap;
    iconv(cd_, nullptr, nullptr, nullptr, nullptr);
    size_t rc = iconv(cd_, &ip, &il, &op, &ol);
    if (rc == static_cast<size_t>(-1) || il != 0) return false;
    out_len = out_cap - ol;
    return true;
  }

 private:
  iconv_t cd_;
};

}  // namespace

std::optional<char32_t> gb2312_to_unicode(unsigned char b0, unsigned char b1) {
  if (b0 < 0x80) return static_cast<char32_t>(b0);  // ASCII tag, second byte padding
  try {
    static thread_local Iconv conv("UTF-32LE", "GB2312");
    char in[2] = {static_cast<char>(b0), static_cast<char>(b1)};
    char out[8];
    size_t out_len = 0;
    if (!conv.convert(in, 2, out, sizeof(out), out_len) || out_len != 4) return std::nullopt;
    std::uint32_t cp;
    std::memcpy(&cp, out, 4);
    return static_cast<char32_t>(cp);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<std::pair<unsigned char, unsigned char>> unicode_to_gb2312(char32_t cp) {
  if (cp < 0x80) return std::make_pair(static_cast<unsigned char>(cp), static_cast<unsigned char>(0));
  try {
    static thread_local Iconv conv("GB2312", "UTF-32LE");
    std::uint32_t v = cp;
    char in[4];
    std::memcpy(in, &v, 4);
    char out[8];
    size_t out_len = 0;
    if (!conv.convert(in, 4, out, sizeof(out), out_len) || out_len != 2) return std::nullopt;
    return std::make_pair(static_cast<unsigned char>(out[0]), static_cast<unsigned char>(out[1]));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<GntRecord> read_gnt(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<GntRecord> out;
  while (true) {
    unsigned char hdr[10];
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (f.gcount() == 0) break;
    if (f.gcount() != sizeof(hdr)) throw std::runtime_error("truncated GNT record header in " + path);
    std::uint32_t size = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (static_cast<std::uint32_t>(hdr[3]) << 24);
    std::uint16_t w = static_cast<std::uint16_t>(hdr[6] | (hdr[7] << 8));
    std::uint16_t h = static_cast<std::uint16_t>(hdr[8] | (hdr[9] << 8));
    if (size != 10u + static_cast<std::uint32_t>(w) * h)
      throw std::runtime_error("inconsistent GNT record size in " + path);
    std::vector<unsigned char> bitmap(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(bitmap.data()), static_cast<std::streamsize>(bitmap.size()));
    if (f.gcount() != static_cast<std::streamsize>(bitmap.size()))
      throw std::runtime_error("truncated GNT bitmap in " + path);
    auto cp = gb2312_to_unicode(hdr[4], hdr[5]);
    if (!cp) {
      std::cerr << "warning: skipping GNT record with undecodable tag 0x" << std::hex
                << static_cast<int>(hdr[4]) << static_cast<int>(hdr[5]) << std::dec << " in " << path
                << "\n";
      continue;
    }
    Eigen::ArrayXXf img(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img(y, x) = bitmap[static_cast<size_t>(y) * w + x] / 255.0f;
    out.push_back({*cp, std::move(img)});
  }
  return out;
}

void write_gnt(const std::string& path, const std::vector<GntRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) {
    auto gb = unicode_to_gb2312(r.codepoint);
    if (!gb) throw std::runtime_error("codepoint U+" + codepoint_hex(r.codepoint) + " not representable in GB2312");
    std::uint16_t w = static_cast<std::uint16_t>(r.gray.cols());
    std::uint16_t h = static_cast<std::uint16_t>(r.gray.rows());
    std::uint32_t size = 10u + static_cast<std::uint32_t>(w) * h;
    unsigned char hdr[10] = {static_cast<unsigned char>(size & 0xff),
                             static_cast<unsigned char>((size >> 8) & 0xff),
                             static_cast<unsigned char>((size >> 16) & 0xff),
                             static_cast<unsigned char>((size >> 24) & 0xff),
                             gb->first,
                             gb->second,
                             static_cast<unsigned char>(w & 0xff),
                             static_cast<unsigned char>(w >> 8),
                             static_cast<unsigned char>(h & 0xff),
                             static_cast<unsigned char>(h >> 8)};
    f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float v = std::min(1.0f, std::max(0.0f, r.gray(y, x)));
        unsigned char b = static_cast<unsigned char>(v * 255.0f + 0.5f);
        f.write(reinterpret_cast<const char*>(&b), 1);
      }
  }
}

int import_casia(const std::string& gnt_dir, const std::string& root, int resolution) {
  fs::path dir(gnt_dir);
  if (!fs::is_directory(dir)) throw std::runtime_error("GNT directory not found: " + gnt_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".gnt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .gnt files under " + gnt_dir);

  int imported = 0;
  for (const auto& file : files) {
    std::string stem = file.stem().string();
    std::string writer = stem.substr(0, stem.find('-'));
    fs::path wdir = fs::path(root) / "writers" / writer;
    fs::create_directories(wdir);
    for (const auto& rec : read_gnt(file.string())) {
      GlyphImage glyph = preprocess(rec.gray, resolution);
      // store dark-on-bright so the files are directly viewable
      write_png_gray((wdir / (codepoint_hex(rec.codepoint) + ".png")).string(), 1.0f - glyph.pixels);
      ++imported;
    }
  }
  return imported;
}

}  // namespace metascript
