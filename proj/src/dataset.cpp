#include "metascript/dataset.hpp"

#include "metascript/png_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace metascript {

std::string codepoint_hex(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04x", static_cast<unsigned>(cp));
  return buf;
}

namespace {

bool parse_hex_stem(const std::string& stem, char32_t& cp) {
  if (stem.empty() || stem.size() > 6) return false;
  unsigned v = 0;
  for (char ch : stem) {
    v <<= 4;
    if (ch >= '0' && ch <= '9') v |= static_cast<unsigned>(ch - '0');
    else if (ch >= 'a' && ch <= 'f') v |= static_cast<unsigned>(ch - 'a' + 10);
    else if (ch >= 'A' && ch <= 'F') v |= static_cast<unsigned>(ch - 'A' + 10);
    else return false;
  }
  cp = static_cast<char32_t>(v);
  return true;
}

// cheap validity probe: PNG signature + IHDR; bad files are skipped with
// a warning instead of failing the whole load
bool png_probe(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return false;
  unsigned char hdr[24];
  size_t got = std::fread(hdr, 1, sizeof(hdr), f);
  std::fclose(f);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return got == sizeof(hdr) && std::equal(sig, sig + 8, hdr) &&
         std::equal(hdr + 12, hdr + 16, reinterpret_cast<const unsigned char*>("IHDR"));
}

std::vector<fs::path> sorted_children(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetIndex load_dataset(const std::string& root) {
  fs::path rootp(root);
  if (!fs::is_directory(rootp)) throw std::runtime_error("dataset root not found: " + root);
  fs::path protos = rootp / "prototypes";
  if (!fs::is_directory(protos)) throw std::runtime_error("prototype set absent: " + protos.string());

  DatasetIndex index;
  for (const auto& p : sorted_children(protos)) {
    if (p.extension() != ".png") continue;
    char32_t cp;
    if (!parse_hex_stem(p.stem().string(), cp)) {
      std::cerr << "warning: ignoring prototype with non-hex name " << p << "\n";
      continue;
    }
    if (!png_probe(p.string())) {
      std::cerr << "warning: skipping unreadable prototype " << p << "\n";
      continue;
    }
    index.add_character(cp, p.string());
  }
  if (index.type_count() == 0) throw std::runtime_error("prototype set absent: no readable prototypes in " + protos.string());

  fs::path writers = rootp / "writers";
  if (!fs::is_directory(writers)) throw std::runtime_error("writers directory absent: " + writers.string());
  for (const auto& wdir : sorted_children(writers)) {
    if (!fs::is_directory(wdir)) continue;
    int w = index.writer_count();
    index.add_writer(wdir.filename().string());
    int kept = 0;
    for (const auto& p : sorted_children(wdir)) {
      if (p.extension() != ".png") continue;
      char32_t cp;
      if (!parse_hex_stem(p.stem().string(), cp)) {
        std::cerr << "warning: ignoring glyph with non-hex name " << p << "\n";
        continue;
      }
      int type = index.type_index(cp);
      if (type < 0)
        throw std::runtime_error("prototype missing for character U+" + codepoint_hex(cp) +
                                 " referenced by " + p.string());
      if (!png_probe(p.string())) {
        std::cerr << "warning: skipping unreadable glyph " << p << "\n";
        continue;
      }
      index.add_glyph(w, type, p.string());
      ++kept;
    }
    if (kept == 0)
      throw std::runtime_error("writer " + wdir.filename().string() + " has no readable glyphs");
  }
  if (index.writer_count() == 0) throw std::runtime_error("no writers found under " + writers.string());
  return index;
}

GlyphImage load_glyph_png(const std::string& path, int resolution) {
  return preprocess(read_png_gray(path), resolution);
}

void TrainingTuple::validate(int c) const {
  if (static_cast<int>(references.size()) != c)
    throw std::runtime_error("TrainingTuple: expected " + std::to_string(c) + " references");
  if (type_label < 0 || writer_label < 0) throw std::runtime_error("TrainingTuple: labels unset");
  for (const auto& r : references) r.validate();
  template_glyph.validate();
  truth.validate();
}

TrainingTuple sample_training_tuple(const DatasetIndex& index, int c, Rng& rng, int resolution) {
  if (c < 1) throw std::runtime_error("sample_training_tuple: c must be >= 1");
  int w = static_cast<int>(rng.below(static_cast<std::uint32_t>(index.writer_count())));
  const auto& glyphs = index.glyphs_of(w);
  int count = static_cast<int>(glyphs.size());
  if (c > count)
    throw std::runtime_error("writer " + index.writer_ids()[static_cast<size_t>(w)] + " has only " +
                             std::to_string(count) + " glyphs, cannot draw " + std::to_string(c) +
                             " references");
  int target = static_cast<int>(rng.below(static_cast<std::uint32_t>(count)));

  std::vector<int> pool;
  pool.reserve(static_cast<size_t>(count));
  bool exclude_target = count > c;
  for (int i = 0; i < count; ++i)
    if (!exclude_target || i != target) pool.push_back(i);
  if (!exclude_target)
    std::cerr << "warning: writer " << index.writer_ids()[static_cast<size_t>(w)]
              << " has too few glyphs to exclude the target from references\n";
  // partial Fisher-Yates for c draws without replacement
  for (int i = 0; i < c; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<std::uint32_t>(pool.size() - static_cast<size_t>(i))));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }

  TrainingTuple t;
  t.writer_label = w;
  t.type_label = glyphs[static_cast<size_t>(target)].type;
  t.truth = load_glyph_png(glyphs[static_cast<size_t>(target)].path, resolution);
  if (!index.has_prototype(t.type_label))
    throw std::runtime_error("prototype missing for type " + std::to_string(t.type_label));
  t.template_glyph = load_glyph_png(index.prototype_path(t.type_label), resolution);
  for (int i = 0; i < c; ++i)
    t.references.push_back(load_glyph_png(glyphs[static_cast<size_t>(pool[static_cast<size_t>(i)])].path, resolution));
  t.validate(c);
  return t;
}

}  // namespace metascript
