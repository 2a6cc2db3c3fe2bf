#pragma once

#include "metascript/glyph.hpp"
#include "metascript/rng.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace metascript {

// Immutable view of a dataset root:
//   <root>/prototypes/<hex codepoint>.png
//   <root>/writers/<writer id>/<hex codepoint>.png
// 8-bit grayscale PNGs, dark ink on bright paper. The index is safely
// shareable after load; sampling takes a caller-provided random source.
class DatasetIndex {
 public:
  struct Entry {
    int type;          // index into characters()
    std::string path;
  };

  const std::vector<std::string>& writer_ids() const { return writer_ids_; }
  const std::vector<char32_t>& characters() const { return characters_; }
  int writer_count() const { return static_cast<int>(writer_ids_.size()); }
  int type_count() const { return static_cast<int>(characters_.size()); }

  int type_index(char32_t cp) const {
    auto it = type_by_cp_.find(cp);
    return it == type_by_cp_.end() ? -1 : it->second;
  }

  const std::string& prototype_path(int type) const { return prototype_paths_.at(static_cast<size_t>(type)); }
  bool has_prototype(int type) const {
    return type >= 0 && type < type_count() && !prototype_paths_[static_cast<size_t>(type)].empty();
  }
  const std::vector<Entry>& glyphs_of(int writer) const { return writer_glyphs_.at(static_cast<size_t>(writer)); }

  // load-time plumbing
  void add_writer(std::string id) { writer_ids_.push_back(std::move(id)); writer_glyphs_.emplace_back(); }
  void add_character(char32_t cp, std::string proto_path) {
    type_by_cp_[cp] = static_cast<int>(characters_.size());
    characters_.push_back(cp);
    prototype_paths_.push_back(std::move(proto_path));
  }
  void add_glyph(int writer, int type, std::string path) {
    writer_glyphs_[static_cast<size_t>(writer)].push_back({type, std::move(path)});
  }

 private:
  std::vector<std::string> writer_ids_;
  std::vector<char32_t> characters_;
  std::vector<std::string> prototype_paths_;
  std::vector<std::vector<Entry>> writer_glyphs_;
  std::map<char32_t, int> type_by_cp_;
};

DatasetIndex load_dataset(const std::string& root);

struct TrainingTuple {
  std::vector<GlyphImage> references;  // c glyphs, one writer
  GlyphImage template_glyph;           // prototype of the target character
  GlyphImage truth;                    // the writer's own rendition
  int type_label = -1;
  int writer_label = -1;

  void validate(int c) const;
};

// references drawn uniformly without replacement from the chosen writer,
// excluding the target character whenever the writer has more than c
// glyphs; glyphs are canonicalized to `resolution` on load
TrainingTuple sample_training_tuple(const DatasetIndex& index, int c, Rng& rng,
                                    int resolution = kCanonicalResolution);

// glyph loaded from a dataset PNG (dark-on-bright) at a given resolution
GlyphImage load_glyph_png(const std::string& path, int resolution);

std::string codepoint_hex(char32_t cp);

}  // namespace metascript
