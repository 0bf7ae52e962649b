#ifndef GMLEVEL_TESTS_SUPPORT_HPP
#define GMLEVEL_TESTS_SUPPORT_HPP

// Procedural stand-in corpus with three visually distinct level types, and
// small helpers shared by the test binaries.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmlevel/random.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmlevel_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// 14-row side-scrolling level in Mario-style characters.
///   overworld:  two ground rows with short gaps, pipes, question blocks, enemies
///   underworld: brick ceiling, ground, brick columns and coins
///   jumpy:      no continuous ground, floating platforms at varying heights
inline std::vector<std::string> synth_level(const std::string& type, std::size_t width, gmlevel::Rng& rng) {
  const std::size_t rows = 14;
  std::vector<std::string> g(rows, std::string(width, '-'));
  auto put = [&](std::size_t r, std::size_t c, char ch) {
    if (r < rows && c < width) g[r][c] = ch;
  };
  if (type == "overworld") {
    for (std::size_t c = 0; c < width; ++c) put(12, c, 'X'), put(13, c, 'X');
    for (std::size_t c = 6; c + 6 < width; c += 5 + rng.index(6)) {
      switch (rng.index(4)) {
        case 0: {  // gap
          const std::size_t w = 1 + rng.index(2);
          for (std::size_t i = 0; i < w; ++i) put(12, c + i, '-'), put(13, c + i, '-');
          break;
        }
        case 1: {  // pipe
          const std::size_t h = 2 + rng.index(3);
          put(12 - h, c, '<'), put(12 - h, c + 1, '>');
          for (std::size_t r = 13 - h; r < 12; ++r) put(r, c, '['), put(r, c + 1, ']');
          break;
        }
        case 2:  // blocks
          put(8, c, 'S'), put(8, c + 1, '?'), put(8, c + 2, 'S'), put(8, c + 3, 'Q');
          break;
        default:
          put(11, c, 'E');
      }
    }
  } else if (type == "underworld") {
    for (std::size_t c = 0; c < width; ++c) put(0, c, 'X'), put(12, c, 'X'), put(13, c, 'X');
    for (std::size_t c = 5; c + 4 < width; c += 4 + rng.index(5)) {
      if (rng.index(2) == 0) {
        const std::size_t h = 2 + rng.index(3);
        for (std::size_t r = 12 - h; r < 12; ++r) put(r, c, 'S');
      } else {
        const std::size_t r = 6 + rng.index(3);
        for (std::size_t i = 0; i < 3; ++i) put(r, c + i, 'S'), put(r - 1, c + i, 'o');
      }
    }
  } else {  // jumpy
    std::size_t c = 0;
    std::size_t level = 12;
    while (c < width) {
      const std::size_t len = 3 + rng.index(4);
      for (std::size_t i = 0; i < len; ++i) {
        put(level, c + i, 'X');
        if (level == 12) put(13, c + i, 'X');
      }
      if (rng.index(3) == 0) put(level - 3, c + 1, 'o'), put(level - 3, c + 2, 'o');
      c += len + 1 + rng.index(2);
      const long next = static_cast<long>(level) + static_cast<long>(rng.index(5)) - 2;
      level = static_cast<std::size_t>(std::clamp<long>(next, 7, 12));
    }
  }
  return g;
}

inline std::string join_rows(const std::vector<std::string>& rows) {
  std::string s;
  for (const auto& r : rows) s += r + "\n";
  return s;
}

struct SynthCorpus {
  fs::path dir;
  fs::path manifest;
  std::size_t levels = 0;
};

/// Writes `per_type` levels of every type plus a manifest. With `typed` the
/// manifest carries the level types; otherwise the loader's heuristic labels
/// apply.
inline SynthCorpus write_synth_corpus(const fs::path& dir, std::size_t per_type, std::size_t width,
                                      std::uint64_t seed, bool typed = true) {
  gmlevel::Rng rng(seed);
  nlohmann::json levels = nlohmann::json::array();
  SynthCorpus out{dir, dir / "synth.json", 0};
  for (const std::string type : {"overworld", "underworld", "jumpy"})
    for (std::size_t i = 0; i < per_type; ++i) {
      const std::string name = type + "-" + std::to_string(i) + ".txt";
      write_file(dir / "levels" / name, join_rows(synth_level(type, width, rng)));
      nlohmann::json e = {{"path", "levels/" + name}};
      if (typed) e["type"] = type;
      levels.push_back(e);
      ++out.levels;
    }
  nlohmann::json m = {{"game", "smb"}, {"axis", "horizontal"}, {"background", "-"}, {"levels", levels}};
  write_file(out.manifest, m.dump(1));
  return out;
}

}  // namespace testsupport

#endif  // GMLEVEL_TESTS_SUPPORT_HPP
