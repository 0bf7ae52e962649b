#ifndef GMLEVEL_CORPUS_HPP
#define GMLEVEL_CORPUS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmlevel/matrix.hpp"
#include "gmlevel/random.hpp"

namespace gmlevel {

inline constexpr std::size_t kChunkSide = 16;
inline constexpr std::size_t kChunkCells = kChunkSide * kChunkSide;

/// Character grid of one level file.
struct LevelGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> tiles;  ///< `rows` strings of `cols` characters
  std::string level_id;
  std::optional<std::string> level_type;

  char at(std::size_t r, std::size_t c) const { return tiles[r][c]; }
};

/// Bijection between the tile characters of one game and ids [0, T), ids in
/// ascending character-code order.
class TileVocab {
 public:
  TileVocab() = default;
  TileVocab(std::string game, std::string chars, char background);

  const std::string& game() const { return game_; }
  /// Characters ordered by id.
  const std::string& chars() const { return chars_; }
  char background_char() const { return background_; }
  std::size_t size() const { return chars_.size(); }

  bool contains(char c) const;
  /// Throws UncoveredTile for characters outside the vocabulary.
  std::uint8_t id_of(char c) const;
  /// Throws IdOutOfRange.
  char char_of(std::size_t id) const;
  std::optional<std::uint8_t> background_id() const;

  bool operator==(const TileVocab&) const = default;

 private:
  std::string game_;
  std::string chars_;
  char background_ = '-';
  std::array<std::int16_t, 256> lookup_{};
};

/// Window position in level coordinates; a negative offset means the window
/// starts inside padding added above (or left of) the level.
struct ChunkSource {
  std::string level_id;
  std::ptrdiff_t row_offset = 0;
  std::ptrdiff_t col_offset = 0;
};

/// 16x16 grid of tile ids, row-major.
struct Chunk {
  std::array<std::uint8_t, kChunkCells> tiles{};
  ChunkSource source;
  std::optional<std::string> level_type;

  std::uint8_t at(std::size_t r, std::size_t c) const { return tiles[r * kChunkSide + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return tiles[r * kChunkSide + c]; }
};

enum class TraversalAxis { Horizontal, Vertical, Both };

std::string_view axis_name(TraversalAxis axis);
TraversalAxis parse_axis(std::string_view name);

enum class Solidity { Solid, Passable, Hazard, Platform };

std::string_view solidity_name(Solidity s);
Solidity parse_solidity(std::string_view name);

struct ManifestLevel {
  std::filesystem::path path;
  std::optional<std::string> level_type;
};

struct DatasetManifest {
  std::string game;
  std::vector<ManifestLevel> levels;
  std::map<char, Solidity> solidity;
  TraversalAxis axis = TraversalAxis::Horizontal;
  char background = '-';
  /// Levels shorter than a chunk across the traversal axis are padded with
  /// background on the top (horizontal) or right (vertical) side.
  bool pad_off_axis = true;
};

// ---------------------------------------------------------------- operations

/// Newline-separated rows; CRLF and a trailing newline are accepted.
LevelGrid parse_level(std::string_view text, std::string level_id = {});

/// Ids by ascending character code over all characters of `levels`.
TileVocab build_vocab(std::span<const LevelGrid> levels, std::string game = {},
                      char background = '-');

struct ExtractOptions {
  TraversalAxis axis = TraversalAxis::Horizontal;
  std::size_t window = kChunkSide;
  std::size_t stride = 1;
  bool pad_off_axis = false;
};

/// Sliding 16x16 windows along the traversal axis. Horizontal windows sit on
/// the bottom rows of the level, vertical windows on its leftmost columns;
/// Both is the horizontal sweep followed by the vertical one, duplicates kept.
std::vector<Chunk> extract_chunks(const LevelGrid& level, const TileVocab& vocab,
                                  const ExtractOptions& options);

/// Number of windows extract_chunks produces, without building them.
std::size_t chunk_count(const LevelGrid& level, const ExtractOptions& options);

/// Cell-major one-hot layout: entry (cell * T + id) is 1 for the cell's tile.
std::vector<double> one_hot_encode(const Chunk& chunk, const TileVocab& vocab);
void one_hot_encode(const Chunk& chunk, std::size_t vocab_size, std::span<double> out);

/// Per-cell argmax over each T-slot block; ties go to the lowest id.
Chunk decode(std::span<const double> values, const TileVocab& vocab);

/// Draws chunk indices with probability proportional to 1 / |type of chunk|,
/// so every level type is drawn equally often in expectation.
class BalancedSampler {
 public:
  BalancedSampler(std::span<const std::optional<std::string>> labels, std::uint64_t seed);
  template <class ChunkRange>
  static BalancedSampler for_chunks(const ChunkRange& chunks, std::uint64_t seed) {
    std::vector<std::optional<std::string>> labels;
    for (const auto& c : chunks) labels.push_back(c.level_type);
    return BalancedSampler(labels, seed);
  }

  std::size_t next();
  const std::vector<std::string>& types() const { return type_names_; }

 private:
  std::vector<std::string> type_names_;
  std::vector<std::vector<std::size_t>> members_;
  Rng rng_;
};

/// Per-level fallback labelling for Mario-like levels using the ground tile:
/// ground across most of the top row means underworld, little ground in the
/// bottom row means jumpy, anything else overworld.
std::string heuristic_level_type(const LevelGrid& level, char ground = 'X');

// ---------------------------------------------------------------- manifests

/// JSON manifest: {game, levels: [{path, type?}], level_dir?, solidity: {c: class},
/// axis, background?, pad_off_axis?}. Relative paths resolve against the
/// manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

/// Everything the pipeline needs from one manifest.
struct Corpus {
  DatasetManifest manifest;
  std::vector<LevelGrid> levels;
  TileVocab vocab;
  std::vector<Chunk> chunks;
  /// "manifest", "heuristic", or "none"
  std::string label_source;

  std::size_t input_dim() const { return kChunkCells * vocab.size(); }
};

/// Reads every level, builds the vocabulary and extracts chunks. Levels
/// without a type in the manifest get heuristic labels when the game is
/// horizontal and at least one level is unlabelled.
Corpus load_corpus(const DatasetManifest& manifest, bool heuristic_labels = true);

ExtractOptions extract_options(const DatasetManifest& manifest);

// ---------------------------------------------------------------- chunk dump

/// One chunk per line: a JSON array of 16 strings of 16 tile characters.
std::string chunk_dump_line(const Chunk& chunk, const TileVocab& vocab);
std::string write_chunk_dump(std::span<const Chunk> chunks, const TileVocab& vocab);
std::vector<Chunk> read_chunk_dump(std::string_view text, const TileVocab& vocab);

/// Flat one-hot matrix rows for a chunk list (rows = chunks).
Matrix encode_all(std::span<const Chunk> chunks, const TileVocab& vocab);

}  // namespace gmlevel

#endif  // GMLEVEL_CORPUS_HPP
