#include "gmlevel/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gmlevel/error.hpp"

namespace gmlevel {

using nlohmann::json;

// ---------------------------------------------------------------- enums

std::string_view axis_name(TraversalAxis axis) {
  switch (axis) {
    case TraversalAxis::Horizontal: return "horizontal";
    case TraversalAxis::Vertical: return "vertical";
    case TraversalAxis::Both: return "both";
  }
  return "horizontal";
}

TraversalAxis parse_axis(std::string_view name) {
  if (name == "horizontal") return TraversalAxis::Horizontal;
  if (name == "vertical") return TraversalAxis::Vertical;
  if (name == "both") return TraversalAxis::Both;
  throw Error(ErrorCode::ManifestError, "unknown traversal axis '" + std::string(name) + "'");
}

std::string_view solidity_name(Solidity s) {
  switch (s) {
    case Solidity::Solid: return "solid";
    case Solidity::Passable: return "passable";
    case Solidity::Hazard: return "hazard";
    case Solidity::Platform: return "platform";
  }
  return "passable";
}

Solidity parse_solidity(std::string_view name) {
  if (name == "solid") return Solidity::Solid;
  if (name == "passable") return Solidity::Passable;
  if (name == "hazard") return Solidity::Hazard;
  if (name == "platform") return Solidity::Platform;
  throw Error(ErrorCode::ManifestError, "unknown solidity class '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- vocab

TileVocab::TileVocab(std::string game, std::string chars, char background)
    : game_(std::move(game)), chars_(std::move(chars)), background_(background) {
  std::sort(chars_.begin(), chars_.end());
  chars_.erase(std::unique(chars_.begin(), chars_.end()), chars_.end());
  lookup_.fill(-1);
  for (std::size_t i = 0; i < chars_.size(); ++i)
    lookup_[static_cast<unsigned char>(chars_[i])] = static_cast<std::int16_t>(i);
}

bool TileVocab::contains(char c) const { return lookup_[static_cast<unsigned char>(c)] >= 0; }

std::uint8_t TileVocab::id_of(char c) const {
  const auto id = lookup_[static_cast<unsigned char>(c)];
  if (id < 0)
    throw Error(ErrorCode::UncoveredTile,
                std::string("tile '") + c + "' is not in the " + game_ + " vocabulary");
  return static_cast<std::uint8_t>(id);
}

char TileVocab::char_of(std::size_t id) const {
  if (id >= chars_.size())
    throw Error(ErrorCode::IdOutOfRange, "tile id " + std::to_string(id) + " >= vocab size " +
                                             std::to_string(chars_.size()));
  return chars_[id];
}

std::optional<std::uint8_t> TileVocab::background_id() const {
  if (!contains(background_)) return std::nullopt;
  return id_of(background_);
}

// ---------------------------------------------------------------- parsing

LevelGrid parse_level(std::string_view text, std::string level_id) {
  LevelGrid grid;
  grid.level_id = std::move(level_id);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    grid.tiles.emplace_back(line);
    pos = end + 1;
  }
  // trailing blank lines are tolerated, blank lines inside the grid are not
  while (!grid.tiles.empty() && grid.tiles.back().empty()) grid.tiles.pop_back();
  if (grid.tiles.empty()) throw Error(ErrorCode::EmptyLevel, "level '" + grid.level_id + "' is empty");
  grid.rows = grid.tiles.size();
  grid.cols = grid.tiles.front().size();
  for (std::size_t r = 0; r < grid.rows; ++r) {
    if (grid.tiles[r].size() != grid.cols)
      throw Error(ErrorCode::RaggedRows, "level '" + grid.level_id + "' row " + std::to_string(r) +
                                             " has " + std::to_string(grid.tiles[r].size()) +
                                             " columns, expected " + std::to_string(grid.cols));
  }
  if (grid.cols == 0) throw Error(ErrorCode::EmptyLevel, "level '" + grid.level_id + "' has no columns");
  return grid;
}

TileVocab build_vocab(std::span<const LevelGrid> levels, std::string game, char background) {
  std::array<bool, 256> seen{};
  for (const auto& level : levels)
    for (const auto& row : level.tiles)
      for (char c : row) seen[static_cast<unsigned char>(c)] = true;
  std::string chars;
  for (int c = 0; c < 256; ++c)
    if (seen[c]) chars.push_back(static_cast<char>(c));
  return TileVocab(std::move(game), std::move(chars), background);
}

// ---------------------------------------------------------------- chunks

namespace {

struct SweepPlan {
  bool horizontal = false;
  bool vertical = false;
  std::size_t pad_top = 0;    // rows of background added above, horizontal sweep
  std::size_t pad_right = 0;  // columns of background added right, vertical sweep
};

SweepPlan plan_sweeps(const LevelGrid& level, const ExtractOptions& o) {
  if (o.window != kChunkSide)
    throw Error(ErrorCode::InvalidConfig, "chunk window must be " + std::to_string(kChunkSide));
  if (o.stride == 0) throw Error(ErrorCode::InvalidConfig, "chunk stride must be positive");
  const std::size_t w = o.window;
  SweepPlan plan;
  auto too_small = [&](const std::string& why) {
    return Error(ErrorCode::LevelTooSmall, "level '" + level.level_id + "' (" +
                                               std::to_string(level.rows) + "x" +
                                               std::to_string(level.cols) + "): " + why);
  };

  const bool want_h = o.axis != TraversalAxis::Vertical;
  const bool want_v = o.axis != TraversalAxis::Horizontal;
  if (want_h && level.cols >= w) {
    if (level.rows >= w) {
      plan.horizontal = true;
    } else if (o.pad_off_axis) {
      plan.horizontal = true;
      plan.pad_top = w - level.rows;
    } else if (o.axis == TraversalAxis::Horizontal) {
      throw too_small("fewer than " + std::to_string(w) + " rows and off-axis padding disabled");
    }
  }
  if (want_v && level.rows >= w) {
    if (level.cols >= w) {
      plan.vertical = true;
    } else if (o.pad_off_axis) {
      plan.vertical = true;
      plan.pad_right = w - level.cols;
    } else if (o.axis == TraversalAxis::Vertical) {
      throw too_small("fewer than " + std::to_string(w) + " columns and off-axis padding disabled");
    }
  }
  if (!plan.horizontal && !plan.vertical)
    throw too_small("shorter than " + std::to_string(w) + " tiles along the traversal axis");
  return plan;
}

}  // namespace

std::size_t chunk_count(const LevelGrid& level, const ExtractOptions& options) {
  const SweepPlan plan = plan_sweeps(level, options);
  const std::size_t w = options.window, s = options.stride;
  std::size_t n = 0;
  if (plan.horizontal) n += (level.cols - w) / s + 1;
  if (plan.vertical) n += (level.rows - w) / s + 1;
  return n;
}

std::vector<Chunk> extract_chunks(const LevelGrid& level, const TileVocab& vocab,
                                  const ExtractOptions& options) {
  const SweepPlan plan = plan_sweeps(level, options);
  const std::size_t w = options.window, s = options.stride;
  const std::uint8_t bg = [&] {
    if (plan.pad_top == 0 && plan.pad_right == 0) return std::uint8_t{0};
    return vocab.id_of(vocab.background_char());
  }();

  std::vector<Chunk> chunks;
  chunks.reserve(chunk_count(level, options));

  // Tile at (r, c) of the padded frame; padding rows come first, padding
  // columns last.
  auto tile = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> std::uint8_t {
    if (r < 0 || c >= static_cast<std::ptrdiff_t>(level.cols)) return bg;
    return vocab.id_of(level.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
  };

  if (plan.horizontal) {
    // bottom-aligned; negative when padded
    const std::ptrdiff_t row0 =
        static_cast<std::ptrdiff_t>(level.rows) - static_cast<std::ptrdiff_t>(w);
    for (std::size_t c0 = 0; c0 + w <= level.cols; c0 += s) {
      Chunk chunk;
      chunk.source = {level.level_id, row0, static_cast<std::ptrdiff_t>(c0)};
      chunk.level_type = level.level_type;
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < w; ++c)
          chunk.at(r, c) = tile(row0 + static_cast<std::ptrdiff_t>(r),
                                static_cast<std::ptrdiff_t>(c0 + c));
      chunks.push_back(std::move(chunk));
    }
  }
  if (plan.vertical) {
    for (std::size_t r0 = 0; r0 + w <= level.rows; r0 += s) {
      Chunk chunk;
      chunk.source = {level.level_id, static_cast<std::ptrdiff_t>(r0), 0};
      chunk.level_type = level.level_type;
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < w; ++c)
          chunk.at(r, c) = tile(static_cast<std::ptrdiff_t>(r0 + r), static_cast<std::ptrdiff_t>(c));
      chunks.push_back(std::move(chunk));
    }
  }
  return chunks;
}

void one_hot_encode(const Chunk& chunk, std::size_t vocab_size, std::span<double> out) {
  if (out.size() != kChunkCells * vocab_size)
    throw Error(ErrorCode::LengthMismatch, "one_hot_encode: output length " +
                                               std::to_string(out.size()) + ", expected " +
                                               std::to_string(kChunkCells * vocab_size));
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t cell = 0; cell < kChunkCells; ++cell) {
    const std::size_t id = chunk.tiles[cell];
    if (id >= vocab_size)
      throw Error(ErrorCode::IdOutOfRange, "cell " + std::to_string(cell) + " holds id " +
                                               std::to_string(id) + " >= " +
                                               std::to_string(vocab_size));
    out[cell * vocab_size + id] = 1.0;
  }
}

std::vector<double> one_hot_encode(const Chunk& chunk, const TileVocab& vocab) {
  std::vector<double> v(kChunkCells * vocab.size());
  one_hot_encode(chunk, vocab.size(), v);
  return v;
}

Chunk decode(std::span<const double> values, const TileVocab& vocab) {
  const std::size_t t = vocab.size();
  if (t == 0 || values.size() != kChunkCells * t)
    throw Error(ErrorCode::LengthMismatch, "decode: vector length " + std::to_string(values.size()) +
                                               ", expected " + std::to_string(kChunkCells * t));
  Chunk chunk;
  for (std::size_t cell = 0; cell < kChunkCells; ++cell) {
    const double* block = values.data() + cell * t;
    std::size_t best = 0;
    for (std::size_t id = 1; id < t; ++id)
      if (block[id] > block[best]) best = id;
    chunk.tiles[cell] = static_cast<std::uint8_t>(best);
  }
  return chunk;
}

Matrix encode_all(std::span<const Chunk> chunks, const TileVocab& vocab) {
  Matrix m(chunks.size(), kChunkCells * vocab.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) one_hot_encode(chunks[i], vocab.size(), m.row(i));
  return m;
}

// ---------------------------------------------------------------- sampler

BalancedSampler::BalancedSampler(std::span<const std::optional<std::string>> labels,
                                 std::uint64_t seed)
    : rng_(seed) {
  if (labels.empty()) throw Error(ErrorCode::MissingLabels, "balanced sampler needs at least one chunk");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i])
      throw Error(ErrorCode::MissingLabels, "chunk " + std::to_string(i) + " has no level type");
    groups[*labels[i]].push_back(i);
  }
  for (auto& [name, idx] : groups) {
    type_names_.push_back(name);
    members_.push_back(std::move(idx));
  }
}

// Uniform type, then uniform member: P(i) = 1 / (#types * |type(i)|).
std::size_t BalancedSampler::next() {
  const auto& group = members_[rng_.index(members_.size())];
  return group[rng_.index(group.size())];
}

std::string heuristic_level_type(const LevelGrid& level, char ground) {
  auto ground_fraction = [&](std::size_t r) {
    const auto& row = level.tiles[r];
    return static_cast<double>(std::count(row.begin(), row.end(), ground)) /
           static_cast<double>(row.size());
  };
  if (ground_fraction(0) > 0.5) return "underworld";
  if (ground_fraction(level.rows - 1) < 0.5) return "jumpy";
  return "overworld";
}

// ---------------------------------------------------------------- manifests

DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ManifestError, std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.game = j.at("game").get<std::string>();
    if (j.contains("axis")) m.axis = parse_axis(j.at("axis").get<std::string>());
    if (j.contains("background")) {
      const auto bg = j.at("background").get<std::string>();
      if (bg.size() != 1) throw Error(ErrorCode::ManifestError, "background must be one character");
      m.background = bg[0];
    }
    if (j.contains("pad_off_axis")) m.pad_off_axis = j.at("pad_off_axis").get<bool>();
    if (j.contains("solidity")) {
      for (const auto& [key, value] : j.at("solidity").items()) {
        if (key.size() != 1)
          throw Error(ErrorCode::ManifestError, "solidity key '" + key + "' is not one character");
        m.solidity[key[0]] = parse_solidity(value.get<std::string>());
      }
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    if (j.contains("levels")) {
      for (const auto& entry : j.at("levels")) {
        ManifestLevel level;
        if (entry.is_string()) {
          level.path = resolve(entry.get<std::string>());
        } else {
          level.path = resolve(entry.at("path").get<std::string>());
          if (entry.contains("type") && !entry.at("type").is_null())
            level.level_type = entry.at("type").get<std::string>();
        }
        m.levels.push_back(std::move(level));
      }
    }
    if (j.contains("level_dir")) {
      const auto dir = resolve(j.at("level_dir").get<std::string>());
      const std::string ext = j.value("level_ext", std::string(".txt"));
      std::map<std::string, std::optional<std::string>> types;
      if (j.contains("level_types"))
        for (const auto& [name, type] : j.at("level_types").items())
          types[name] = type.get<std::string>();
      std::error_code ec;
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      if (ec) throw Error(ErrorCode::ManifestError, "cannot list level_dir " + dir.string());
      std::sort(found.begin(), found.end());
      for (auto& p : found) {
        ManifestLevel level{p, std::nullopt};
        if (auto it = types.find(p.stem().string()); it != types.end()) level.level_type = it->second;
        m.levels.push_back(std::move(level));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ManifestError, std::string("malformed manifest: ") + e.what());
  }
  if (m.levels.empty()) throw Error(ErrorCode::ManifestError, "manifest lists no levels");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ManifestError, "cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

ExtractOptions extract_options(const DatasetManifest& manifest) {
  ExtractOptions o;
  o.axis = manifest.axis;
  o.pad_off_axis = manifest.pad_off_axis;
  return o;
}

Corpus load_corpus(const DatasetManifest& manifest, bool heuristic_labels) {
  Corpus corpus;
  corpus.manifest = manifest;
  bool any_manifest_label = false, any_missing = false;
  for (const auto& entry : manifest.levels) {
    std::ifstream in(entry.path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ManifestError, "level file not found: " + entry.path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    LevelGrid level = parse_level(ss.str(), entry.path.stem().string());
    level.level_type = entry.level_type;
    if (entry.level_type)
      any_manifest_label = true;
    else
      any_missing = true;
    corpus.levels.push_back(std::move(level));
  }
  corpus.label_source = any_manifest_label ? "manifest" : "none";
  if (any_missing && heuristic_labels && manifest.axis == TraversalAxis::Horizontal) {
    for (auto& level : corpus.levels)
      if (!level.level_type) level.level_type = heuristic_level_type(level);
    corpus.label_source = any_manifest_label ? "manifest+heuristic" : "heuristic";
  }
  corpus.vocab = build_vocab(corpus.levels, manifest.game, manifest.background);
  const ExtractOptions opts = extract_options(manifest);
  for (const auto& level : corpus.levels) {
    auto chunks = extract_chunks(level, corpus.vocab, opts);
    corpus.chunks.insert(corpus.chunks.end(), std::make_move_iterator(chunks.begin()),
                         std::make_move_iterator(chunks.end()));
  }
  return corpus;
}

// ---------------------------------------------------------------- chunk dump

std::string chunk_dump_line(const Chunk& chunk, const TileVocab& vocab) {
  json rows = json::array();
  for (std::size_t r = 0; r < kChunkSide; ++r) {
    std::string line(kChunkSide, ' ');
    for (std::size_t c = 0; c < kChunkSide; ++c) line[c] = vocab.char_of(chunk.at(r, c));
    rows.push_back(std::move(line));
  }
  return rows.dump();
}

std::string write_chunk_dump(std::span<const Chunk> chunks, const TileVocab& vocab) {
  std::string out;
  for (const auto& c : chunks) {
    out += chunk_dump_line(c, vocab);
    out += '\n';
  }
  return out;
}

std::vector<Chunk> read_chunk_dump(std::string_view text, const TileVocab& vocab) {
  std::vector<Chunk> chunks;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json rows;
    try {
      rows = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::LengthMismatch, "chunk dump line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rows.is_array() || rows.size() != kChunkSide)
      throw Error(ErrorCode::LengthMismatch, "chunk dump line " + std::to_string(line_no) +
                                                 ": expected 16 rows");
    Chunk chunk;
    for (std::size_t r = 0; r < kChunkSide; ++r) {
      const auto row = rows[r].get<std::string>();
      if (row.size() != kChunkSide)
        throw Error(ErrorCode::LengthMismatch, "chunk dump line " + std::to_string(line_no) +
                                                   ": row " + std::to_string(r) + " length");
      for (std::size_t c = 0; c < kChunkSide; ++c) chunk.at(r, c) = vocab.id_of(row[c]);
    }
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

}  // namespace gmlevel
