#ifndef GMLEVEL_PLAYABILITY_HPP
#define GMLEVEL_PLAYABILITY_HPP

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gmlevel/corpus.hpp"

namespace gmlevel {

enum class PlayDirection { LeftToRight, BottomToTop };

/// Movement model for the chunk-level path search.
///
/// The agent occupies one cell. Solid and hazard cells cannot be occupied;
/// solid and platform cells carry the agent from above, and platforms can be
/// passed through from below. On the ground it walks one column per step or
/// starts a jump. A jump rises at most `max_jump_height` rows, one row per
/// step, and the agent can stop rising at any step. While airborne every step
/// moves one row up or down with an optional one-column drift, and the total
/// drift between take-off and landing is at most `max_jump_span` columns.
struct PlayabilityRules {
  std::string game;
  std::map<char, Solidity> solidity;
  /// Characters missing from `solidity` count as passable when true and raise
  /// UncoveredTile otherwise.
  bool default_passable = false;
  int max_jump_height = 4;
  int max_jump_span = 5;
  PlayDirection direction = PlayDirection::LeftToRight;
  /// Whether the row below the grid supports the agent. A pit in a
  /// side-scrolling chunk is a death; a vertical chunk continues downward.
  bool floor_below_grid = false;

  /// Presets: "smb" (solid set X S Q ? [ ] < >, everything else passable,
  /// left to right) and "ki" (solidity must cover the vocabulary, bottom to
  /// top). `overrides` replace preset entries. Other games raise
  /// UnsupportedGame.
  static PlayabilityRules for_game(std::string_view game,
                                   const std::map<char, Solidity>& overrides = {});
};

/// Cells as (row, column), start to goal.
struct PlayPath {
  bool playable = false;
  std::vector<std::pair<int, int>> cells;
};

/// A* from any standable cell of the first column (any standable cell of the
/// bottom row for bottom-to-top) to a standable cell of the last column (any
/// occupiable cell of the top row). Rows may have any equal length.
PlayPath find_path(const std::vector<std::string>& rows, const PlayabilityRules& rules);

PlayPath find_path(const Chunk& chunk, const TileVocab& vocab, const PlayabilityRules& rules);

inline bool playable(const Chunk& chunk, const TileVocab& vocab, const PlayabilityRules& rules) {
  return find_path(chunk, vocab, rules).playable;
}

}  // namespace gmlevel

#endif  // GMLEVEL_PLAYABILITY_HPP
