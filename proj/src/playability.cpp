#include "gmlevel/playability.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <limits>
#include <queue>
#include <tuple>

#include "gmlevel/error.hpp"

namespace gmlevel {

PlayabilityRules PlayabilityRules::for_game(std::string_view game,
                                            const std::map<char, Solidity>& overrides) {
  std::string g(game);
  std::transform(g.begin(), g.end(), g.begin(), [](unsigned char c) { return std::tolower(c); });
  PlayabilityRules r;
  r.game = g;
  if (g == "smb") {
    for (char c : std::string("XSQ?[]<>")) r.solidity[c] = Solidity::Solid;
    r.default_passable = true;
    r.direction = PlayDirection::LeftToRight;
    r.floor_below_grid = false;
  } else if (g == "ki") {
    r.default_passable = false;
    r.direction = PlayDirection::BottomToTop;
    r.floor_below_grid = true;
  } else {
    throw Error(ErrorCode::UnsupportedGame, "no playability rules for game '" + std::string(game) + "'");
  }
  for (const auto& [c, s] : overrides) r.solidity[c] = s;
  return r;
}

namespace {

class Search {
 public:
  Search(const std::vector<std::string>& rows, const PlayabilityRules& rules)
      : rules_(rules),
        rows_(static_cast<int>(rows.size())),
        cols_(rows.empty() ? 0 : static_cast<int>(rows.front().size())),
        height_(rules.max_jump_height),
        span_(rules.max_jump_span) {
    if (rows_ == 0 || cols_ == 0) throw Error(ErrorCode::EmptyLevel, "playability grid is empty");
    if (height_ < 0 || span_ < 0) throw Error(ErrorCode::InvalidConfig, "negative jump parameters");
    cells_.reserve(static_cast<std::size_t>(rows_ * cols_));
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != cols_)
        throw Error(ErrorCode::RaggedRows, "playability grid rows differ in length");
      for (char c : row) cells_.push_back(classify(c));
    }
    air_modes_ = (height_ + 1) * (span_ + 1);
    modes_ = 1 + air_modes_;
  }

  PlayPath run() {
    const std::size_t n = static_cast<std::size_t>(rows_ * cols_ * modes_);
    std::vector<int> best(n, std::numeric_limits<int>::max());
    std::vector<int> parent(n, -1);
    using Entry = std::tuple<int, int, int>;  // f, g, state
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

    auto push = [&](int state, int g, int from) {
      if (g >= best[static_cast<std::size_t>(state)]) return;
      best[static_cast<std::size_t>(state)] = g;
      parent[static_cast<std::size_t>(state)] = from;
      open.emplace(g + heuristic(state), g, state);
    };

    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        if (is_start(r, c)) push(ground(r, c), 0, -1);

    std::vector<int> next;
    while (!open.empty()) {
      const auto [f, g, s] = open.top();
      open.pop();
      if (g != best[static_cast<std::size_t>(s)]) continue;
      if (is_goal(s)) return trace(s, parent);
      next.clear();
      successors(s, next);
      for (int t : next) push(t, g + 1, s);
    }
    return {};
  }

 private:
  enum Cell : unsigned char { kFree, kSolid, kHazard, kPlatform };

  Cell classify(char c) const {
    const auto it = rules_.solidity.find(c);
    if (it == rules_.solidity.end()) {
      if (rules_.default_passable) return kFree;
      throw Error(ErrorCode::UncoveredTile,
                  std::string("tile '") + c + "' has no solidity class for " + rules_.game);
    }
    switch (it->second) {
      case Solidity::Solid: return kSolid;
      case Solidity::Hazard: return kHazard;
      case Solidity::Platform: return kPlatform;
      case Solidity::Passable: break;
    }
    return kFree;
  }

  Cell at(int r, int c) const { return cells_[static_cast<std::size_t>(r * cols_ + c)]; }
  bool inside(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }
  bool occupiable(int r, int c) const {
    return inside(r, c) && at(r, c) != kSolid && at(r, c) != kHazard;
  }
  bool supported(int r, int c) const {
    if (r + 1 == rows_) return rules_.floor_below_grid;
    const Cell below = at(r + 1, c);
    return below == kSolid || below == kPlatform;
  }
  bool standable(int r, int c) const { return occupiable(r, c) && supported(r, c); }

  // state = (r * cols + c) * modes + mode; mode 0 is ground, 1 + rise * (span + 1) + drift airborne
  int ground(int r, int c) const { return (r * cols_ + c) * modes_; }
  int air(int r, int c, int rise, int drift) const {
    return (r * cols_ + c) * modes_ + 1 + rise * (span_ + 1) + drift;
  }
  void decode(int s, int& r, int& c, int& mode) const {
    mode = s % modes_;
    const int cell = s / modes_;
    r = cell / cols_;
    c = cell % cols_;
  }

  int heuristic(int s) const {
    int r, c, m;
    decode(s, r, c, m);
    return rules_.direction == PlayDirection::LeftToRight ? cols_ - 1 - c : r;
  }

  bool is_start(int r, int c) const {
    if (rules_.direction == PlayDirection::LeftToRight) return c == 0 && standable(r, c);
    return r == rows_ - 1 && standable(r, c);
  }

  bool is_goal(int s) const {
    int r, c, m;
    decode(s, r, c, m);
    if (rules_.direction == PlayDirection::LeftToRight) return m == 0 && c == cols_ - 1;
    return r == 0;
  }

  void successors(int s, std::vector<int>& out) const {
    int r, c, m;
    decode(s, r, c, m);
    if (m == 0) {
      for (int dx : {-1, 1}) {
        const int nc = c + dx;
        if (!occupiable(r, nc)) continue;
        out.push_back(supported(r, nc) ? ground(r, nc) : air(r, nc, 0, 0));
      }
      if (height_ > 0)
        for (int dx : {-1, 0, 1}) {
          const int nc = c + dx;
          if (std::abs(dx) > span_ || !occupiable(r - 1, nc)) continue;
          out.push_back(air(r - 1, nc, height_ - 1, std::abs(dx)));
        }
      return;
    }
    const int rise = (m - 1) / (span_ + 1);
    const int drift = (m - 1) % (span_ + 1);
    if (supported(r, c)) out.push_back(ground(r, c));
    for (int dx : {-1, 0, 1}) {
      const int nd = drift + std::abs(dx);
      if (nd > span_) continue;
      const int nc = c + dx;
      if (rise > 0 && occupiable(r - 1, nc)) out.push_back(air(r - 1, nc, rise - 1, nd));
      if (occupiable(r + 1, nc) && at(r + 1, nc) != kPlatform)
        out.push_back(supported(r + 1, nc) ? ground(r + 1, nc) : air(r + 1, nc, 0, nd));
    }
  }

  PlayPath trace(int s, const std::vector<int>& parent) const {
    PlayPath p;
    p.playable = true;
    for (int cur = s; cur >= 0; cur = parent[static_cast<std::size_t>(cur)]) {
      int r, c, m;
      decode(cur, r, c, m);
      if (p.cells.empty() || p.cells.back() != std::pair{r, c}) p.cells.emplace_back(r, c);
    }
    std::reverse(p.cells.begin(), p.cells.end());
    return p;
  }

  const PlayabilityRules& rules_;
  int rows_, cols_, height_, span_;
  int air_modes_ = 0, modes_ = 1;
  std::vector<Cell> cells_;
};

}  // namespace

PlayPath find_path(const std::vector<std::string>& rows, const PlayabilityRules& rules) {
  return Search(rows, rules).run();
}

PlayPath find_path(const Chunk& chunk, const TileVocab& vocab, const PlayabilityRules& rules) {
  std::vector<std::string> rows(kChunkSide, std::string(kChunkSide, ' '));
  for (std::size_t r = 0; r < kChunkSide; ++r)
    for (std::size_t c = 0; c < kChunkSide; ++c) rows[r][c] = vocab.char_of(chunk.at(r, c));
  return find_path(rows, rules);
}

}  // namespace gmlevel
