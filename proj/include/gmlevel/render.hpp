#ifndef GMLEVEL_RENDER_HPP
#define GMLEVEL_RENDER_HPP

#include <string>
#include <utility>
#include <vector>

#include "gmlevel/corpus.hpp"
#include "gmlevel/evaluation.hpp"

namespace gmlevel {

/// 16 lines of 16 tile characters, each ending in '\n'.
std::string render_chunk_ascii(const Chunk& chunk, const TileVocab& vocab);

/// Same with 'P' drawn over the cells of `path` (row, column).
std::string render_chunk_with_path(const Chunk& chunk, const TileVocab& vocab,
                                   const std::vector<std::pair<int, int>>& path);

struct RadialChartStyle {
  double size = 420.0;        ///< square canvas side
  double max_radius = 150.0;  ///< radius of a bar with normalized density 1
  double bar_fill = 0.8;      ///< fraction of the angular slot a bar covers
};

/// One SVG document for one component: a bar per retained tile at equal
/// angles in vocabulary order starting at twelve o'clock, tile labels around
/// the rim and the component index underneath. Throws EmptyMatrix.
std::string radial_chart_svg(const TileDensityMatrix& m, std::size_t component,
                             const RadialChartStyle& style = {});
std::vector<std::string> radial_charts(const TileDensityMatrix& m, const RadialChartStyle& style = {});

std::string xml_escape(std::string_view s);

}  // namespace gmlevel

#endif  // GMLEVEL_RENDER_HPP
