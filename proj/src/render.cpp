#include "gmlevel/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "gmlevel/error.hpp"

namespace gmlevel {

std::string render_chunk_ascii(const Chunk& chunk, const TileVocab& vocab) {
  std::string out;
  out.reserve(kChunkCells + kChunkSide);
  for (std::size_t r = 0; r < kChunkSide; ++r) {
    for (std::size_t c = 0; c < kChunkSide; ++c) out += vocab.char_of(chunk.at(r, c));
    out += '\n';
  }
  return out;
}

std::string render_chunk_with_path(const Chunk& chunk, const TileVocab& vocab,
                                   const std::vector<std::pair<int, int>>& path) {
  std::string out = render_chunk_ascii(chunk, vocab);
  for (const auto& [r, c] : path) {
    if (r < 0 || c < 0 || r >= static_cast<int>(kChunkSide) || c >= static_cast<int>(kChunkSide)) continue;
    out[static_cast<std::size_t>(r) * (kChunkSide + 1) + static_cast<std::size_t>(c)] = 'P';
  }
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", std::abs(v) < 5e-4 ? 0.0 : v);
  return buf;
}

}  // namespace

std::string radial_chart_svg(const TileDensityMatrix& m, std::size_t component, const RadialChartStyle& style) {
  if (m.components() == 0 || m.tiles.empty())
    throw Error(ErrorCode::EmptyMatrix, "density matrix has no components or no tile columns");
  if (component >= m.components())
    throw Error(ErrorCode::ComponentOutOfRange, "component " + std::to_string(component));
  const double cx = style.size / 2.0, cy = style.size / 2.0 - 10.0;
  const double slot = 2.0 * std::numbers::pi / static_cast<double>(m.tiles.size());
  const double half = slot * style.bar_fill / 2.0;

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(style.size) + "\" height=\"" +
         num(style.size) + "\" viewBox=\"0 0 " + num(style.size) + " " + num(style.size) + "\">\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "  <circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(style.max_radius) +
         "\" fill=\"none\" stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t j = 0; j < m.tiles.size(); ++j) {
    const double value = std::clamp(m.normalized(component, j), 0.0, 1.0);
    const double radius = value * style.max_radius;
    const double angle = -std::numbers::pi / 2.0 + slot * static_cast<double>(j);
    const double a0 = angle - half, a1 = angle + half;
    const std::string tile = xml_escape(std::string(1, m.tiles[j]));
    svg += "  <path class=\"bar\" data-tile=\"" + tile + "\" data-value=\"" + num(value) + "\" d=\"M " +
           num(cx) + " " + num(cy) + " L " + num(cx + radius * std::cos(a0)) + " " +
           num(cy + radius * std::sin(a0)) + " A " + num(radius) + " " + num(radius) + " 0 " + (a1 - a0 > std::numbers::pi ? "1" : "0") + " 1 " +
           num(cx + radius * std::cos(a1)) + " " + num(cy + radius * std::sin(a1)) +
           " Z\" fill=\"#4477aa\" stroke=\"#223355\" stroke-width=\"0.5\"/>\n";
    const double lr = style.max_radius + 16.0;
    svg += "  <text class=\"label\" x=\"" + num(cx + lr * std::cos(angle)) + "\" y=\"" +
           num(cy + lr * std::sin(angle) + 5.0) +
           "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">" + tile + "</text>\n";
  }
  svg += "  <text class=\"caption\" x=\"" + num(cx) + "\" y=\"" + num(style.size - 12.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         std::to_string(component) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::vector<std::string> radial_charts(const TileDensityMatrix& m, const RadialChartStyle& style) {
  if (m.components() == 0 || m.tiles.empty())
    throw Error(ErrorCode::EmptyMatrix, "density matrix has no components or no tile columns");
  std::vector<std::string> out;
  for (std::size_t c = 0; c < m.components(); ++c) out.push_back(radial_chart_svg(m, c, style));
  return out;
}

}  // namespace gmlevel
