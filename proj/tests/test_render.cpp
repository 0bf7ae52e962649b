#include <doctest.h>

#include <cmath>
#include <regex>

#include "gmlevel/error.hpp"
#include "gmlevel/evaluation.hpp"
#include "gmlevel/render.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gmlevel;
using oracles::balanced_xml;

namespace {

TileDensityMatrix sample_matrix() {
  TileDensityMatrix m;
  m.tiles = "<EX";
  m.mean_counts = Matrix(2, 3);
  m.normalized = Matrix(2, 3);
  m.normalized(0, 0) = 1.0;
  m.normalized(0, 1) = 0.0;
  m.normalized(0, 2) = 0.5;
  m.normalized(1, 0) = 0.25;
  m.normalized(1, 1) = 1.0;
  m.normalized(1, 2) = 1.0;
  m.chunks_per_component = {4, 4};
  return m;
}

std::vector<std::pair<std::string, double>> bars(const std::string& svg) {
  std::vector<std::pair<std::string, double>> out;
  const std::regex re(R"re(class="bar" data-tile="([^"]*)" data-value="([0-9.]+)")re");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it)
    out.emplace_back((*it)[1].str(), std::stod((*it)[2].str()));
  return out;
}

}  // namespace

TEST_SUITE("render") {
  TEST_CASE("ASCII rendering round trips through the chunk dump") {
    Rng rng(1);
    const TileVocab v("smb", "-<>?EQSX", '-');
    Chunk c;
    for (auto& t : c.tiles) t = static_cast<std::uint8_t>(rng.index(v.size()));
    const std::string text = render_chunk_ascii(c, v);
    CHECK(text.size() == 16 * 17);
    CHECK(std::count(text.begin(), text.end(), '\n') == 16);
    const LevelGrid g = parse_level(text);
    CHECK(g.rows == 16);
    CHECK(g.cols == 16);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t col = 0; col < 16; ++col) CHECK(v.id_of(g.at(r, col)) == c.at(r, col));

    const Chunk empty;
    const std::string blank = render_chunk_ascii(empty, v);
    for (std::size_t r = 0; r < 16; ++r) CHECK(blank.substr(r * 17, 17) == std::string(16, '-') + "\n");
  }

  TEST_CASE("path overlay marks exactly the path cells") {
    const TileVocab v("smb", "-X", '-');
    const Chunk c;
    const std::string s = render_chunk_with_path(c, v, {{15, 0}, {14, 1}, {20, 20}});
    CHECK(std::count(s.begin(), s.end(), 'P') == 2);
    CHECK(s[15 * 17 + 0] == 'P');
    CHECK(s[14 * 17 + 1] == 'P');
  }

  TEST_CASE("radial chart structure") {
    const auto m = sample_matrix();
    const std::string svg = radial_chart_svg(m, 0);
    CHECK(balanced_xml(svg));
    CHECK(svg.rfind("<?xml", 0) == 0);
    const auto b = bars(svg);
    REQUIRE(b.size() == 3);
    CHECK(b[0].first == "&lt;");
    CHECK(b[1].first == "E");
    CHECK(b[2].first == "X");
    CHECK(b[0].second == 1.0);
    CHECK(b[1].second == 0.0);
    CHECK(b[2].second == 0.5);
    CHECK(svg.find("class=\"caption\"") != std::string::npos);
    CHECK(svg.find(">0</text>") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 5);
  }

  TEST_CASE("a full bar reaches the rim and a zero bar collapses") {
    const auto m = sample_matrix();
    RadialChartStyle st;
    const std::string svg = radial_chart_svg(m, 0, st);
    // first bar: full length, centred at twelve o'clock; its arc radius equals max_radius
    CHECK(svg.find("A 150.000 150.000") != std::string::npos);
    // second bar: zero length, arc radius 0
    CHECK(svg.find("A 0.000 0.000") != std::string::npos);
    const double cx = st.size / 2, cy = st.size / 2 - 10;
    const double half = (2 * M_PI / 3) * st.bar_fill / 2;
    char expect[64];
    std::snprintf(expect, sizeof expect, "L %.3f %.3f", cx + 150 * std::cos(-M_PI / 2 - half), cy + 150 * std::sin(-M_PI / 2 - half));
    CHECK(svg.find(expect) != std::string::npos);
  }

  TEST_CASE("one chart per component and error cases") {
    const auto m = sample_matrix();
    const auto charts = radial_charts(m);
    REQUIRE(charts.size() == 2);
    CHECK(charts[1].find(">1</text>") != std::string::npos);
    CHECK_THROWS_AS(radial_chart_svg(m, 2), Error);
    CHECK_THROWS_AS(radial_charts(TileDensityMatrix{}), Error);
    CHECK(xml_escape("a<b>&\"'") == "a&lt;b&gt;&amp;&quot;&apos;");
  }

  TEST_CASE("charts from a density matrix of generated groups") {
    const TileVocab v("g", "-?X", '-');
    std::vector<std::vector<Chunk>> groups(2, std::vector<Chunk>(3));
    for (auto& c : groups[0]) c.at(0, 0) = 1;
    for (auto& c : groups[1]) c.at(0, 0) = 2, c.at(0, 1) = 2;
    const auto m = tile_densities(groups, v);
    const auto b0 = bars(radial_chart_svg(m, 0)), b1 = bars(radial_chart_svg(m, 1));
    CHECK(b0 == std::vector<std::pair<std::string, double>>{{"?", 1.0}, {"X", 0.0}});
    CHECK(b1 == std::vector<std::pair<std::string, double>>{{"?", 0.0}, {"X", 1.0}});
  }
}
