#include <doctest.h>

#include <map>
#include <sstream>

#include "gmlevel/error.hpp"
#include "gmlevel/evaluation.hpp"
#include "support.hpp"

using namespace gmlevel;

namespace {

double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += cost(i, a[i]);
  return s;
}

std::vector<std::optional<std::string>> typed(const std::vector<std::string>& names) {
  return {names.begin(), names.end()};
}

Chunk uniform_random_chunk(std::size_t tiles, Rng& rng) {
  Chunk c;
  for (auto& t : c.tiles) t = static_cast<std::uint8_t>(rng.index(tiles));
  return c;
}

ProbeConfig small_probe() {
  ProbeConfig p;
  p.train_per_component = 150;
  p.validation_per_component = 100;
  p.hidden_width = 32;
  p.epochs = 30;
  return p;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("Hungarian matches exhaustive search") {
    Rng rng(1);
    for (std::size_t n = 1; n <= 7; ++n)
      for (int trial = 0; trial < 40; ++trial) {
        Matrix cost(n, n);
        for (double& c : cost.data) c = trial % 2 ? std::floor(rng.uniform() * 4) : rng.normal();
        const auto h = hungarian_min_cost(cost);
        const auto e = exhaustive_min_cost(cost);
        std::vector<std::size_t> sorted = h;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
        CHECK(assignment_cost(cost, h) == doctest::Approx(assignment_cost(cost, e)).epsilon(1e-12));
      }
    CHECK_THROWS_AS(hungarian_min_cost(Matrix(2, 3)), Error);
  }

  TEST_CASE("permuted component ids score perfectly") {
    std::vector<std::string> names;
    std::vector<std::size_t> comps;
    const std::size_t perm[] = {4, 0, 2};
    const char* types[] = {"jumpy", "overworld", "underworld"};
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < 10 * (t + 1); ++i) {
        names.push_back(types[t]);
        comps.push_back(perm[t]);
      }
    const auto labels = typed(names);
    const ClusterReport r = clustering_accuracy(comps, labels, 5);
    CHECK(r.types == std::vector<std::string>{"jumpy", "overworld", "underworld"});
    CHECK(r.balanced_accuracy == 1.0);
    CHECK(r.overall_accuracy == 1.0);
    CHECK(r.assignment[0] == std::optional<std::size_t>(4));
    CHECK(r.assignment[1] == std::optional<std::size_t>(0));
    CHECK(r.confusion.size() == 5);
    CHECK(r.confusion[2][2] == 30);
  }

  TEST_CASE("balanced accuracy weights types equally") {
    // 90 overworld chunks all in component 0, 10 jumpy chunks split 5/5
    std::vector<std::string> names;
    std::vector<std::size_t> comps;
    for (int i = 0; i < 90; ++i) names.push_back("o"), comps.push_back(0);
    for (int i = 0; i < 10; ++i) names.push_back("j"), comps.push_back(i < 5 ? 0 : 1);
    const auto labels = typed(names);
    const ClusterReport r = clustering_accuracy(comps, labels, 2);
    CHECK(r.balanced_accuracy == doctest::Approx((1.0 + 0.5) / 2));
    CHECK(r.overall_accuracy == doctest::Approx(95.0 / 100));
  }

  TEST_CASE("fewer components than types leaves a type unmatched") {
    std::vector<std::string> names{"a", "a", "b", "b", "c", "c"};
    std::vector<std::size_t> comps{0, 0, 1, 1, 1, 0};
    const auto labels = typed(names);
    const ClusterReport r = clustering_accuracy(comps, labels, 2);
    CHECK(std::count(r.assignment.begin(), r.assignment.end(), std::nullopt) == 1);
    CHECK(r.balanced_accuracy == doctest::Approx(2.0 / 3));
  }

  TEST_CASE("random assignments sit near chance") {
    Rng rng(2);
    std::vector<std::string> names;
    std::vector<std::size_t> comps;
    for (int i = 0; i < 6000; ++i) {
      names.push_back("t" + std::to_string(rng.index(3)));
      comps.push_back(rng.index(3));
    }
    const auto labels = typed(names);
    CHECK(std::abs(clustering_accuracy(comps, labels, 3).balanced_accuracy - 1.0 / 3) < 0.03);
  }

  TEST_CASE("clustering input errors") {
    const std::vector<std::size_t> comps{0, 1};
    std::vector<std::optional<std::string>> labels{"a", std::nullopt};
    CHECK_THROWS_AS(clustering_accuracy(comps, labels, 2), Error);
    labels = {"a"};
    CHECK_THROWS_AS(clustering_accuracy(comps, labels, 2), Error);
    labels = {"a", "b"};
    CHECK_THROWS_AS(clustering_accuracy(comps, labels, 1), Error);
  }

  TEST_CASE("disjoint components are fully disentangled") {
    const TileVocab v("g", "-ABC", '-');
    const ComponentGenerator gen = [](std::size_t comp, std::size_t n, Rng& rng) {
      std::vector<Chunk> out(n);
      for (auto& c : out)
        for (auto& t : c.tiles) t = rng.uniform() < 0.3 ? static_cast<std::uint8_t>(comp + 1) : 0;
      return out;
    };
    Rng rng(3);
    const auto rep = disentanglement(gen, 3, v, rng, small_probe());
    REQUIRE(rep.component_accuracy.size() == 3);
    for (double a : rep.component_accuracy) CHECK(a == 1.0);
    CHECK(rep.p90 == 1.0);
    CHECK(rep.probe_epochs >= 1);
    CHECK(rep.probe.find("patience 5") != std::string::npos);
  }

  TEST_CASE("identical components are indistinguishable") {
    // one run can favour a class; averaged over seeds every component sits at chance
    const std::size_t k = 4, seeds = 10;
    const TileVocab v("g", "-X", '-');
    const ComponentGenerator gen = [](std::size_t, std::size_t n, Rng& rng) {
      std::vector<Chunk> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(uniform_random_chunk(2, rng));
      return out;
    };
    std::vector<double> mean(k, 0.0);
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(100 + s);
      auto probe = small_probe();
      probe.seed = 200 + s;
      const auto rep = disentanglement(gen, k, v, rng, probe);
      for (std::size_t c = 0; c < k; ++c) mean[c] += rep.component_accuracy[c] / seeds;
    }
    for (double a : mean) CHECK(std::abs(a - 1.0 / k) <= 0.1);
  }

  TEST_CASE("disentanglement is reproducible and validates its generator") {
    const TileVocab v("g", "-X", '-');
    const ComponentGenerator gen = [](std::size_t comp, std::size_t n, Rng& rng) {
      std::vector<Chunk> out;
      for (std::size_t i = 0; i < n; ++i) {
        Chunk c = uniform_random_chunk(2, rng);
        c.at(comp, 0) = 1;
        out.push_back(c);
      }
      return out;
    };
    Rng a(5), b(5);
    CHECK(disentanglement(gen, 3, v, a, small_probe()).component_accuracy ==
          disentanglement(gen, 3, v, b, small_probe()).component_accuracy);
    const ComponentGenerator short_gen = [](std::size_t, std::size_t n, Rng&) { return std::vector<Chunk>(n - 1); };
    CHECK_THROWS_AS(disentanglement(short_gen, 2, v, a, small_probe()), Error);
    CHECK_THROWS_AS(disentanglement(gen, 1, v, a, small_probe()), Error);
    const std::vector<double> acc{0.95, 0.85, 0.75, 0.5};
    CHECK(proportion_at_least(acc, 0.7) == 0.75);
    CHECK(proportion_at_least(acc, 0.8) == 0.5);
    CHECK(proportion_at_least(acc, 0.9) == 0.25);
    CHECK(proportion_at_least(acc, 0.95) == 0.25);
  }

  TEST_CASE("tile densities agree with a direct tally") {
    const TileVocab v("g", "-?EX", '-');
    Rng rng(6);
    std::vector<std::vector<Chunk>> groups(3);
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t i = 0; i < 5 + g; ++i) {
        Chunk c;
        for (auto& t : c.tiles) t = rng.uniform() < 0.2 * static_cast<double>(g) ? static_cast<std::uint8_t>(1 + rng.index(3)) : 0;
        groups[g].push_back(c);
      }
    const TileDensityMatrix m = tile_densities(groups, v);
    CHECK(m.tiles == "?EX");
    CHECK(m.components() == 3);
    CHECK(m.chunks_per_component == std::vector<std::size_t>{5, 6, 7});

    std::map<char, double> col_max;
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t j = 0; j < 3; ++j) {
        double count = 0;
        for (const auto& c : groups[g])
          for (auto t : c.tiles) count += v.char_of(t) == m.tiles[j];
        const double mean = count / static_cast<double>(groups[g].size());
        CHECK(m.mean_counts(g, j) == doctest::Approx(mean));
        col_max[m.tiles[j]] = std::max(col_max[m.tiles[j]], mean);
      }
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(m.normalized(g, j) >= 0.0);
        CHECK(m.normalized(g, j) <= 1.0);
        CHECK(m.normalized(g, j) == doctest::Approx(m.mean_counts(g, j) / col_max[m.tiles[j]]));
      }
    for (std::size_t g = 0; g < 3; ++g) CHECK(m.normalized(0, g) == 0.0);

    groups[1].clear();
    CHECK_THROWS_AS(tile_densities(groups, v), Error);
  }

  TEST_CASE("playability suite counts per component") {
    const TileVocab v("smb", "-X", '-');
    const auto rules = PlayabilityRules::for_game("smb");
    const ComponentGenerator gen = [](std::size_t comp, std::size_t n, Rng&) {
      Chunk c;
      for (std::size_t col = 0; col < 16; ++col) c.at(15, col) = 1;
      if (comp == 1)
        for (std::size_t r = 0; r < 16; ++r) c.at(r, 8) = 1;
      return std::vector<Chunk>(n, c);
    };
    Rng rng(7);
    const auto rep = playability_suite(gen, 3, v, rules, rng, 100);
    CHECK(rep.per_component == 33);
    CHECK(rep.total == 99);
    CHECK(rep.playable_per_component == std::vector<std::size_t>{33, 0, 33});
    CHECK(rep.fraction == doctest::Approx(66.0 / 99));
    CHECK_THROWS_AS(playability_suite(gen, 3, v, rules, rng, 2), Error);
  }

  TEST_CASE("latent export round trip") {
    const TileVocab v("g", "-X", '-');
    std::vector<Chunk> chunks(2);
    chunks[0].source = {"lvl,1", 0, 3};
    chunks[0].level_type = "overworld";
    chunks[1].source = {"lvl2", -2, 0};
    std::vector<EncodedChunk> enc{{{0.1, -2.5e-300}, 1}, {{1.0 / 3, 7.0}, 0}};
    const std::string csv = export_latents_csv(enc, chunks);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "chunk_id,level_type,label,z0,z1");
    std::getline(ss, line);
    CHECK(line.rfind("\"lvl,1:0:3\",overworld,1,", 0) == 0);
    std::getline(ss, line);
    const auto f = split_csv_line(line);
    REQUIRE(f.size() == 5);
    CHECK(f[0] == "lvl2:-2:0");
    CHECK(f[1].empty());
    CHECK(f[2] == "0");
    CHECK(std::stod(f[3]) == 1.0 / 3);
    CHECK(std::stod(f[4]) == 7.0);
    CHECK(csv_field("a\"b") == "\"a\"\"b\"");
    CHECK(csv_field("plain") == "plain");
  }
}
