#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "gmlevel/cli.hpp"
#include "support.hpp"

using namespace gmlevel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_ok(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) MESSAGE(err.str());
  if (out_text) *out_text = out.str();
  return code;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_SUITE("integration") {
  TEST_CASE("full pipeline on the synthetic corpus") {
    const fs::path dir = testsupport::temp_dir("pipeline");
    const auto sc = testsupport::write_synth_corpus(dir, 2, 40, 17);
    const std::string manifest = sc.manifest.string();
    auto p = [&](const std::string& name) { return (dir / "out" / name).string(); };
    const std::vector<std::string> tiny{"--epochs", "20", "--hidden", "32", "--depth", "2", "--latent", "6",
                                        "--batch", "32", "--log-every", "0"};
    auto with_tiny = [&](std::vector<std::string> a) {
      a.insert(a.end(), tiny.begin(), tiny.end());
      return a;
    };

    std::string text;
    REQUIRE(run_ok({"ingest", "--manifest", manifest, "--dump", p("chunks.jsonl"), "--out", p("ingest.json")}, &text) == 0);
    const json ingest = json::parse(testsupport::read_file(p("ingest.json")));
    CHECK(ingest["chunks"] == 6 * (40 - 15));
    CHECK(ingest["input_dim"].get<std::size_t>() == 256 * ingest["tile_types"].get<std::size_t>());
    CHECK(count_lines(testsupport::read_file(p("chunks.jsonl"))) == 6 * 25);
    CHECK(fs::exists(p("chunks.jsonl") + ".provenance.json"));
    CHECK(text.find("labels manifest") != std::string::npos);

    REQUIRE(run_ok(with_tiny({"train", "--manifest", manifest, "--k", "3", "--out", p("gmvae.json"), "--history",
                              p("history.csv")})) == 0);
    CHECK(count_lines(testsupport::read_file(p("history.csv"))) == 21);
    REQUIRE(run_ok(with_tiny({"train-baseline", "--manifest", manifest, "--k", "3", "--restarts", "2", "--out",
                              p("vaegmm.json")})) == 0);

    for (const std::string model : {p("gmvae.json"), p("vaegmm.json")}) {
      CAPTURE(model);
      REQUIRE(run_ok({"generate", "--model", model, "--component", "1", "--n", "3", "--seed", "4", "--paths",
                      "--out", p("gen.txt")}) == 0);
      const std::string gen = testsupport::read_file(p("gen.txt"));
      CHECK(count_lines(gen) >= 48);

      REQUIRE(run_ok({"encode", "--model", model, "--manifest", manifest, "--out", p("latents.csv")}) == 0);
      const std::string csv = testsupport::read_file(p("latents.csv"));
      CHECK(count_lines(csv) == 1 + 150);
      CHECK(csv.rfind("chunk_id,level_type,label,z0", 0) == 0);

      REQUIRE(run_ok({"eval-cluster", "--model", model, "--manifest", manifest, "--out", p("cluster.json"), "--csv",
                      p("cluster.csv")}) == 0);
      const json cl = json::parse(testsupport::read_file(p("cluster.json")));
      CHECK(cl["balanced_accuracy"].get<double>() >= 1.0 / 3 - 1e-12);
      CHECK(cl["balanced_accuracy"].get<double>() <= 1.0);
      CHECK(cl["provenance"]["command"] == "eval-cluster");

      REQUIRE(run_ok({"eval-disentangle", "--model", model, "--seed", "3", "--train-per", "30", "--valid-per", "20",
                      "--probe-hidden", "16", "--probe-epochs", "5", "--out", p("dis.json"), "--csv", p("dis.csv")}) == 0);
      const json dis = json::parse(testsupport::read_file(p("dis.json")));
      CHECK(dis["component_accuracy"].size() == 3);
      CHECK(dis["p70"].get<double>() >= dis["p80"].get<double>());
      CHECK(dis["p80"].get<double>() >= dis["p90"].get<double>());

      REQUIRE(run_ok({"eval-playability", "--model", model, "--seed", "3", "--budget", "60", "--out", p("play.json"),
                      "--csv", p("play.csv")}) == 0);
      const json play = json::parse(testsupport::read_file(p("play.json")));
      CHECK(play["total"] == 60);
      CHECK(play["fraction"].get<double>() >= 0.0);

      REQUIRE(run_ok({"densities", "--model", model, "--n", "20", "--seed", "2", "--out", p("dens.csv"), "--json",
                      p("dens.json")}) == 0);
      {
        // a component the model never assigns has no densities; that is a data error, not a crash
        std::ostringstream out, err;
        const int code = cli::run({"densities", "--model", model, "--source", "assigned", "--manifest", manifest,
                                   "--out", p("dens_assigned.csv")},
                                  out, err);
        if (code == 0)
          CHECK(count_lines(testsupport::read_file(p("dens_assigned.csv"))) == 4);
        else
          CHECK((code == 2 && err.str().find("EmptyComponent") != std::string::npos));
      }
      REQUIRE(run_ok({"chart", "--densities", p("dens.csv"), "--out-dir", p("charts")}) == 0);
      for (int c = 0; c < 3; ++c) {
        const std::string svg = testsupport::read_file(fs::path(p("charts")) / ("component_" + std::to_string(c) + ".svg"));
        CHECK(svg.find("<metadata>") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
      }
    }
  }

  TEST_CASE("sweep over two component counts and both families") {
    const fs::path dir = testsupport::temp_dir("sweep");
    const auto sc = testsupport::write_synth_corpus(dir, 1, 30, 3);
    REQUIRE(run_ok({"sweep", "--manifest", sc.manifest.string(), "--ks", "2,3", "--seeds", "1,2", "--epochs", "3",
                    "--hidden", "8", "--depth", "1", "--latent", "3", "--batch", "32", "--log-every", "0",
                    "--restarts", "1", "--train-per", "20", "--valid-per", "10", "--probe-hidden", "8",
                    "--probe-epochs", "3", "--out", (dir / "sweep.csv").string(), "--json",
                    (dir / "sweep.json").string()}) == 0);
    const std::string csv = testsupport::read_file(dir / "sweep.csv");
    CHECK(csv.rfind("family,k,p70,p80,p90\n", 0) == 0);
    CHECK(count_lines(csv) == 1 + 4);
    const json j = json::parse(testsupport::read_file(dir / "sweep.json"));
    CHECK(j["rows"].size() == 4);
    CHECK(j["rows"][0]["per_seed"].size() == 2);
  }
}
