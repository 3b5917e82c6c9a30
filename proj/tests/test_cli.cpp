#include <catch_amalgamated.hpp>

#include <fstream>

#include "melsmooth/augment.hpp"
#include "melsmooth/featureset.hpp"
#include "melsmooth/wav.hpp"
#include "support.hpp"

using namespace melsmooth;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MELSMOOTH_CLI_PATH;

// Small shared corpus: 3 utterances, extracted once.
struct CliFixture {
  fs::path root = testsupport::fresh_dir("cli");
  fs::path features = root / "features";

  CliFixture() {
    const fs::path manifest = testsupport::write_demo_corpus(root / "wavs", 3);
    const auto r = testsupport::run_cli(
        kCli, "extract " + manifest.string() + " --out " + features.string());
    if (r.exit_code != 0) throw std::runtime_error("fixture extract failed: " + r.output);
  }
};

CliFixture& fixture() {
  static CliFixture f;
  return f;
}

}  // namespace

TEST_CASE("cli kernel") {
  SECTION("3x3 table with center 0.25") {
    const auto r = testsupport::run_cli(kCli, "kernel 3 3");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("0.25\t0.5\t0.25") == std::string::npos);  // rows are products
    CHECK(r.output.find("0.125\t0.25\t0.125") != std::string::npos);
  }
  SECTION("1x1 single cell") {
    const auto r = testsupport::run_cli(kCli, "kernel 1 1");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("\n1\n") != std::string::npos);
  }
  SECTION("even size is a usage error") {
    const auto r = testsupport::run_cli(kCli, "kernel 4 3");
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("sizes must be odd") != std::string::npos);
  }
}

TEST_CASE("cli extract") {
  SECTION("happy path produced one AFV1 per entry") {
    auto& f = fixture();
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(f.features))
      if (e.path().extension() == ".afv1") ++count;
    CHECK(count == 3);
    const auto feat = featureset::read_afv1((f.features / "utt000.afv1").string());
    CHECK(feat.n_dims == 102);
    CHECK(feat.n_frames > 0);
  }
  SECTION("wrong sample rate fails that entry and exits nonzero") {
    const auto dir = testsupport::fresh_dir("cli_badrate");
    Waveform w = testsupport::sine(200.0, 0.3, 0.5, 16000);
    wav::write_wav(w, (dir / "bad.wav").string());
    std::ofstream m(dir / "m.jsonl");
    m << "{\"id\": \"bad\", \"wav_path\": \"" << (dir / "bad.wav").string() << "\"}\n";
    m.close();
    const auto r = testsupport::run_cli(
        kCli, "extract " + (dir / "m.jsonl").string() + " --out " + (dir / "out").string());
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("sample rate 16000 != 24000") != std::string::npos);
  }
  SECTION("empty manifest exits nonzero") {
    const auto dir = testsupport::fresh_dir("cli_empty");
    std::ofstream(dir / "m.jsonl").close();
    const auto r = testsupport::run_cli(
        kCli, "extract " + (dir / "m.jsonl").string() + " --out " + (dir / "out").string());
    CHECK(r.exit_code != 0);
    CHECK(r.output.find("empty manifest") != std::string::npos);
  }
}

TEST_CASE("cli stats and normalize") {
  auto& f = fixture();
  const fs::path stats = f.root / "stats.json";
  const auto r1 = testsupport::run_cli(
      kCli, "stats --features " + f.features.string() + " --out " + stats.string());
  REQUIRE(r1.exit_code == 0);
  const auto r2 = testsupport::run_cli(
      kCli, "normalize --features " + f.features.string() + " --stats " + stats.string() +
                " --out " + (f.root / "norm").string());
  REQUIRE(r2.exit_code == 0);
  // Re-running stats on normalized features should give ~zero mean, ~unit std.
  const auto r3 = testsupport::run_cli(
      kCli, "stats --features " + (f.root / "norm").string() + " --out " +
                (f.root / "norm_stats.json").string());
  REQUIRE(r3.exit_code == 0);
  const auto norm_stats = featureset::load_stats((f.root / "norm_stats.json").string());
  const auto sd = norm_stats.std_dev();
  for (std::size_t d = 0; d < norm_stats.dims; ++d) {
    CHECK(std::abs(norm_stats.mean[d]) < 1e-4);
    CHECK(sd[d] == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("cli augment") {
  auto& f = fixture();

  SECTION("step 0 outputs are byte-identical to inputs") {
    const fs::path out = f.root / "aug0";
    const auto r = testsupport::run_cli(
        kCli, "augment --features " + f.features.string() + " --out " + out.string() +
                  " --step 0 --total 600000");
    REQUIRE(r.exit_code == 0);
    for (const auto& e : fs::directory_iterator(f.features))
      if (e.path().extension() == ".afv1")
        CHECK(testsupport::slurp(out / e.path().filename()) == testsupport::slurp(e.path()));
  }
  SECTION("same command twice gives identical outputs and logs") {
    const std::string cmd = "augment --features " + f.features.string() +
                            " --step 500000 --total 600000 --seed 42 --out ";
    const fs::path a = f.root / "aug_a", b = f.root / "aug_b";
    REQUIRE(testsupport::run_cli(kCli, cmd + a.string()).exit_code == 0);
    REQUIRE(testsupport::run_cli(kCli, cmd + b.string()).exit_code == 0);
    for (const auto& e : fs::directory_iterator(a))
      CHECK(testsupport::slurp(e.path()) == testsupport::slurp(b / e.path().filename()));
  }
  SECTION("forced sizes equal the library smoothing") {
    const fs::path out = f.root / "aug_forced";
    const auto r = testsupport::run_cli(
        kCli, "augment --features " + f.features.string() + " --out " + out.string() +
                  " --lt 5 --lf 3");
    REQUIRE(r.exit_code == 0);
    const auto kernel = augment::make_kernel(5, 3);
    for (const auto& e : fs::directory_iterator(f.features)) {
      if (e.path().extension() != ".afv1") continue;
      auto feat = featureset::read_afv1(e.path().string());
      const auto smoothed = augment::smooth_mel(featureset::mel_of(feat), kernel);
      for (std::size_t t = 0; t < feat.n_frames; ++t)
        for (std::size_t m = 0; m < featureset::kMelDims; ++m)
          feat.at(t, m) = static_cast<float>(smoothed.grid.at(t, m));
      CHECK(testsupport::slurp(out / e.path().filename()) == featureset::encode_afv1(feat));
    }
  }
  SECTION("MELSMOOTH_SEED is honored and --seed overrides it") {
    const std::string base = "augment --features " + f.features.string() +
                             " --step 500000 --total 600000 --out ";
    const fs::path env_dir = f.root / "aug_env", seed_dir = f.root / "aug_seed";
    REQUIRE(testsupport::run_cli("MELSMOOTH_SEED=42 " + kCli, base + env_dir.string())
                .exit_code == 0);
    REQUIRE(testsupport::run_cli("MELSMOOTH_SEED=99 " + kCli,
                                 base + seed_dir.string() + " --seed 42")
                .exit_code == 0);
    CHECK(testsupport::slurp(env_dir / "augment_log.tsv") ==
          testsupport::slurp(seed_dir / "augment_log.tsv"));
    for (const auto& e : fs::directory_iterator(env_dir))
      CHECK(testsupport::slurp(e.path()) == testsupport::slurp(seed_dir / e.path().filename()));
  }
}

TEST_CASE("cli msd and sweep") {
  auto& f = fixture();

  SECTION("msd of a directory against itself is zero") {
    const auto r = testsupport::run_cli(kCli, "msd --ref " + f.features.string() +
                                                  " --other " + f.features.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("# mean\n0\n") != std::string::npos);
  }
  SECTION("sweep means increase across (3,1), (5,1), (5,3)") {
    const auto r = testsupport::run_cli(
        kCli, "sweep --ref " + f.features.string() + " --sizes 3x1,5x1,5x3");
    REQUIRE(r.exit_code == 0);
    std::istringstream in(r.output);
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> means;
    while (std::getline(in, line) && line[0] != '#') {
      std::istringstream row(line);
      std::string lt, lf, mean;
      row >> lt >> lf >> mean;
      means.push_back(std::stod(mean));
    }
    REQUIRE(means.size() == 3);
    CHECK(means[0] < means[1]);
    CHECK(means[1] < means[2]);
  }
}

TEST_CASE("cli config file") {
  auto& f = fixture();
  const fs::path cfg = f.root / "config.json";
  {
    std::ofstream out(cfg);
    out << "{\"augment\": {\"seed\": 42, \"step\": 500000, \"total\": 600000}}\n";
  }
  const fs::path from_cfg = f.root / "aug_cfg", from_flags = f.root / "aug_flags";
  REQUIRE(testsupport::run_cli(kCli, "--config " + cfg.string() + " augment --features " +
                                         f.features.string() + " --out " + from_cfg.string())
              .exit_code == 0);
  REQUIRE(testsupport::run_cli(kCli, "augment --features " + f.features.string() +
                                         " --step 500000 --total 600000 --seed 42 --out " +
                                         from_flags.string())
              .exit_code == 0);
  CHECK(testsupport::slurp(from_cfg / "augment_log.tsv") ==
        testsupport::slurp(from_flags / "augment_log.tsv"));

  SECTION("flags override config values") {
    const fs::path override_dir = f.root / "aug_override";
    REQUIRE(testsupport::run_cli(kCli, "--config " + cfg.string() + " augment --features " +
                                           f.features.string() + " --step 0 --out " +
                                           override_dir.string())
                .exit_code == 0);
    // step 0 forces pass-through regardless of the config's step.
    for (const auto& e : fs::directory_iterator(f.features))
      if (e.path().extension() == ".afv1")
        CHECK(testsupport::slurp(override_dir / e.path().filename()) ==
              testsupport::slurp(e.path()));
  }
}
