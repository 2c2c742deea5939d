#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "devmf/data.hpp"
#include "devmf/eval.hpp"
#include "devmf/optimizer.hpp"
#include "devmf/serialize.hpp"

using namespace devmf;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run devmf_run(std::vector<std::string> args) {
  args.insert(args.begin(), "devmf");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("DEVMF_TEST_TMP");
  const fs::path root = env != nullptr ? fs::path(env) : fs::temp_directory_path() / "devmf_cli_tests";
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Value of `key=` in a space-separated status line.
double field(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(line.substr(pos + key.size() + 1));
}

std::string synth_noiseless(const fs::path& dir) {
  const auto r = devmf_run({"synth", "--sizes", "20x20", "--rank", "2", "--dev-rank", "2", "--observed-fraction",
                            "0.8", "--noise", "none", "--seed", "2", "--out-dir", dir.string()});
  REQUIRE(r.code == 0);
  return (dir / "observed.csv").string();
}

std::vector<std::string> noiseless_train_flags(const std::string& train, const fs::path& dir) {
  return {"train", "--train", train, "--model", "biased-mf", "--rank", "2", "--epochs", "200", "--lr", "0.1",
          "--sigma-u2", "1e6", "--sigma-v2", "1e6", "--seed", "4", "--model-out", (dir / "model.txt").string(),
          "--metrics-out", (dir / "metrics.csv").string()};
}

}  // namespace

TEST_CASE("split command") {
  const fs::path dir = scratch("split");
  std::string rows;
  for (int k = 0; k < 100; ++k) rows += std::to_string(k / 10) + "," + std::to_string(k % 10) + "," + std::to_string(k) + "\n";
  spit(dir / "all.csv", rows);

  const auto a = devmf_run({"split", "--input", (dir / "all.csv").string(), "--seed", "5", "--out-dir", (dir / "a").string()});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("train=81 val=9 test=10") != std::string::npos);
  CHECK(fs::exists(dir / "a" / "split.manifest"));
  const auto b = devmf_run({"split", "--input", (dir / "all.csv").string(), "--seed", "5", "--out-dir", (dir / "b").string()});
  REQUIRE(b.code == 0);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "split.manifest"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  spit(dir / "ten.csv", "1,1,1\n1,2,1\n1,3,1\n2,1,1\n2,2,1\n2,3,1\n3,1,1\n3,2,1\n3,3,1\n4,4,1\n");
  const auto bad = devmf_run({"split", "--input", (dir / "ten.csv").string(), "--test-fraction", "0.99", "--out-dir",
                              (dir / "c").string()});
  CHECK(bad.code != 0);
  CHECK(bad.err.find("error") != std::string::npos);

  CHECK(devmf_run({"split", "--input", (dir / "missing.csv").string(), "--out-dir", (dir / "d").string()}).code != 0);
}

TEST_CASE("train and eval commands") {
  const fs::path dir = scratch("train");
  const std::string observed = synth_noiseless(dir / "syn");

  const auto t = devmf_run(noiseless_train_flags(observed, dir));
  REQUIRE(t.code == 0);
  CHECK(field(t.out, "epochs") == 200);
  CHECK(field(t.out, "final_train_rmse") < 1e-2);
  CHECK(fs::exists(cli::id_map_path((dir / "model.txt").string(), 0)));
  CHECK(fs::exists(cli::id_map_path((dir / "model.txt").string(), 1)));

  SUBCASE("identical invocations give identical metrics") {
    const std::string first = slurp(dir / "metrics.csv");
    REQUIRE(devmf_run(noiseless_train_flags(observed, dir)).code == 0);
    CHECK(slurp(dir / "metrics.csv") == first);
    CHECK(first.rfind("epoch,train_rmse,val_rmse,objective,dev_sparsity,seconds\n", 0) == 0);
  }

  SUBCASE("eval agrees with the in-process pipeline") {
    const auto e = devmf_run({"eval", "--model", (dir / "model.txt").string(), "--test", observed, "--metrics-out",
                              (dir / "eval.csv").string()});
    REQUIRE(e.code == 0);
    const double cli_rmse = field(e.out, "rmse");
    CHECK(cli_rmse < 1e-2);
    CHECK(field(e.out, "cold_start_count") == 0);

    const auto loaded = data::load_observations(observed, data::Format::csv_triplet);
    TrainConfig cfg;
    cfg.model_kind = ModelKind::biased_mf;
    cfg.hp.rank_mean = cfg.hp.rank_dev = 2;
    cfg.hp.epochs = 200;
    cfg.hp.learning_rate = 0.1;
    cfg.hp.sigma_u2 = cfg.hp.sigma_v2 = 1e6;
    cfg.hp.seed = 4;
    const auto trained = train(loaded.obs, cfg);
    const auto direct = eval::evaluate_model(trained.mean, loaded.obs);
    CHECK(std::abs(direct.rmse - cli_rmse) <= 1e-9);
    CHECK(slurp(dir / "eval.csv").rfind("method,fraction,repeat,rmse,mse,n,cold_start_count\n", 0) == 0);
  }

  SUBCASE("cold-start-only test file") {
    spit(dir / "cold.csv", "u_new,1,3\n0,i_new,3\nu_x,i_y,3\n");
    const auto e = devmf_run({"eval", "--model", (dir / "model.txt").string(), "--test", (dir / "cold.csv").string(),
                              "--default-rating", "3"});
    REQUIRE(e.code == 0);
    CHECK(field(e.out, "rmse") == 0.0);
    CHECK(field(e.out, "cold_start_count") == 3);
  }

  SUBCASE("bad model files and mismatched formats") {
    std::string text = slurp(dir / "model.txt");
    text.replace(0, 5, "xxxxx");
    spit(dir / "broken.txt", text);
    for (int m = 0; m < 2; ++m)
      fs::copy_file(cli::id_map_path((dir / "model.txt").string(), m), cli::id_map_path((dir / "broken.txt").string(), m));
    const auto broken = devmf_run({"eval", "--model", (dir / "broken.txt").string(), "--test", observed});
    CHECK(broken.code != 0);
    const auto mismatch = devmf_run({"eval", "--model", (dir / "model.txt").string(), "--test", observed, "--format", "csv4"});
    CHECK(mismatch.code != 0);
  }
}

TEST_CASE("zero epochs writes the initialization") {
  const fs::path dir = scratch("epochs0");
  const std::string observed = synth_noiseless(dir / "syn");
  const auto t = devmf_run({"train", "--train", observed, "--model", "dmf", "--rank", "3", "--epochs", "0", "--seed",
                            "9", "--model-out", (dir / "init.txt").string()});
  REQUIRE(t.code == 0);
  const auto loaded = data::load_observations(observed, data::Format::csv_triplet);
  Hyperparams hp;
  hp.rank_mean = hp.rank_dev = 3;
  const auto init = initialize(loaded.obs.mode_sizes, hp, 9, loaded.obs.mean_value());
  std::ostringstream expected;
  write_model(expected, init.first, init.second);
  CHECK(slurp(dir / "init.txt") == expected.str());
}

TEST_CASE("config files and flag precedence") {
  const fs::path dir = scratch("config");
  const std::string observed = synth_noiseless(dir / "syn");
  spit(dir / "run.ini", "epochs=3\nrank=2\nmodel=biased-mf\n");
  const auto a = devmf_run({"train", "--config", (dir / "run.ini").string(), "--train", observed, "--model-out",
                            (dir / "m.txt").string()});
  REQUIRE(a.code == 0);
  CHECK(field(a.out, "epochs") == 3);
  const auto b = devmf_run({"train", "--config", (dir / "run.ini").string(), "--epochs", "5", "--train", observed,
                            "--model-out", (dir / "m.txt").string()});
  REQUIRE(b.code == 0);
  CHECK(field(b.out, "epochs") == 5);
  CHECK(devmf_run({"train", "--config", (dir / "absent.ini").string(), "--train", observed, "--model-out",
                   (dir / "m.txt").string()}).code != 0);
}

TEST_CASE("train failures") {
  const fs::path dir = scratch("fail");
  const std::string observed = synth_noiseless(dir / "syn");
  const auto diverged = devmf_run({"train", "--train", observed, "--model", "biased-mf", "--schedule", "constant",
                                   "--lr", "50", "--model-out", (dir / "m.txt").string()});
  CHECK(diverged.code == 3);
  CHECK(diverged.err.find("epoch") != std::string::npos);
  CHECK(devmf_run({"train", "--train", observed, "--model", "nope", "--model-out", (dir / "m.txt").string()}).code != 0);
  CHECK(devmf_run({"train", "--train", observed, "--model", "dtf", "--model-out", (dir / "m.txt").string()}).code != 0);
  CHECK(devmf_run({"train", "--train", observed}).code != 0);
}

TEST_CASE("synth command") {
  const fs::path dir = scratch("synth");
  const std::vector<std::string> flags{"synth", "--sizes", "10x8x3", "--rank", "2", "--noise", "hetero", "--seed", "1"};
  auto a = flags, b = flags;
  a.insert(a.end(), {"--out-dir", (dir / "a").string()});
  b.insert(b.end(), {"--out-dir", (dir / "b").string()});
  REQUIRE(devmf_run(a).code == 0);
  REQUIRE(devmf_run(b).code == 0);
  for (const char* f : {"observed.csv", "clean.csv", "variance.csv", "synth.manifest"}) {
    CHECK(fs::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto clean = data::load_observations(dir / "a" / "clean.csv", data::Format::csv_quad);
  CHECK(clean.obs.size() == 240);
  CHECK(devmf_run({"synth", "--sizes", "10", "--out-dir", (dir / "c").string()}).code != 0);
  CHECK(devmf_run({"synth", "--sizes", "2x2", "--observed-fraction", "0.1", "--out-dir", (dir / "c").string()}).code != 0);
}

TEST_CASE("demo-dlr command") {
  const fs::path dir = scratch("demo");
  const auto r = devmf_run({"demo-dlr", "--n", "20", "--seeds", "100", "--out", (dir / "demo.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "median_ratio") < 1.0);
  const std::string csv = slurp(dir / "demo.csv");
  CHECK(csv.rfind("seed,n,ols_error,dlr_error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);

  const std::vector<std::string> one{"demo-dlr", "--seeds", "1", "--seed", "42", "--out"};
  auto x = one, y = one;
  x.push_back((dir / "x.csv").string());
  y.push_back((dir / "y.csv").string());
  REQUIRE(devmf_run(x).code == 0);
  REQUIRE(devmf_run(y).code == 0);
  CHECK(slurp(dir / "x.csv") == slurp(dir / "y.csv"));

  const auto tiny = devmf_run({"demo-dlr", "--n", "2"});
  CHECK(tiny.code != 0);
  CHECK(tiny.err.find("at least 3 samples") != std::string::npos);
}
