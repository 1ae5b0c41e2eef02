#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hdgam/csv.hpp"
#include "hdgam/model_io.hpp"
#include "hdgam/rng.hpp"
#include "hdgam/sim_bench.hpp"
#include "hdgam/two_step.hpp"

using namespace hdgam;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "hdgam_cli_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HDGAM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

/// Small bernoulli training CSV with one signal feature.
fs::path make_train_csv(const fs::path& name, int n = 50, int p = 4, std::uint64_t seed = 3) {
  Rng rng(seed);
  std::ostringstream out;
  out << "y";
  for (int j = 0; j < p; ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(p);
    for (int j = 0; j < p; ++j) x[j] = rng.uniform(-1.0, 1.0);
    const double eta = 2.5 * std::sin(3.0 * x[0]);
    const int y = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1 : 0;
    out << y;
    for (int j = 0; j < p; ++j) out << ',' << format_double(x[j]);
    out << "\n";
  }
  const auto path = temp_dir() / name;
  write_file(path, out.str());
  return path;
}

fs::path strip_response_column(const fs::path& src, const fs::path& dst_name) {
  std::ifstream in(src);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out << line.substr(comma + 1) << "\n";
  }
  const auto dst = temp_dir() / dst_name;
  write_file(dst, out.str());
  return dst;
}

}  // namespace

TEST_CASE("format_double round-trips") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double v = std::exp(rng.uniform(-30.0, 30.0)) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    const std::string s = format_double(v);
    double back = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), back);
    REQUIRE(res.ec == std::errc());
    REQUIRE(back == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-3.0) == "-3");
}

TEST_CASE("read_csv parses numeric tables and names bad cells") {
  const auto path = temp_dir() / "table.csv";
  write_file(path, "a,b\n1,2\n3.5,-4e2\n");
  const auto table = read_csv(path.string());
  CHECK(table.header == std::vector<std::string>{"a", "b"});
  CHECK(table.data.rows() == 2);
  CHECK(table.data(1, 1) == -400.0);
  CHECK(table.find_column("b") == 1);
  CHECK(table.find_column("zz") == -1);

  write_file(path, "a,b\n1,NA\n");
  CHECK_THROWS_WITH(read_csv(path.string()),
                    Catch::Matchers::ContainsSubstring("row 1") &&
                        Catch::Matchers::ContainsSubstring("column 'b'"));

  write_file(path, "a,b\n1,2\n7,\n");
  CHECK_THROWS_WITH(read_csv(path.string()), Catch::Matchers::ContainsSubstring("row 2"));

  write_file(path, "a,b\n1\n");
  CHECK_THROWS_AS(read_csv(path.string()), DataError);

  write_file(path, "a,b\n");
  const auto empty = read_csv(path.string());
  CHECK(empty.data.rows() == 0);
}

TEST_CASE("model save/load round-trips predictions bit-exactly") {
  SimScenario scn = scenario_by_name("ex1-case1");
  scn.n = 70;
  scn.p = 6;
  scn.n_test = 40;
  scn.seed = 44;
  const auto data = generate(scn);
  std::vector<BasisSpec> specs;
  std::vector<std::string> names;
  for (int j = 0; j < scn.p; ++j) {
    const auto col = data.x_train.col(j);
    specs.push_back(build_basis_spec(
        std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), scn.order,
        scn.num_basis));
    names.push_back("x" + std::to_string(j));
  }
  const auto des = expand_design(data.x_train, specs);
  const auto fit = two_step_fit(des, specs, data.y_train, FamilySpec::bernoulli(), PathConfig{});

  const ModelFile mf = make_model_file(fit, specs, names, 44, "cfg");
  const auto path = temp_dir() / "model.json";
  save_model(mf, path.string());
  const ModelFile loaded = load_model(path.string());

  const auto before = predict(fit, specs, data.x_test);
  const auto after = predict_model(loaded, data.x_test);
  REQUIRE((before.eta - after.eta).lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE((before.mean - after.mean).lpNorm<Eigen::Infinity>() == 0.0);

  // Saving the loaded model reproduces identical bytes.
  const auto path2 = temp_dir() / "model2.json";
  save_model(loaded, path2.string());
  CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("version mismatch raises VersionError") {
  const auto path = temp_dir() / "badversion.json";
  write_file(path, "{\"format_version\": 99}\n");
  CHECK_THROWS_AS(load_model(path.string()), VersionError);
  write_file(path, "{\"family\": \"gaussian\"}\n");
  CHECK_THROWS_AS(load_model(path.string()), VersionError);
}

TEST_CASE("cli fit/predict happy path") {
  const auto train = make_train_csv("train.csv");
  const auto model = temp_dir() / "cli_model.json";
  const auto pathcsv = temp_dir() / "cli_path.csv";
  const int code = run_cli("fit --data " + train.string() + " --response y --family bernoulli" +
                           " --m 6 --out " + model.string() + " --emit-path " + pathcsv.string());
  REQUIRE(code == 0);
  REQUIRE(fs::exists(model));
  REQUIRE(fs::exists(pathcsv));
  const auto path_table = read_csv(pathcsv.string());
  CHECK(path_table.header == std::vector<std::string>{"lambda", "deviance", "support_size", "gic"});
  CHECK(path_table.data.rows() > 0);

  const auto newdata = strip_response_column(train, "new.csv");
  const auto preds = temp_dir() / "preds.csv";
  REQUIRE(run_cli("predict --model " + model.string() + " --data " + newdata.string() + " --out " +
                  preds.string()) == 0);
  const auto pred_table = read_csv(preds.string());
  CHECK(pred_table.header == std::vector<std::string>{"row_id", "eta", "mean"});
  CHECK(pred_table.data.rows() == 50);

  // CSV predictions parse back to exactly the library predictions.
  const ModelFile mf = load_model(model.string());
  const auto features = read_csv(newdata.string());
  const auto direct = predict_model(mf, features.data);
  for (Eigen::Index i = 0; i < direct.eta.size(); ++i) {
    REQUIRE(pred_table.data(i, 1) == direct.eta[i]);
    REQUIRE(pred_table.data(i, 2) == direct.mean[i]);
  }

  // Predicting twice gives identical bytes.
  const auto preds2 = temp_dir() / "preds2.csv";
  REQUIRE(run_cli("predict --model " + model.string() + " --data " + newdata.string() + " --out " +
                  preds2.string()) == 0);
  CHECK(read_file(preds) == read_file(preds2));
}

TEST_CASE("cli error exit codes") {
  const auto train = make_train_csv("train_err.csv");

  SECTION("missing response column is a config error") {
    CHECK(run_cli("fit --data " + train.string() + " --response nope --family bernoulli") == 2);
  }
  SECTION("NA cell is a data error") {
    const auto bad = temp_dir() / "bad.csv";
    write_file(bad, "y,x0\n1,0.5\n0,NA\n");
    CHECK(run_cli("fit --data " + bad.string() + " --response y --family bernoulli") == 1);
  }
  SECTION("response outside the family support is a data error") {
    const auto bad = temp_dir() / "bad2.csv";
    std::ostringstream body;
    body << "y,x0\n";
    for (int i = 0; i < 12; ++i) body << (i % 3) << "," << format_double(0.1 * i) << "\n";
    write_file(bad, body.str());
    CHECK(run_cli("fit --data " + bad.string() + " --response y --family bernoulli") == 1);
  }
  SECTION("unknown family and missing options are config errors") {
    CHECK(run_cli("fit --data " + train.string() + " --response y --family triangular") == 2);
    CHECK(run_cli("fit --data " + train.string()) == 2);
  }
  SECTION("wrong model version is a config error") {
    const auto badmodel = temp_dir() / "bad_model.json";
    write_file(badmodel, "{\"format_version\": 99}\n");
    CHECK(run_cli("predict --model " + badmodel.string() + " --data " + train.string()) == 2);
  }
  SECTION("column mismatch on predict is a config error") {
    const auto model = temp_dir() / "model_cols.json";
    REQUIRE(run_cli("fit --data " + train.string() + " --response y --family bernoulli --m 6 --out " +
                    model.string()) == 0);
    CHECK(run_cli("predict --model " + model.string() + " --data " + train.string()) == 2);
  }
  SECTION("unknown scenario is a config error") {
    CHECK(run_cli("simulate --scenario nope --reps 2") == 2);
  }
}

TEST_CASE("cli predict on an empty body emits a header-only file") {
  const auto train = make_train_csv("train_empty.csv");
  const auto model = temp_dir() / "model_empty.json";
  REQUIRE(run_cli("fit --data " + train.string() + " --response y --family bernoulli --m 6 --out " +
                  model.string()) == 0);
  const auto empty = temp_dir() / "empty.csv";
  write_file(empty, "x0,x1,x2,x3\n");
  const auto preds = temp_dir() / "empty_preds.csv";
  REQUIRE(run_cli("predict --model " + model.string() + " --data " + empty.string() + " --out " +
                  preds.string()) == 0);
  CHECK(read_file(preds) == "row_id,eta,mean\n");
}

TEST_CASE("cli simulate is deterministic and writes the metric schema") {
  const auto out1 = temp_dir() / "table1.csv";
  const auto out2 = temp_dir() / "table2.csv";
  const std::string args =
      "simulate --custom 60,10,2,bernoulli,0,1 --reps 2 --seed 9 --threads 1 --out ";
  REQUIRE(run_cli(args + out1.string()) == 0);
  REQUIRE(run_cli(args + out2.string()) == 0);
  CHECK(read_file(out1) == read_file(out2));

  // The scenario/family/config_hash columns are strings, so check the header
  // and row count directly.
  const std::vector<std::string> expected = {"scenario", "family", "n",      "p",     "s",
                                             "reps",     "nv",     "nv_se",  "tpr",   "tpr_se",
                                             "fpr",      "fpr_se", "pe",     "pe_se", "dev",
                                             "dev_se",   "config_hash"};
  std::ifstream in(out1);
  std::string header, row;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, row));
  std::ostringstream joined;
  for (std::size_t i = 0; i < expected.size(); ++i) joined << (i ? "," : "") << expected[i];
  CHECK(header == joined.str());
  CHECK(row.substr(0, 7) == "custom,");
}
