// Command-line interface: fit a two-step sparse GAM from CSV data, predict
// with a saved model, or run the simulation benchmarks.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hdgam/csv.hpp"
#include "hdgam/errors.hpp"
#include "hdgam/model_io.hpp"
#include "hdgam/sim_bench.hpp"
#include "hdgam/two_step.hpp"

namespace {

struct FitArgs {
  std::string data_path;
  std::string response;
  std::string family = "gaussian";
  int num_basis = 9;
  int order = 4;
  double smooth_lambda = 0.0;
  int path_len = 50;
  std::string out_model = "model.json";
  std::string emit_path;
  std::uint64_t seed = 0;
};

struct PredictArgs {
  std::string model_path;
  std::string data_path;
  std::string out_path = "preds.csv";
};

struct SimArgs {
  std::string scenario;
  std::string custom;
  int reps = 100;
  std::uint64_t seed = 7;
  std::string out_path = "table.csv";
  double smooth_lambda = 0.0;
  int threads = 0;
};

std::string canonical_fit_config(const FitArgs& a) {
  std::ostringstream os;
  os << "fit;family=" << a.family << ";m=" << a.num_basis << ";order=" << a.order
     << ";smooth=" << hdgam::format_double(a.smooth_lambda) << ";path_len=" << a.path_len
     << ";seed=" << a.seed;
  return os.str();
}

int run_fit(const FitArgs& args) {
  using namespace hdgam;
  const CsvTable table = read_csv(args.data_path);
  const int y_col = table.find_column(args.response);
  if (y_col < 0)
    throw ConfigError("response column '" + args.response + "' not found in '" + args.data_path + "'");
  if (table.header.size() < 2) throw ConfigError("need at least one predictor column");
  if (table.data.rows() == 0) throw DataError("'" + args.data_path + "' has no data rows");

  const Eigen::VectorXd y = table.data.col(y_col);
  std::vector<std::string> feature_names;
  Eigen::MatrixXd x(table.data.rows(), table.data.cols() - 1);
  int c = 0;
  for (int j = 0; j < table.data.cols(); ++j) {
    if (j == y_col) continue;
    feature_names.push_back(table.header[static_cast<std::size_t>(j)]);
    x.col(c++) = table.data.col(j);
  }

  const FamilySpec fam = FamilySpec::of(family_from_name(args.family));
  fam.check_support(y);

  std::vector<BasisSpec> specs;
  specs.reserve(static_cast<std::size_t>(x.cols()));
  for (int j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j);
    auto spec = build_basis_spec(
        std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), args.order,
        args.num_basis);
    if (spec.collapsed)
      std::cerr << "warning: feature '" << feature_names[static_cast<std::size_t>(j)]
                << "' has tied quantiles; basis reduced to " << spec.num_basis << " functions\n";
    specs.push_back(std::move(spec));
  }

  const ExpandedDesign des = expand_design(x, specs);
  PathConfig cfg;
  cfg.path_len = args.path_len;
  cfg.smooth_lambda = args.smooth_lambda;
  const TwoStepResult fit = two_step_fit(des, specs, y, fam, cfg);

  const ModelFile mf = make_model_file(fit, specs, feature_names, args.seed,
                                       canonical_fit_config(args));
  save_model(mf, args.out_model);

  if (!args.emit_path.empty()) {
    std::ofstream out(args.emit_path);
    if (!out) throw ConfigError("cannot write path file '" + args.emit_path + "'");
    write_csv_line(out, {"lambda", "deviance", "support_size", "gic"});
    for (const auto& e : fit.adaptive_path.entries)
      write_csv_line(out, {format_double(e.lambda), format_double(e.deviance),
                           std::to_string(e.support_size), format_double(e.gic)});
  }

  std::cout << "selected " << fit.selected.support_size() << " of " << des.p << " features:";
  for (int j : fit.selected.support())
    std::cout << ' ' << feature_names[static_cast<std::size_t>(j)];
  std::cout << '\n';
  std::cout << "gic " << format_double(fit.selected_gic) << "  deviance "
            << format_double(fit.selected_deviance) << "  lambda "
            << format_double(fit.selected_lambda) << "  (screening lambda "
            << format_double(fit.screening.lambda_used) << ", theoretical lambda "
            << format_double(theoretical_lambda(des.n, des.p, des.m, fam.tag == Family::bernoulli,
                                                std::log(static_cast<double>(des.p) * des.m), 1.0))
            << ")\n";
  std::cout << "model written to " << args.out_model << '\n';
  return 0;
}

int run_predict(const PredictArgs& args) {
  using namespace hdgam;
  const ModelFile mf = load_model(args.model_path);
  const CsvTable table = read_csv(args.data_path);
  if (table.header != mf.feature_names) {
    if (table.header.size() != mf.feature_names.size())
      throw ConfigError("prediction data has " + std::to_string(table.header.size()) +
                        " columns; model expects " + std::to_string(mf.feature_names.size()));
    throw ConfigError("prediction data columns do not match the model's feature names");
  }
  std::ofstream out(args.out_path);
  if (!out) throw ConfigError("cannot write '" + args.out_path + "'");
  write_csv_line(out, {"row_id", "eta", "mean"});
  if (table.data.rows() > 0) {
    const Prediction pred = predict_model(mf, table.data);
    for (Eigen::Index i = 0; i < pred.eta.size(); ++i)
      write_csv_line(out, {std::to_string(i + 1), format_double(pred.eta[i]),
                           format_double(pred.mean[i])});
  }
  std::cout << "wrote " << table.data.rows() << " predictions to " << args.out_path << '\n';
  return 0;
}

hdgam::SimScenario parse_custom(const std::string& spec) {
  // n,p,s,family,t,scale
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 6)
    throw hdgam::ConfigError("--custom expects n,p,s,family,t,scale; got '" + spec + "'");
  hdgam::SimScenario scn;
  scn.name = "custom";
  scn.n = std::stoi(parts[0]);
  scn.p = std::stoi(parts[1]);
  scn.s = std::stoi(parts[2]);
  scn.family = hdgam::family_from_name(parts[3]);
  scn.correlation_t = std::stod(parts[4]);
  scn.signal_scale = std::stod(parts[5]);
  return scn;
}

int run_simulate(const SimArgs& args) {
  using namespace hdgam;
  SimScenario scn;
  if (!args.custom.empty())
    scn = parse_custom(args.custom);
  else if (!args.scenario.empty())
    scn = scenario_by_name(args.scenario);
  else
    throw ConfigError("simulate needs --scenario or --custom");
  scn.seed = args.seed;

  PathConfig cfg;
  cfg.smooth_lambda = args.smooth_lambda;
  const TableRow row = run_table(scn, args.reps, cfg, args.threads);

  std::ostringstream config;
  config << "simulate;" << scn.name << ";n=" << scn.n << ";p=" << scn.p << ";s=" << scn.s
         << ";family=" << family_name(scn.family) << ";t=" << format_double(scn.correlation_t)
         << ";scale=" << format_double(scn.signal_scale) << ";reps=" << args.reps
         << ";seed=" << args.seed;

  std::ofstream out(args.out_path);
  if (!out) throw ConfigError("cannot write '" + args.out_path + "'");
  write_csv_line(out, {"scenario", "family", "n", "p", "s", "reps", "nv", "nv_se", "tpr", "tpr_se",
                       "fpr", "fpr_se", "pe", "pe_se", "dev", "dev_se", "config_hash"});
  write_csv_line(out, {scn.name, family_name(scn.family), std::to_string(scn.n),
                       std::to_string(scn.p), std::to_string(scn.s), std::to_string(args.reps),
                       format_double(row.mean.nv), format_double(row.se.nv),
                       format_double(row.mean.tpr), format_double(row.se.tpr),
                       format_double(row.mean.fpr), format_double(row.se.fpr),
                       format_double(row.mean.pe), format_double(row.se.pe),
                       format_double(row.mean.dev), format_double(row.se.dev),
                       config_hash_hex(config.str())});

  std::cout << scn.name << " (" << family_name(scn.family) << ", " << args.reps
            << " reps): NV " << format_double(row.mean.nv) << "  TPR " << format_double(row.mean.tpr)
            << "  FPR " << format_double(row.mean.fpr) << "  PE " << format_double(row.mean.pe)
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-step sparse generalized additive models (group lasso screening + "
               "adaptive group lasso with GIC tuning)"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a model from a CSV dataset");
  fit->add_option("--data", fit_args.data_path, "training CSV (header row required)")->required();
  fit->add_option("--response", fit_args.response, "response column name")->required();
  fit->add_option("--family", fit_args.family, "bernoulli|poisson|gamma|gaussian")->required();
  fit->add_option("--m", fit_args.num_basis, "basis functions per feature (default 9)");
  fit->add_option("--order", fit_args.order, "spline order (default 4, cubic)");
  fit->add_option("--smooth-lambda", fit_args.smooth_lambda, "difference penalty level (default 0)");
  fit->add_option("--path-len", fit_args.path_len, "lambda path length (default 50)");
  fit->add_option("--out", fit_args.out_model, "output model file (default model.json)");
  fit->add_option("--emit-path", fit_args.emit_path, "write the adaptive GIC path as CSV");
  fit->add_option("--seed", fit_args.seed, "seed recorded in the model provenance");

  PredictArgs pred_args;
  auto* pred = app.add_subcommand("predict", "Predict with a saved model");
  pred->add_option("--model", pred_args.model_path, "model JSON from fit")->required();
  pred->add_option("--data", pred_args.data_path, "CSV of predictor columns")->required();
  pred->add_option("--out", pred_args.out_path, "output CSV (default preds.csv)");

  SimArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run a benchmark scenario");
  sim->add_option("--scenario", sim_args.scenario,
                  "ex1-case1|ex1-case2|ex1-case3|ex2-cor03|ex2-cor07|ex3-lowsignal|"
                  "ex4-poisson|ex4-gamma");
  sim->add_option("--custom", sim_args.custom, "free-form scenario: n,p,s,family,t,scale");
  sim->add_option("--reps", sim_args.reps, "replications (default 100)");
  sim->add_option("--seed", sim_args.seed, "base seed; replication r uses seed + r");
  sim->add_option("--out", sim_args.out_path, "output CSV (default table.csv)");
  sim->add_option("--smooth-lambda", sim_args.smooth_lambda, "difference penalty level");
  sim->add_option("--threads", sim_args.threads,
                  "worker threads (default: HDGAM_THREADS or hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return run_fit(fit_args);
    if (*pred) return run_predict(pred_args);
    if (*sim) return run_simulate(sim_args);
  } catch (const hdgam::SolverDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const hdgam::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const hdgam::DegenerateFeature& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const hdgam::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
