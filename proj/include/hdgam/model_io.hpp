#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdgam/errors.hpp"
#include "hdgam/two_step.hpp"

namespace hdgam {

inline constexpr int kModelFormatVersion = 1;

/// Everything needed to reproduce predictions: family, per-feature basis,
/// training centering, selected coefficients and tuning provenance.
struct ModelFile {
  int format_version = kModelFormatVersion;
  Family family = Family::gaussian;
  int order = 4;
  std::vector<std::string> feature_names;
  std::vector<BasisSpec> specs;
  Eigen::VectorXd col_center;
  double intercept = 0.0;
  std::vector<Eigen::VectorXd> blocks;
  double screening_lambda = 0.0;
  double adaptive_lambda = 0.0;
  double gic_value = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// FNV-1a over a canonical config string; recorded so a table or model can be
/// traced back to the exact run configuration.
inline std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  return std::string(buf, 16);
}

inline ModelFile make_model_file(const TwoStepResult& fit, std::span<const BasisSpec> specs,
                                 const std::vector<std::string>& feature_names,
                                 std::uint64_t seed, const std::string& config_canonical) {
  ModelFile mf;
  mf.family = fit.family.tag;
  mf.order = specs.empty() ? 4 : specs.front().order;
  mf.feature_names = feature_names;
  mf.specs.assign(specs.begin(), specs.end());
  mf.col_center = fit.col_center;
  mf.intercept = fit.selected.intercept;
  mf.blocks = fit.selected.blocks;
  mf.screening_lambda = fit.screening.lambda_used;
  mf.adaptive_lambda = fit.selected_lambda;
  mf.gic_value = fit.selected_gic;
  mf.seed = seed;
  mf.config_hash = config_hash_hex(config_canonical);
  return mf;
}

inline nlohmann::ordered_json model_to_json(const ModelFile& mf) {
  nlohmann::ordered_json j;
  j["format_version"] = mf.format_version;
  j["family"] = family_name(mf.family);
  j["order"] = mf.order;
  j["screening_lambda"] = mf.screening_lambda;
  j["adaptive_lambda"] = mf.adaptive_lambda;
  j["gic"] = mf.gic_value;
  j["intercept"] = mf.intercept;
  j["seed"] = mf.seed;
  j["config_hash"] = mf.config_hash;
  nlohmann::ordered_json feats = nlohmann::ordered_json::array();
  int col = 0;
  for (std::size_t f = 0; f < mf.specs.size(); ++f) {
    const auto& spec = mf.specs[f];
    nlohmann::ordered_json jf;
    jf["name"] = (f < mf.feature_names.size()) ? mf.feature_names[f] : ("x" + std::to_string(f));
    jf["num_basis"] = spec.num_basis;
    jf["boundary"] = {spec.lo, spec.hi};
    jf["inner_knots"] = spec.inner_knots;
    std::vector<double> center(static_cast<std::size_t>(spec.num_basis));
    for (int k = 0; k < spec.num_basis; ++k) center[static_cast<std::size_t>(k)] = mf.col_center[col + k];
    jf["col_center"] = center;
    std::vector<double> coef(static_cast<std::size_t>(spec.num_basis));
    for (int k = 0; k < spec.num_basis; ++k) coef[static_cast<std::size_t>(k)] = mf.blocks[f][k];
    jf["coef"] = coef;
    feats.push_back(std::move(jf));
    col += spec.num_basis;
  }
  j["features"] = std::move(feats);
  return j;
}

inline void save_model(const ModelFile& mf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file '" + path + "'");
  out << model_to_json(mf).dump(2) << '\n';
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed model file '" + path + "': " + e.what());
  }
  ModelFile mf;
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw VersionError("model file '" + path + "' lacks a format_version");
  mf.format_version = j["format_version"].get<int>();
  if (mf.format_version != kModelFormatVersion)
    throw VersionError("model file format_version " + std::to_string(mf.format_version) +
                       " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  mf.family = family_from_name(j.at("family").get<std::string>());
  mf.order = j.at("order").get<int>();
  mf.screening_lambda = j.at("screening_lambda").get<double>();
  mf.adaptive_lambda = j.at("adaptive_lambda").get<double>();
  mf.gic_value = j.at("gic").get<double>();
  mf.intercept = j.at("intercept").get<double>();
  mf.seed = j.at("seed").get<std::uint64_t>();
  mf.config_hash = j.at("config_hash").get<std::string>();

  std::vector<double> centers;
  for (const auto& jf : j.at("features")) {
    mf.feature_names.push_back(jf.at("name").get<std::string>());
    BasisSpec spec;
    spec.order = mf.order;
    spec.num_basis = jf.at("num_basis").get<int>();
    const auto boundary = jf.at("boundary");
    spec.lo = boundary.at(0).get<double>();
    spec.hi = boundary.at(1).get<double>();
    spec.inner_knots = jf.at("inner_knots").get<std::vector<double>>();
    if (spec.num_basis != spec.order + static_cast<int>(spec.inner_knots.size()))
      throw ConfigError("model file feature '" + mf.feature_names.back() +
                        "': num_basis inconsistent with knot count");
    spec.finalize();
    mf.specs.push_back(std::move(spec));
    const auto center = jf.at("col_center").get<std::vector<double>>();
    centers.insert(centers.end(), center.begin(), center.end());
    const auto coef = jf.at("coef").get<std::vector<double>>();
    Eigen::VectorXd b(static_cast<Eigen::Index>(coef.size()));
    for (std::size_t k = 0; k < coef.size(); ++k) b[static_cast<Eigen::Index>(k)] = coef[k];
    mf.blocks.push_back(std::move(b));
  }
  mf.col_center = Eigen::Map<const Eigen::VectorXd>(centers.data(),
                                                    static_cast<Eigen::Index>(centers.size()));
  return mf;
}

/// Predict with a loaded model; the exact code path used in-sample, so a
/// save/load round trip reproduces predictions bit-exactly.
inline Prediction predict_model(const ModelFile& mf, const Eigen::MatrixXd& x_new) {
  TwoStepResult view;
  view.family = FamilySpec::of(mf.family);
  view.col_center = mf.col_center;
  view.selected.intercept = mf.intercept;
  view.selected.blocks = mf.blocks;
  return predict(view, mf.specs, x_new);
}

}  // namespace hdgam
