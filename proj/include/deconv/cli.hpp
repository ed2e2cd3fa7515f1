#pragma once

#include <chrono>
#include <climits>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deconv/dataset.hpp"
#include "deconv/deconvolver.hpp"
#include "deconv/errors.hpp"
#include "deconv/parallel.hpp"
#include "deconv/simulation.hpp"

namespace deconv::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Flags shared by every command. A seed given here replaces the config seed.
struct Options {
  fs::path config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  fs::path out = ".";
};

using LogSink = std::function<void(const std::string&)>;

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numerical: return 4;
  }
  return 1;
}

[[noreturn]] inline void config_error(const std::string& field, const std::string& msg) {
  throw Error(Errc::invalid_config, "field '" + field + "' " + msg);
}

/// Typed access to one JSON object; every key must be consumed before
/// finish(), so misspelled or stray keys are rejected.
class ConfigReader {
 public:
  ConfigReader(const json& node, std::string where) : node_(&node), where_(std::move(where)) {
    if (!node.is_object()) config_error(where_.empty() ? "<root>" : where_, "must be an object");
  }

  std::string field(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
  bool has(const std::string& key) const { return node_->contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return node_->at(key);
  }

  int integer(const std::string& key, int fallback, int lo = INT_MIN, int hi = INT_MAX) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) config_error(field(key), "must be an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) config_error(field(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<int>(x);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) config_error(field(key), "must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) config_error(field(key), "must be a number");
    return v.get<double>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) config_error(field(key), "must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) config_error(field(key), "must be a string");
    return v.get<std::string>();
  }

  std::string required_text(const std::string& key) {
    if (!has(key)) config_error(field(key), "is required");
    return text(key, {});
  }

  std::optional<ConfigReader> child(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return ConfigReader(raw(key), field(key));
  }

  void finish() const {
    for (auto it = node_->begin(); it != node_->end(); ++it)
      if (!used_.count(it.key())) config_error(field(it.key()), "is not a recognised key");
  }

 private:
  const json* node_;
  std::string where_;
  std::set<std::string> used_;
};

inline json load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::invalid_config, "cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::invalid_config, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Relative paths inside a config are taken from the config's directory.
inline fs::path resolve(const fs::path& config, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : config.parent_path() / q;
}

inline void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw Error(Errc::io_error, "write failed for '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create output directory '" + dir.string() + "': " + ec.message());
}

// ---------------------------------------------------------------- mixtures

namespace detail {

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json matrix_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

inline Vector vector_from(const json& j, const std::string& field, Errc code) {
  if (!j.is_array()) throw Error(code, "field '" + field + "' must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(code, "field '" + field + "' must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from(const json& j, const std::string& field, Errc code) {
  if (!j.is_array() || j.empty()) throw Error(code, "field '" + field + "' must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vector r = vector_from(j[static_cast<std::size_t>(i)], field, code);
    if (i == 0) m.resize(rows, r.size());
    if (r.size() != m.cols()) throw Error(code, "field '" + field + "' has rows of different length");
    m.row(i) = r.transpose();
  }
  return m;
}

}  // namespace detail

inline json mixture_json(const Vector& weights, const std::vector<Vector>& means, const std::vector<Matrix>& covs) {
  json j;
  j["weights"] = detail::vector_json(weights);
  j["means"] = json::array();
  j["covariances"] = json::array();
  for (const auto& m : means) j["means"].push_back(detail::vector_json(m));
  for (const auto& c : covs) j["covariances"].push_back(detail::matrix_json(c));
  return j;
}

/// Reads {weights, means, covariances}; `code` is the error raised on a
/// malformed object so config and input files report the right family.
inline TruthMixture mixture_from(const json& j, const std::string& where, Errc code) {
  if (!j.is_object()) throw Error(code, "field '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "weights" && it.key() != "means" && it.key() != "covariances")
      throw Error(code, "field '" + where + "." + it.key() + "' is not a recognised key");
  for (const char* key : {"weights", "means", "covariances"})
    if (!j.contains(key)) throw Error(code, "field '" + where + "." + key + "' is required");
  TruthMixture t;
  t.weights = detail::vector_from(j["weights"], where + ".weights", code);
  if (!j["means"].is_array() || !j["covariances"].is_array())
    throw Error(code, "field '" + where + "' needs arrays of means and covariances");
  for (std::size_t k = 0; k < j["means"].size(); ++k)
    t.means.push_back(detail::vector_from(j["means"][k], where + ".means", code));
  for (std::size_t k = 0; k < j["covariances"].size(); ++k)
    t.covariances.push_back(detail::matrix_from(j["covariances"][k], where + ".covariances", code));
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(code, "field '" + where + "': " + e.what());
  }
  return t;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// The "mixture" object of a truth or density file.
inline TruthMixture read_mixture_file(const fs::path& path) {
  const json j = read_json_file(path);
  if (!j.is_object() || !j.contains("mixture")) throw Error(Errc::parse_error, "'" + path.string() + "' has no mixture object");
  return mixture_from(j["mixture"], "mixture", Errc::parse_error);
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
  Scenario scenario;
  json scenario_echo;
  int replications = 1;
  std::uint64_t seed = 1;
};

inline SimulateConfig parse_simulate(const json& root) {
  ConfigReader top(root, "");
  SimulateConfig cfg;
  cfg.seed = top.seed("seed", 1);
  cfg.replications = top.integer("replications", 1, 1, 100000);
  auto sc = top.child("scenario");
  if (!sc) config_error("scenario", "is required");
  const std::string law_name = sc->text("error_law", "mvn");
  const auto law = parse_error_law(law_name);
  if (!law) config_error(sc->field("error_law"), "must be one of mvn, mixture, mvt, mvl (got '" + law_name + "')");
  const std::string xs_name = sc->text("x_structure", "I"), es_name = sc->text("error_structure", "I");
  const auto xs = parse_structure(xs_name), es = parse_structure(es_name);
  if (!xs) config_error(sc->field("x_structure"), "must be one of I, LF, AR, EXP (got '" + xs_name + "')");
  if (!es) config_error(sc->field("error_structure"), "must be one of I, LF, AR, EXP (got '" + es_name + "')");
  const int n = sc->integer("n", 500, 1), m = sc->integer("m", 3, 1);
  const bool hetero = sc->flag("heteroscedastic", false);
  const double df = sc->number("mvt_df", 6.0);
  std::optional<TruthMixture> custom;
  if (sc->has("truth")) custom = mixture_from(sc->raw("truth"), sc->field("truth"), Errc::invalid_config);
  const int p = sc->integer("p", custom ? custom->dim() : 4, 1);
  sc->finish();
  top.finish();

  if (custom && custom->dim() != p) config_error("scenario.p", "differs from the dimension of scenario.truth");
  if (p > 4 && !custom) config_error("scenario.p", "must lie in [1, 4] unless scenario.truth is given");
  if (p > 4 && *law == ErrorLaw::mixture) config_error("scenario.error_law", "mixture errors are defined for p <= 4");
  if (p <= 4) {
    cfg.scenario = Scenario::standard(*law, *xs, *es, n, m, p, hetero);
  } else {
    cfg.scenario.n = n;
    cfg.scenario.m = m;
    cfg.scenario.law = *law;
    cfg.scenario.heteroscedastic = hetero;
    cfg.scenario.err_cov = build_covariance(*es, p, StructureParams::for_errors(), 0.3);
  }
  if (custom) cfg.scenario.fx = *custom;
  cfg.scenario.mvt_df = df;
  cfg.scenario.validate();

  cfg.scenario_echo = {{"error_law", to_string(*law)}, {"x_structure", to_string(*xs)}, {"error_structure", to_string(*es)},
                       {"p", p}, {"n", n}, {"m", m}, {"heteroscedastic", hetero}};
  if (*law == ErrorLaw::mvt) cfg.scenario_echo["mvt_df"] = df;
  return cfg;
}

/// File name of replication b (0-based) out of B.
inline std::string replicate_name(int b, int B) {
  if (B == 1) return "data.csv";
  const std::string idx = std::to_string(b + 1), width = std::to_string(B);
  return "data_" + std::string(width.size() - idx.size(), '0') + idx + ".csv";
}

/// Writes data.csv (or data_01.csv, ... for several replications) and
/// truth.json. Replication b draws from stream b of the seed.
inline void cmd_simulate(const Options& opt, const LogSink& log = {}) {
  SimulateConfig cfg = parse_simulate(load_config(opt.config));
  if (opt.seed) cfg.seed = *opt.seed;
  prepare_out(opt.out);
  const int B = cfg.replications;
  std::vector<std::string> bodies(static_cast<std::size_t>(B));
  parallel_for(B, opt.jobs, [&](int b) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(b));
    std::ostringstream os;
    write_replicate_csv(generate_dataset(cfg.scenario, rng).data, os);
    bodies[static_cast<std::size_t>(b)] = os.str();
  });
  std::vector<std::string> files;
  for (int b = 0; b < B; ++b) {
    files.push_back(replicate_name(b, B));
    write_text(opt.out / files.back(), bodies[static_cast<std::size_t>(b)]);
  }
  const auto& fx = cfg.scenario.fx;
  json truth;
  truth["dimension"] = fx.dim();
  truth["mixture"] = mixture_json(fx.weights, fx.means, fx.covariances);
  truth["scenario"] = cfg.scenario_echo;
  truth["seed"] = cfg.seed;
  truth["datasets"] = files;
  write_json(opt.out / "truth.json", truth);
  if (log) log("simulate: wrote " + std::to_string(B) + " dataset(s) of " + std::to_string(cfg.scenario.n) + " subjects to " + opt.out.string());
}

// ---------------------------------------------------------------- fit

struct FitFileConfig {
  fs::path data;
  FitConfig fit;
  bool record_runtime = false;
};

inline FitFileConfig parse_fit(const json& root, const fs::path& config_path) {
  ConfigReader top(root, "");
  FitFileConfig out;
  out.data = resolve(config_path, top.required_text("data"));
  FitConfig& f = out.fit;
  const std::string model = top.text("model", "mlfa");
  const auto parsed = parse_fit_model(model);
  if (!parsed) config_error("model", "must be one of miw, mlfa, mlfad, naive (got '" + model + "')");
  f.model = *parsed;
  f.heteroscedastic = top.flag("heteroscedastic", false);
  f.k_x = top.integer("k_x", 0, 0, 64);
  f.k_err = top.integer("k_err", 0, 0, 64);
  f.factor_count = top.integer("factor_count", 0, 0);
  f.iterations = top.integer("iterations", f.iterations, 1);
  f.burn_in = top.integer("burn_in", f.burn_in, 0);
  f.thin = top.integer("thin", f.thin, 1);
  f.grid_points = top.integer("grid_points", f.grid_points, 2);
  f.adapt_batch = top.integer("adapt_batch", f.adapt_batch, 0);
  f.seed = top.seed("seed", 1);
  out.record_runtime = top.flag("record_runtime", false);
  if (auto pr = top.child("prior")) {
    f.prior.alpha = pr->number("alpha", f.prior.alpha);
    f.prior.a1 = pr->number("a1", f.prior.a1);
    f.prior.ah = pr->number("ah", f.prior.ah);
    f.prior.nu_shrink = pr->number("nu_shrink", f.prior.nu_shrink);
    f.prior.a_sigma = pr->number("a_sigma", f.prior.a_sigma);
    f.prior.b_sigma = pr->number("b_sigma", f.prior.b_sigma);
    pr->finish();
  }
  if (auto s1 = top.child("stage1")) {
    Stage1Settings& s = f.stage1;
    s.iterations = s1->integer("iterations", s.iterations, 1);
    s.burn_in = s1->integer("burn_in", s.burn_in, 0);
    s.error_components = s1->integer("error_components", s.error_components, 1, 64);
    s.x_components = s1->integer("x_components", s.x_components, 1, 64);
    s.spline_degree = s1->integer("spline_degree", s.spline_degree, 0, 10);
    s.spline_intervals = s1->integer("spline_intervals", s.spline_intervals, 1, 200);
    s.alpha = s1->number("alpha", s.alpha);
    s.a_xi = s1->number("a_xi", s.a_xi);
    s.b_xi = s1->number("b_xi", s.b_xi);
    s.mu_tilde_var = s1->number("mu_tilde_var", s.mu_tilde_var);
    s.sig_shape = s1->number("sig_shape", s.sig_shape);
    s.sig_scale = s1->number("sig_scale", s.sig_scale);
    s.adapt_batch = s1->integer("adapt_batch", s.adapt_batch, 0);
    s1->finish();
  }
  top.finish();
  f.validate();
  return out;
}

namespace detail {

using deconv::detail::format_double;

inline std::string marginal_csv(const Vector& axis, const Vector& density, int l) {
  std::string s = "x" + std::to_string(l + 1) + ",density\n";
  for (Eigen::Index g = 0; g < axis.size(); ++g) s += format_double(axis(g)) + "," + format_double(density(g)) + "\n";
  return s;
}

inline std::string pair_csv(const Vector& xa, const Vector& xb, const Matrix& d, int a, int b) {
  std::string s = "x" + std::to_string(a + 1) + ",x" + std::to_string(b + 1) + ",density\n";
  for (Eigen::Index i = 0; i < xa.size(); ++i)
    for (Eigen::Index j = 0; j < xb.size(); ++j)
      s += format_double(xa(i)) + "," + format_double(xb(j)) + "," + format_double(d(i, j)) + "\n";
  return s;
}

inline std::string variance_csv(const VarianceFunction& vf, const Vector& axis, int l) {
  std::string s = "x" + std::to_string(l + 1) + ",variance\n";
  for (Eigen::Index g = 0; g < axis.size(); ++g) {
    const double x = std::clamp(axis(g), vf.knots.lower(), vf.knots.upper());
    s += format_double(axis(g)) + "," + format_double(vf.variance_at(x)) + "\n";
  }
  return s;
}

}  // namespace detail

/// Summary of a finished fit as written to summary.json.
inline json fit_summary(const ReplicateDataset& data, const FitConfig& f, const FitResult& res) {
  const auto& d = res.diagnostics;
  json j;
  j["model"] = to_string(f.model);
  j["heteroscedastic"] = f.model != FitModel::naive && f.heteroscedastic;
  j["subjects"] = data.subjects();
  j["dimension"] = data.dim();
  j["observations"] = data.total();
  j["iterations"] = f.iterations;
  j["burn_in"] = f.burn_in;
  j["thin"] = f.thin;
  j["retained"] = res.posterior.draws.size();
  j["seed"] = f.seed;
  j["components"] = {{"x", d.k_x}, {"error", d.k_err}};
  json nonempty = {{"x", d.nonempty_x}, {"x_mode", FitDiagnostics::mode(d.nonempty_x, f.burn_in)}};
  if (f.model != FitModel::naive) {
    nonempty["error"] = d.nonempty_err;
    nonempty["error_mode"] = FitDiagnostics::mode(d.nonempty_err, f.burn_in);
  }
  j["nonempty_components"] = nonempty;
  if (f.model != FitModel::naive && f.heteroscedastic)
    j["acceptance"] = {{"x", d.x_acceptance}, {"stage1_x", d.stage1_x_acceptance}, {"stage1_xi", d.stage1_xi_acceptance}};
  json mass = json::array();
  for (int l = 0; l < data.dim(); ++l) mass.push_back(res.grid.marginal_mass(l));
  j["marginal_mass"] = mass;
  return j;
}

/// Writes marginal_x<l>.csv, pair_x<a>_x<b>.csv, summary.json, density.json
/// and, for heteroscedastic fits, variance_x<l>.csv.
inline void cmd_fit(const Options& opt, const LogSink& log = {}) {
  FitFileConfig cfg = parse_fit(load_config(opt.config), opt.config);
  if (opt.seed) cfg.fit.seed = *opt.seed;
  cfg.fit.jobs = opt.jobs;
  const ReplicateDataset data = read_replicate_csv(cfg.data.string());
  if (log)
    log("fit: " + std::to_string(data.subjects()) + " subjects, p=" + std::to_string(data.dim()) + ", model " + to_string(cfg.fit.model) +
        (cfg.fit.heteroscedastic ? ", heteroscedastic" : ""));
  prepare_out(opt.out);
  const auto start = std::chrono::steady_clock::now();
  const FitResult res = run_fit(data, cfg.fit);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& g = res.grid;
  for (std::size_t l = 0; l < g.axes.size(); ++l)
    write_text(opt.out / ("marginal_x" + std::to_string(l + 1) + ".csv"), detail::marginal_csv(g.axes[l], g.marginals[l], static_cast<int>(l)));
  for (std::size_t c = 0; c < g.pairs.size(); ++c) {
    const auto [a, b] = g.pairs[c];
    write_text(opt.out / ("pair_x" + std::to_string(a + 1) + "_x" + std::to_string(b + 1) + ".csv"),
               detail::pair_csv(g.axes[static_cast<std::size_t>(a)], g.axes[static_cast<std::size_t>(b)], g.pair_marginals[c], a, b));
  }
  if (res.stage1)
    for (std::size_t l = 0; l < res.stage1->coords.size(); ++l)
      write_text(opt.out / ("variance_x" + std::to_string(l + 1) + ".csv"),
                 detail::variance_csv(res.stage1->coords[l].variance, g.axes[l], static_cast<int>(l)));

  json summary = fit_summary(data, cfg.fit, res);
  if (cfg.record_runtime) summary["runtime_seconds"] = seconds;
  write_json(opt.out / "summary.json", summary);

  const MixtureState pooled = res.posterior.pooled();
  json density;
  density["model"] = to_string(cfg.fit.model);
  density["dimension"] = data.dim();
  density["draws"] = res.posterior.draws.size();
  density["mixture"] = mixture_json(pooled.weights, pooled.means, pooled.covariances);
  write_text(opt.out / "density.json", density.dump() + "\n");
  if (log) log("fit: finished in " + std::to_string(seconds) + " s");
}

// ---------------------------------------------------------------- evaluate

struct EvaluateConfig {
  fs::path truth;
  std::vector<std::pair<std::string, std::vector<fs::path>>> methods;
  std::vector<std::pair<std::string, std::vector<std::string>>> method_names;  // paths as written in the config
  int M = 100000;
  std::vector<ImportanceLaw> laws{ImportanceLaw::truth, ImportanceLaw::uniform};
  std::uint64_t seed = 1;
};

inline EvaluateConfig parse_evaluate(const json& root, const fs::path& config_path) {
  ConfigReader top(root, "");
  EvaluateConfig cfg;
  cfg.truth = resolve(config_path, top.required_text("truth"));
  cfg.M = top.integer("M", cfg.M, 1);
  cfg.seed = top.seed("seed", 1);
  if (top.has("importance")) {
    const json& imp = top.raw("importance");
    if (!imp.is_array() || imp.empty()) config_error("importance", "must be a non-empty array of \"truth\" or \"uniform\"");
    cfg.laws.clear();
    for (const auto& v : imp) {
      if (v == "truth") cfg.laws.push_back(ImportanceLaw::truth);
      else if (v == "uniform") cfg.laws.push_back(ImportanceLaw::uniform);
      else config_error("importance", "entries must be \"truth\" or \"uniform\"");
    }
  }
  if (!top.has("fits")) config_error("fits", "is required");
  const json& fits = top.raw("fits");
  auto read_list = [&](const json& list, const std::string& field, const std::string& label) {
    if (!list.is_array() || list.empty()) config_error(field, "must be a non-empty array of fit directories or density files");
    std::vector<fs::path> paths;
    std::vector<std::string> names;
    for (const auto& v : list) {
      if (!v.is_string()) config_error(field, "entries must be strings");
      names.push_back(v.get<std::string>());
      fs::path p = resolve(config_path, names.back());
      if (fs::is_directory(p)) p /= "density.json";
      paths.push_back(p);
    }
    cfg.methods.emplace_back(label, paths);
    cfg.method_names.emplace_back(label, names);
  };
  if (fits.is_object()) {
    if (fits.empty()) config_error("fits", "must name at least one method");
    for (auto it = fits.begin(); it != fits.end(); ++it) read_list(it.value(), "fits." + it.key(), it.key());
  } else {
    read_list(fits, "fits", "fit");
  }
  top.finish();
  return cfg;
}

/// Importance-sampling ISE for every fit against the truth under each p0.
/// Every method uses the same streams, so replication b of two methods is
/// scored on identical draws.
inline json evaluate(const EvaluateConfig& cfg, int jobs) {
  const TruthMixture truth = read_mixture_file(cfg.truth);
  json report;
  report["M"] = cfg.M;
  report["seed"] = cfg.seed;
  report["dimension"] = truth.dim();
  json methods = json::object();
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const auto& [label, paths] = cfg.methods[mi];
    std::vector<std::unique_ptr<MixtureEvaluator>> evaluators;
    std::vector<DensityFn> fns;
    for (const auto& p : paths) {
      const TruthMixture fit = read_mixture_file(p);
      if (fit.dim() != truth.dim())
        throw Error(Errc::incompatible_inputs, "fit '" + p.string() + "' has dimension " + std::to_string(fit.dim()) + " but the truth has " +
                                                   std::to_string(truth.dim()));
      evaluators.push_back(std::make_unique<MixtureEvaluator>(fit.state()));
      const MixtureEvaluator* ev = evaluators.back().get();
      fns.push_back([ev](const Vector& x) { return ev->density(x); });
    }
    json entry;
    entry["fits"] = cfg.method_names[mi].second;
    entry["replications"] = paths.size();
    for (std::size_t li = 0; li < cfg.laws.size(); ++li) {
      const ImportanceLaw law = cfg.laws[li];
      const std::uint64_t base = law == ImportanceLaw::truth ? 0 : (std::uint64_t{1} << 32);
      const SimResult r = mise_estimate(truth, fns, law, cfg.M, cfg.seed, base, jobs);
      entry[to_string(law)] = {{"ise", r.ise}, {"ise_se", r.se}, {"mise", r.mise}, {"mise_se", r.mise_se}};
    }
    methods[label] = entry;
  }
  report["methods"] = methods;
  return report;
}

/// Writes report.json.
inline void cmd_evaluate(const Options& opt, const LogSink& log = {}) {
  EvaluateConfig cfg = parse_evaluate(load_config(opt.config), opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  prepare_out(opt.out);
  const json report = evaluate(cfg, opt.jobs);
  write_json(opt.out / "report.json", report);
  if (log)
    for (const auto& [label, entry] : report["methods"].items())
      for (const char* law : {"truth", "uniform"})
        if (entry.contains(law)) log("evaluate: " + label + " p0=" + law + " MISE " + entry[law]["mise"].dump());
}

// ---------------------------------------------------------------- dispatch

/// Runs one command and maps failures onto the exit-code contract; error
/// messages go to `err`.
inline int run(const std::string& command, const Options& opt, const LogSink& log, std::ostream& err) {
  try {
    if (opt.jobs < 1) throw Error(Errc::invalid_config, "--jobs must be at least 1");
    if (command == "simulate") cmd_simulate(opt, log);
    else if (command == "fit") cmd_fit(opt, log);
    else if (command == "evaluate") cmd_evaluate(opt, log);
    else throw Error(Errc::invalid_config, "unknown command '" + command + "'");
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(category(e.code()));
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorCategory::data);
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorCategory::config);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace deconv::cli
