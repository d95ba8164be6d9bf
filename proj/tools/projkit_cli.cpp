#include "projkit/io.hpp"
#include "projkit/reference.hpp"
#include "projkit/search.hpp"
#include "projkit/simdata.hpp"
#include "projkit/theory.hpp"
#include "projkit/validation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace projkit;

namespace {

constexpr int kExitFlags = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumeric = 4;

class FlagError : public std::runtime_error {
 public:
  FlagError(const std::string& flag, const std::string& msg) : std::runtime_error(flag + ": " + msg) {}
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("PROJKIT_SEED")) {
    const std::string s(env);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
      throw FlagError("PROJKIT_SEED", "not an unsigned integer: '" + s + "'");
    return v;
  }
  return 1;
}

class Manifest {
 public:
  explicit Manifest(std::string command) { doc_["command"] = std::move(command); }
  json& config() { return doc_["config"]; }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void input(const std::string& name, const fs::path& path) {
    doc_["inputs"][name] = {{"path", path.string()}, {"sha256", file_sha256(path)}};
  }
  void write(const fs::path& out_dir) {
    doc_["version"] = PROJKIT_VERSION;
    std::ofstream out(out_dir / "manifest.json", std::ios::binary);
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_ = json::object();
};

fs::path prepare_out(const fs::path& out) {
  fs::create_directories(out);
  return out;
}

void require_file(const fs::path& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw ParseError(flag + ": no such file: " + path.string());
}

CsvTable load_table(const fs::path& path, const std::string& flag) {
  require_file(path, flag);
  CsvTable t = read_csv(path);
  if (!t.values.allFinite()) throw ParseError(path.string() + ": non-finite entries");
  if (t.values.rows() < 1) throw ParseError(path.string() + ": no data rows");
  return t;
}

VectorXd load_vector(const fs::path& path, const std::string& flag) {
  const CsvTable t = load_table(path, flag);
  if (t.values.cols() != 1) throw ParseError(path.string() + ": expected a single column");
  return t.values.col(0);
}

void check_response(const VectorXd& y, Family family, const fs::path& path) {
  for (Index i = 0; i < y.size(); ++i)
    if (!family.valid_response(y(i)))
      throw ParseError(path.string() + ": row " + std::to_string(i + 2) + " is not a valid " +
                       std::string(family.name()) + " response");
}

void write_vector(const fs::path& path, const std::string& name, const VectorXd& v) {
  write_csv(path, {name}, MatrixXd(v));
}

// ---------------------------------------------------------------------------
// Reference directories: design.csv, draws.ndjson, optional feature_map.json
// and ref_config.json (written by fit-ref).

json feature_map_json(const FeatureMap& fm) {
  json j;
  j["mask"] = fm.mask;
  j["center"] = std::vector<double>(fm.center.data(), fm.center.data() + fm.center.size());
  json rot = json::array();
  for (Index r = 0; r < fm.rotation.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(fm.rotation.cols()));
    for (Index c = 0; c < fm.rotation.cols(); ++c) row[static_cast<std::size_t>(c)] = fm.rotation(r, c);
    rot.push_back(row);
  }
  j["rotation"] = rot;
  return j;
}

FeatureMap feature_map_from_json(const json& j) {
  FeatureMap fm;
  fm.mask = j.at("mask").get<std::vector<int>>();
  const auto center = j.at("center").get<std::vector<double>>();
  fm.center = Eigen::Map<const VectorXd>(center.data(), static_cast<Index>(center.size()));
  const auto& rot = j.at("rotation");
  if (!rot.empty()) {
    fm.rotation.resize(static_cast<Index>(rot.size()), static_cast<Index>(rot[0].size()));
    for (std::size_t r = 0; r < rot.size(); ++r) {
      const auto row = rot[r].get<std::vector<double>>();
      if (static_cast<Index>(row.size()) != fm.rotation.cols()) throw ParseError("ragged rotation matrix");
      for (std::size_t c = 0; c < row.size(); ++c) fm.rotation(static_cast<Index>(r), static_cast<Index>(c)) = row[c];
    }
  }
  return fm;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

struct LoadedReference {
  ReferenceModel model;
  std::optional<json> config;
};

LoadedReference load_reference(const fs::path& dir, const std::string& family_flag, Manifest& manifest) {
  require_file(dir / "design.csv", "--ref");
  require_file(dir / "draws.ndjson", "--ref");
  LoadedReference out;
  std::string family_name = family_flag;
  if (fs::is_regular_file(dir / "ref_config.json")) {
    out.config = read_json(dir / "ref_config.json");
    const std::string stored = out.config->at("family").get<std::string>();
    if (!family_name.empty() && family_name != stored)
      throw FlagError("--family", "reference was fitted as " + stored);
    family_name = stored;
    manifest.input("ref_config", dir / "ref_config.json");
  }
  if (family_name.empty()) throw FlagError("--family", "required for references without ref_config.json");
  out.model = ingest_draws(dir / "design.csv", dir / "draws.ndjson", Family::from_name(family_name));
  manifest.input("ref_design", dir / "design.csv");
  manifest.input("ref_draws", dir / "draws.ndjson");
  if (fs::is_regular_file(dir / "feature_map.json")) {
    try {
      out.model.feature_map = feature_map_from_json(read_json(dir / "feature_map.json"));
    } catch (const json::exception& e) {
      throw ParseError((dir / "feature_map.json").string() + ": " + e.what());
    }
    manifest.input("feature_map", dir / "feature_map.json");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared selection flags

struct SelectionFlags {
  fs::path x, y, ref;
  std::string family;
  std::string method = "l1";
  int max_size = 20;
  double alpha = 1.0;
  int nlambda = 100;
  bool no_relax = false;
  double relax_ridge = 0.0;
  int clusters_select = 1;
  int clusters_predict = 10;
  std::optional<std::uint64_t> seed;
  int threads = default_threads();
  fs::path out;

  void add(CLI::App* app) {
    app->add_option("--x", x, "feature CSV")->required();
    app->add_option("--y", y, "response CSV")->required();
    app->add_option("--ref", ref, "reference directory")->required();
    app->add_option("--family", family, "observation family (taken from the reference when recorded)")
        ->check(CLI::IsMember({"gaussian", "bernoulli"}));
    app->add_option("--method", method, "search method")->check(CLI::IsMember({"l1", "forward"}));
    app->add_option("--max-size", max_size, "largest submodel size")->check(CLI::NonNegativeNumber);
    app->add_option("--alpha", alpha, "elastic-net mixing in (0, 1]");
    app->add_option("--nlambda", nlambda, "lambda grid length")->check(CLI::PositiveNumber);
    app->add_flag("--no-relax", no_relax, "keep penalized coefficients (l1 only)");
    app->add_option("--relax-ridge", relax_ridge, "ridge used when re-projecting")->check(CLI::NonNegativeNumber);
    app->add_option("--clusters-select", clusters_select, "clusters used during search")->check(CLI::PositiveNumber);
    app->add_option("--clusters-predict", clusters_predict, "clusters used for prediction")
        ->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "seed (falls back to PROJKIT_SEED)");
    app->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "output directory")->required();
  }

  SearchConfig search() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw FlagError("--alpha", "must lie in (0, 1]");
    if (no_relax && method != "l1") throw FlagError("--no-relax", "only applies to --method l1");
    SearchConfig s;
    s.method = method == "forward" ? SearchMethod::forward : SearchMethod::l1;
    s.alpha = alpha;
    s.nlambda = nlambda;
    s.max_size = max_size;
    s.relax = !no_relax;
    s.relax_ridge = relax_ridge;
    return s;
  }

  void record(json& cfg) const {
    cfg["x"] = x.string();
    cfg["y"] = y.string();
    cfg["ref"] = ref.string();
    cfg["method"] = method;
    cfg["max_size"] = max_size;
    cfg["alpha"] = alpha;
    cfg["nlambda"] = nlambda;
    cfg["relax"] = !no_relax;
    cfg["relax_ridge"] = relax_ridge;
    cfg["clusters_select"] = clusters_select;
    cfg["clusters_predict"] = clusters_predict;
  }
};

struct Inputs {
  CsvTable X;
  VectorXd y;
  LoadedReference ref;
};

Inputs load_inputs(const SelectionFlags& f, Manifest& m) {
  Inputs in;
  in.X = load_table(f.x, "--x");
  in.y = load_vector(f.y, "--y");
  if (in.y.size() != in.X.values.rows())
    throw ParseError("--y has " + std::to_string(in.y.size()) + " rows, --x has " + std::to_string(in.X.values.rows()));
  m.input("x", f.x);
  m.input("y", f.y);
  in.ref = load_reference(f.ref, f.family, m);
  check_response(in.y, in.ref.model.family, f.y);
  if (in.ref.model.draws.num_obs() != in.X.values.rows())
    throw ParseError("reference design has " + std::to_string(in.ref.model.draws.num_obs()) + " rows, data has " +
                     std::to_string(in.X.values.rows()));
  return in;
}

void write_path(const fs::path& out, const SelectionPath& path, const std::vector<std::string>& names) {
  const auto K = static_cast<Index>(path.submodels.size());
  MatrixXd rows(K, 3);
  for (Index k = 0; k < K; ++k) {
    rows(k, 0) = static_cast<double>(k);
    rows(k, 1) = k == 0 ? -1.0 : path.order[static_cast<std::size_t>(k - 1)];
    rows(k, 2) = path.losses[static_cast<std::size_t>(k)];
  }
  write_csv(out / "path.csv", {"k", "feature_index", "loss"}, rows);
  json order = json::array();
  for (int j : path.order) order.push_back({{"index", j}, {"name", names[static_cast<std::size_t>(j)]}});
  std::ofstream o(out / "order.json", std::ios::binary);
  o << order.dump(2) << '\n';
}

// Long format: term_index -1 is the intercept, -2 the gaussian noise variance.
std::vector<std::array<double, 5>> coefficient_rows(int k, const ProjectedSubmodel& sub) {
  std::vector<std::array<double, 5>> rows;
  for (Index c = 0; c < sub.num_clusters(); ++c) {
    const double w = sub.weights(c);
    rows.push_back({double(k), double(c), w, -1.0, sub.coeffs(c, 0)});
    for (std::size_t j = 0; j < sub.feature_set.size(); ++j)
      rows.push_back({double(k), double(c), w, double(sub.feature_set[j]), sub.coeffs(c, static_cast<Index>(j) + 1)});
    if (sub.dispersions) rows.push_back({double(k), double(c), w, -2.0, (*sub.dispersions)(c)});
  }
  return rows;
}

void write_coefficients(const fs::path& file, const std::vector<std::array<double, 5>>& rows) {
  MatrixXd m(static_cast<Index>(rows.size()), 5);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < 5; ++c) m(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  write_csv(file, {"k", "cluster", "weight", "term_index", "value"}, m);
}

void write_path_coefficients(const fs::path& out, const SelectionPath& path) {
  std::vector<std::array<double, 5>> rows;
  for (std::size_t k = 0; k < path.submodels.size(); ++k) {
    auto r = coefficient_rows(static_cast<int>(k), path.submodels[k]);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_coefficients(out / "path_coefficients.csv", rows);
}

// Seeds for the full-data cluster assignments; shared by varsel, cv-varsel and project.
constexpr std::uint64_t kSelectStream = 11;
constexpr std::uint64_t kPredictStream = 12;

// ---------------------------------------------------------------------------
// Commands

struct SimulateFlags {
  int n = 30, p = 500, p_rel = 150;
  double rho = 0.5;
  std::string task = "regression";
  std::optional<std::uint64_t> seed;
  fs::path out;
};

int cmd_simulate(const SimulateFlags& f) {
  ToyConfig cfg;
  cfg.n = f.n;
  cfg.p = f.p;
  cfg.p_rel = f.p_rel;
  cfg.rho = f.rho;
  cfg.task = f.task == "classification" ? ToyTask::classification : ToyTask::regression;
  if (f.n < 1) throw FlagError("--n", "must be positive");
  if (f.p < 1) throw FlagError("--p", "must be positive");
  if (f.p_rel < 0 || f.p_rel > f.p) throw FlagError("--p-rel", "must lie in [0, p]");
  if (!(f.rho >= 0.0 && f.rho < 1.0)) throw FlagError("--rho", "must lie in [0, 1) so the noise variance 1 - rho is positive");
  cfg.seed = resolve_seed(f.seed);
  const ToyData d = generate_toy(cfg);
  const fs::path out = prepare_out(f.out);
  std::vector<std::string> header;
  for (int j = 0; j < f.p; ++j) header.push_back("x" + std::to_string(j + 1));
  write_csv(out / "X.csv", header, d.X);
  write_vector(out / "y.csv", "y", d.y);
  write_vector(out / "f.csv", "f", d.f);
  Manifest m("simulate");
  m.config() = {{"n", f.n}, {"p", f.p}, {"p_rel", f.p_rel}, {"rho", f.rho}, {"task", f.task}};
  m.seed(cfg.seed);
  m.write(out);
  return 0;
}

struct FitRefFlags {
  fs::path x, y, out;
  std::string family = "gaussian";
  std::string model = "spc";
  int n_components = 3, n_gamma = 7, cv_folds = 5, draws = 4000;
  std::optional<std::uint64_t> seed;
};

json reference_config(const FitRefFlags& f) {
  return {{"family", f.family},       {"model", f.model},     {"n_components", f.n_components},
          {"n_gamma", f.n_gamma},     {"cv_folds", f.cv_folds}, {"draws", f.draws}};
}

ReferenceModel fit_reference(const json& cfg, const MatrixXd& X, const VectorXd& y, std::uint64_t seed) {
  const Family family = Family::from_name(cfg.at("family").get<std::string>());
  if (cfg.at("model").get<std::string>() == "linear") {
    HeadConfig head;
    head.n_draws = cfg.at("draws").get<int>();
    head.seed = seed;
    return fit_linear_reference(X, y, family, head);
  }
  SpcConfig spc;
  spc.n_components = cfg.at("n_components").get<int>();
  spc.n_gamma = cfg.at("n_gamma").get<int>();
  spc.cv_folds = cfg.at("cv_folds").get<int>();
  spc.n_draws = cfg.at("draws").get<int>();
  spc.seed = seed;
  return fit_spc_reference(X, y, family, spc);
}

int cmd_fit_ref(const FitRefFlags& f) {
  Manifest m("fit-ref");
  const CsvTable X = load_table(f.x, "--x");
  const VectorXd y = load_vector(f.y, "--y");
  if (y.size() != X.values.rows()) throw ParseError("--y row count differs from --x");
  check_response(y, Family::from_name(f.family), f.y);
  m.input("x", f.x);
  m.input("y", f.y);
  if (f.model == "spc" && f.cv_folds > y.size()) throw FlagError("--cv-folds", "exceeds the number of observations");
  const std::uint64_t seed = resolve_seed(f.seed);
  const json cfg = reference_config(f);
  const ReferenceModel ref = fit_reference(cfg, X.values, y, seed);
  const fs::path out = prepare_out(f.out);
  export_draws(ref, out / "design.csv", out / "draws.ndjson");
  {
    std::ofstream o(out / "feature_map.json", std::ios::binary);
    o << feature_map_json(*ref.feature_map).dump() << '\n';
  }
  json stored = cfg;
  stored["seed"] = seed;
  if (!ref.gamma_grid.empty()) {
    stored["gamma_chosen"] = ref.gamma_chosen;
    stored["gamma_grid"] = ref.gamma_grid;
    json cv = json::array();
    for (double v : ref.gamma_cv_mlpd) cv.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    stored["gamma_cv_mlpd"] = cv;
  }
  {
    std::ofstream o(out / "ref_config.json", std::ios::binary);
    o << stored.dump(2) << '\n';
  }
  m.config() = cfg;
  m.config()["x"] = f.x.string();
  m.config()["y"] = f.y.string();
  m.seed(seed);
  m.write(out);
  return 0;
}

int cmd_varsel(const SelectionFlags& f) {
  Manifest m("varsel");
  const Inputs in = load_inputs(f, m);
  const SearchConfig search = f.search();
  const std::uint64_t seed = resolve_seed(f.seed);
  const ReferenceModel& ref = in.ref.model;
  const Index S = ref.draws.num_draws();
  const ReferenceFit sel = cluster_draws(ref.draws, ref.family, static_cast<int>(std::min<Index>(f.clusters_select, S)),
                                         derive_seed(seed, kSelectStream));
  const ReferenceFit pred = cluster_draws(ref.draws, ref.family,
                                          static_cast<int>(std::min<Index>(f.clusters_predict, S)),
                                          derive_seed(seed, kPredictStream));
  const SelectionPath path = build_path(in.X.values, sel, pred, search);
  const fs::path out = prepare_out(f.out);
  write_path(out, path, in.X.header);
  write_path_coefficients(out, path);
  f.record(m.config());
  m.seed(seed);
  m.write(out);
  return 0;
}

struct CvFlags {
  SelectionFlags sel;
  std::string scheme = "loo";
  int folds = 10;
  int subsample = 0;
  std::optional<std::uint64_t> subsample_seed;
  std::string rule = "ref-1se";
  bool select_once = false;
};

int cmd_cv_varsel(const CvFlags& f) {
  Manifest m("cv-varsel");
  const Inputs in = load_inputs(f.sel, m);
  const Index n = in.X.values.rows();
  CvConfig cfg;
  cfg.search = f.sel.search();
  cfg.clusters_select = f.sel.clusters_select;
  cfg.clusters_predict = f.sel.clusters_predict;
  cfg.validate_search = !f.select_once;
  cfg.threads = f.sel.threads;
  cfg.seed = resolve_seed(f.sel.seed);

  CvScheme scheme;
  ReferenceBuilder builder;
  if (f.scheme == "kfold") {
    if (f.folds < 2 || f.folds > n) throw FlagError("--folds", "must lie in [2, n]");
    if (!in.ref.config) throw FlagError("--scheme", "kfold needs a reference directory written by fit-ref");
    const json rc = *in.ref.config;
    builder = [rc](const MatrixXd& X, const VectorXd& y, std::uint64_t s) { return fit_reference(rc, X, y, s); };
    scheme = CvScheme::kfold(f.folds);
  } else if (f.scheme == "loo-subsample") {
    if (f.subsample < 1 || f.subsample > n) throw FlagError("--subsample", "must lie in [1, n]");
    scheme = CvScheme::loo_subsample(f.subsample, f.subsample_seed.value_or(derive_seed(cfg.seed, 14)));
  } else {
    scheme = CvScheme::loo();
  }
  const CvResult res = cv_varsel(in.X.values, in.y, in.ref.model, builder ? &builder : nullptr, scheme, cfg);

  const fs::path out = prepare_out(f.sel.out);
  const UtilitySummary& s = res.summary;
  const long n_bad =
      res.pointwise.khat ? static_cast<long>((res.pointwise.khat->array() > kKhatBad).count()) : 0L;
  {
    std::ofstream o(out / "summary.csv", std::ios::binary);
    o << "k,delta_mlpd,se,mlpd,se_abs,n_khat_gt_07\n";
    for (Index k = 0; k < s.delta_mean.size(); ++k)
      o << s.sizes[static_cast<std::size_t>(k)] << ',' << format_double(s.delta_mean(k)) << ','
        << format_double(s.delta_se(k)) << ',' << format_double(s.abs_mean(k)) << ',' << format_double(s.abs_se(k))
        << ',' << n_bad << '\n';
    // The reference compared with itself.
    o << "full," << format_double(0.0) << ',' << format_double(0.0) << ',' << format_double(s.ref_mean) << ','
      << format_double(s.ref_se) << ',' << n_bad << '\n';
  }
  {
    const Index K = res.pointwise.u_sub.rows();
    MatrixXd pw(n, 4 + K);
    std::vector<std::string> header{"i", "weight", "khat", "u_ref"};
    for (Index k = 0; k < K; ++k) header.push_back("u_" + std::to_string(k));
    for (Index i = 0; i < n; ++i) {
      pw(i, 0) = static_cast<double>(i);
      pw(i, 1) = res.pointwise.weights(i);
      pw(i, 2) = res.pointwise.khat ? (*res.pointwise.khat)(i) : std::numeric_limits<double>::quiet_NaN();
      pw(i, 3) = res.pointwise.u_ref(i);
      pw.block(i, 4, 1, K) = res.pointwise.u_sub.col(i).transpose();
    }
    write_csv(out / "pointwise.csv", header, pw);
  }
  write_path(out, res.full_path, in.X.header);
  write_path_coefficients(out, res.full_path);
  const int ref_choice = select_size(s, SizeRule::ref_1se);
  const int best_choice = select_size(s, SizeRule::best_1se);
  const int chosen = f.rule == "best-1se" ? best_choice : ref_choice;
  json sel = {{"rule", f.rule},
              {"size", chosen},
              {"ref_1se", ref_choice},
              {"best_1se", best_choice},
              {"failed_folds", res.failed_folds},
              {"n_khat_gt_07", n_bad}};
  {
    std::ofstream o(out / "selection.json", std::ios::binary);
    o << sel.dump(2) << '\n';
  }
  std::cout << "chosen size (" << f.rule << "): " << chosen << '\n';
  f.sel.record(m.config());
  m.config()["scheme"] = f.scheme;
  m.config()["folds"] = f.folds;
  m.config()["subsample"] = f.subsample;
  m.config()["subsample_seed"] = scheme.subsample_seed;
  m.config()["rule"] = f.rule;
  m.config()["select_once"] = f.select_once;
  m.seed(cfg.seed);
  m.write(out);
  return 0;
}

struct ProjectFlags {
  fs::path x, y, ref, path, out;
  std::string family;
  int size = 0;
  int clusters = 10;
  double relax_ridge = 0.0;
  std::optional<std::uint64_t> seed;
};

int cmd_project(const ProjectFlags& f) {
  Manifest m("project");
  SelectionFlags sf;
  sf.x = f.x;
  sf.y = f.y;
  sf.ref = f.ref;
  sf.family = f.family;
  const Inputs in = load_inputs(sf, m);
  require_file(f.path / "path.csv", "--path");
  const CsvTable pt = read_csv(f.path / "path.csv");
  m.input("path", f.path / "path.csv");
  if (pt.header.size() < 2 || pt.header[1] != "feature_index") throw ParseError("--path: not a path.csv");
  std::vector<int> order;
  for (Index r = 1; r < pt.values.rows(); ++r) order.push_back(static_cast<int>(pt.values(r, 1)));
  if (f.size < 0 || f.size > static_cast<int>(order.size()))
    throw FlagError("--size", "must lie in [0, " + std::to_string(order.size()) + "]");
  for (int j : order)
    if (j < 0 || j >= in.X.values.cols()) throw ParseError("--path: feature index out of range");
  const std::uint64_t seed = resolve_seed(f.seed);
  const ReferenceModel& ref = in.ref.model;
  const ReferenceFit pred =
      cluster_draws(ref.draws, ref.family, static_cast<int>(std::min<Index>(f.clusters, ref.draws.num_draws())),
                    derive_seed(seed, kPredictStream));
  const std::vector<int> features(order.begin(), order.begin() + f.size);
  const ProjectedSubmodel sub = project(in.X.values, features, pred, f.relax_ridge);
  const fs::path out = prepare_out(f.out);
  write_coefficients(out / "coefficients.csv", coefficient_rows(f.size, sub));
  json names = json::array();
  for (int j : features) names.push_back(in.X.header[static_cast<std::size_t>(j)]);
  json info = {{"size", f.size}, {"features", features}, {"names", names}, {"loss", sub.loss}};
  {
    std::ofstream o(out / "projection.json", std::ios::binary);
    o << info.dump(2) << '\n';
  }
  m.config() = {{"x", f.x.string()}, {"y", f.y.string()},        {"ref", f.ref.string()},
                {"path", f.path.string()}, {"size", f.size}, {"clusters", f.clusters},
                {"relax_ridge", f.relax_ridge}};
  m.seed(seed);
  m.write(out);
  return 0;
}

struct TheoryFlags {
  int instances = 1000;
  int mc_instances = 0;
  int mc_replications = 100000;
  std::optional<std::uint64_t> seed;
  int threads = default_threads();
  fs::path out;
};

int cmd_theory_check(const TheoryFlags& f) {
  if (f.mc_instances > 0 && f.mc_replications < 100) throw FlagError("--mc-replications", "must be at least 100");
  const std::uint64_t seed = resolve_seed(f.seed);
  const TheoryReport report = theory_check(f.instances, f.mc_instances, f.mc_replications, seed, f.threads);
  const fs::path out = prepare_out(f.out);
  write_theory_report(out / "theory_report.csv", report);
  for (const auto& c : report.identities)
    std::cout << c.identity << ": max discrepancy " << format_double(c.max_abs_discrepancy) << " over "
              << c.instances << " instances\n";
  Manifest m("theory-check");
  m.config() = {{"instances", f.instances}, {"mc_instances", f.mc_instances}, {"mc_replications", f.mc_replications}};
  m.seed(seed);
  m.write(out);
  if (!report.passed()) throw NumericalError("theory verification failed; see theory_report.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projection predictive feature selection for GLMs"};
  app.set_version_flag("--version", PROJKIT_VERSION);
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* c_sim = app.add_subcommand("simulate", "generate synthetic data");
  c_sim->add_option("--n", sim.n, "observations");
  c_sim->add_option("--p", sim.p, "features");
  c_sim->add_option("--p-rel", sim.p_rel, "relevant features");
  c_sim->add_option("--rho", sim.rho, "feature-latent correlation in [0, 1)");
  c_sim->add_option("--task", sim.task, "regression or classification")
      ->check(CLI::IsMember({"regression", "classification"}));
  c_sim->add_option("--seed", sim.seed, "seed (falls back to PROJKIT_SEED)");
  c_sim->add_option("--out", sim.out, "output directory")->required();

  FitRefFlags fr;
  auto* c_fit = app.add_subcommand("fit-ref", "fit a reference model");
  c_fit->add_option("--x", fr.x, "feature CSV")->required();
  c_fit->add_option("--y", fr.y, "response CSV")->required();
  c_fit->add_option("--family", fr.family, "observation family")->check(CLI::IsMember({"gaussian", "bernoulli"}));
  c_fit->add_option("--model", fr.model, "spc or linear")->check(CLI::IsMember({"spc", "linear"}));
  c_fit->add_option("--n-components", fr.n_components, "principal components")->check(CLI::PositiveNumber);
  c_fit->add_option("--n-gamma", fr.n_gamma, "screening thresholds")->check(CLI::Range(2, 1000));
  c_fit->add_option("--cv-folds", fr.cv_folds, "folds for threshold choice")->check(CLI::Range(2, 1000000));
  c_fit->add_option("--draws", fr.draws, "posterior draws")->check(CLI::PositiveNumber);
  c_fit->add_option("--seed", fr.seed, "seed (falls back to PROJKIT_SEED)");
  c_fit->add_option("--out", fr.out, "output directory")->required();

  SelectionFlags vs;
  auto* c_vs = app.add_subcommand("varsel", "search a selection path on the full data");
  vs.add(c_vs);

  CvFlags cv;
  auto* c_cv = app.add_subcommand("cv-varsel", "search and validate the selection path");
  cv.sel.add(c_cv);
  c_cv->add_option("--scheme", cv.scheme, "kfold, loo or loo-subsample")
      ->check(CLI::IsMember({"kfold", "loo", "loo-subsample"}));
  c_cv->add_option("--folds", cv.folds, "folds for kfold");
  c_cv->add_option("--subsample", cv.subsample, "points evaluated by loo-subsample");
  c_cv->add_option("--subsample-seed", cv.subsample_seed, "subsample seed");
  c_cv->add_option("--rule", cv.rule, "size rule")->check(CLI::IsMember({"ref-1se", "best-1se"}));
  c_cv->add_flag("--select-once", cv.select_once, "order features once on the full data");

  ProjectFlags pj;
  auto* c_pj = app.add_subcommand("project", "project the reference onto a prefix of a path");
  c_pj->add_option("--x", pj.x, "feature CSV")->required();
  c_pj->add_option("--y", pj.y, "response CSV")->required();
  c_pj->add_option("--ref", pj.ref, "reference directory")->required();
  c_pj->add_option("--path", pj.path, "directory holding path.csv")->required();
  c_pj->add_option("--family", pj.family, "observation family")->check(CLI::IsMember({"gaussian", "bernoulli"}));
  c_pj->add_option("--size", pj.size, "number of leading features")->required();
  c_pj->add_option("--clusters", pj.clusters, "clusters")->check(CLI::PositiveNumber);
  c_pj->add_option("--relax-ridge", pj.relax_ridge, "ridge")->check(CLI::NonNegativeNumber);
  c_pj->add_option("--seed", pj.seed, "seed (falls back to PROJKIT_SEED)");
  c_pj->add_option("--out", pj.out, "output directory")->required();

  TheoryFlags th;
  auto* c_th = app.add_subcommand("theory-check", "verify the gain identities numerically");
  c_th->add_option("--instances", th.instances, "random instances")->check(CLI::PositiveNumber);
  c_th->add_option("--mc-instances", th.mc_instances, "Monte Carlo instances")->check(CLI::NonNegativeNumber);
  c_th->add_option("--mc-replications", th.mc_replications, "Monte Carlo replications");
  c_th->add_option("--seed", th.seed, "seed (falls back to PROJKIT_SEED)");
  c_th->add_option("--threads", th.threads, "worker threads")->check(CLI::PositiveNumber);
  c_th->add_option("--out", th.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitFlags;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_fit->parsed()) return cmd_fit_ref(fr);
    if (c_vs->parsed()) return cmd_varsel(vs);
    if (c_cv->parsed()) return cmd_cv_varsel(cv);
    if (c_pj->parsed()) return cmd_project(pj);
    if (c_th->parsed()) return cmd_theory_check(th);
  } catch (const FlagError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFlags;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid input: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "error: numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const EmptyScreenError& e) {
    std::cerr << "error: numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
