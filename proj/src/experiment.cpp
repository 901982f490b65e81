#include "qslgd/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "qslgd/errors.hpp"

namespace qslgd {
namespace {

using json = nlohmann::json;

// Typed access to one JSON object; every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field(key), "must be finite");
    return d;
  }

  long integer(const std::string& key, long fallback) {
    if (!has(key)) return fallback;
    return as_integer(j_.at(key), field(key));
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    if (!has(key)) return {};
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(field(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError(field(key), "unknown key");
  }

  static long as_integer(const json& v, const std::string& where) {
    if (v.is_number_integer()) return v.get<long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long>(d);
    }
    throw ConfigError(where, "expected an integer");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

KernelSpec parse_kernel(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  KernelSpec k;
  k.type = r.string("type", "");
  if (k.type == "sine_torus") {
    k.scale = r.number("scale", 1.0);
  } else if (k.type == "poly_sphere") {
    k.d = static_cast<int>(r.integer("d", 3));
    if (k.d < 2) throw ConfigError(r.field("d"), "must be >= 2");
    const long seed = r.integer("matrix_seed", 0);
    if (seed < 0) throw ConfigError(r.field("matrix_seed"), "must be >= 0");
    k.matrix_seed = static_cast<std::uint64_t>(seed);
    k.scale = r.number("scale", 1.0);
  } else {
    throw ConfigError(r.field("type"), "expected \"sine_torus\" or \"poly_sphere\"");
  }
  r.finish();
  return k;
}

ManifoldSpec kernel_manifold(const KernelSpec& k) {
  return k.type == "sine_torus" ? ManifoldSpec::torus(1) : ManifoldSpec::sphere(k.d);
}

InitSpec parse_init(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "uniform") return InitSpec::uniform();
    throw ConfigError(path, "expected \"uniform\" or an object");
  }
  ObjectReader r(j, path);
  const std::string type = r.string("type", "uniform");
  InitSpec init;
  if (type == "uniform") {
    init = InitSpec::uniform();
  } else if (type == "box") {
    init = InitSpec::sub_box(r.numbers("lo"), r.numbers("hi"));
    if (init.box.lo.empty() || init.box.lo.size() != init.box.hi.size())
      throw ConfigError(path, "box needs matching nonempty \"lo\" and \"hi\"");
    for (std::size_t i = 0; i < init.box.lo.size(); ++i)
      if (!(init.box.lo[i] >= 0.0 && init.box.lo[i] < init.box.hi[i] && init.box.hi[i] <= 1.0))
        throw ConfigError(path, "box bounds must satisfy 0 <= lo < hi <= 1");
  } else {
    throw ConfigError(r.field("type"), "expected \"uniform\" or \"box\"");
  }
  r.finish();
  return init;
}

const std::set<std::string>& sweepable() {
  static const std::set<std::string> names = {"beta", "h",  "h_x", "h_y", "n", "n_x", "n_y",
                                              "k0",   "k1", "k2",  "T",   "d", "scale"};
  return names;
}

bool integer_param(const std::string& p) {
  return p == "n" || p == "n_x" || p == "n_y" || p == "k0" || p == "k1" || p == "k2" || p == "T" || p == "d";
}

std::string kl_name(int bins) { return "kl" + std::to_string(bins); }

void validate_init(const InitSpec& init, const ManifoldSpec& m, const std::string& field) {
  if (init.kind == InitSpec::Kind::kBox) {
    if (m.kind != ManifoldKind::kTorus) throw ConfigError(field, "box initialization requires a torus");
    if (static_cast<int>(init.box.lo.size()) != m.dim)
      throw ConfigError(field, "box dimension does not match " + m.to_string());
  }
}

double sample_stderr(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

struct Row {
  std::string prefix;  // every column except elapsed_seconds
  double elapsed = 0.0;
};

struct CellResult {
  std::vector<Row> rows;
  std::vector<double> final_metrics;  // empty if the run failed
  bool failed = false;
};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path sibling_path(const std::filesystem::path& output, const std::string& suffix) {
  std::filesystem::path p = output;
  p.replace_extension();
  p += "." + suffix;
  return p;
}

Kernel KernelSpec::build() const {
  if (type == "sine_torus") return Kernel::sine_torus(scale);
  if (type == "poly_sphere") {
    Kernel k = Kernel::polynomial_sphere_gaussian(d, matrix_seed);
    return scale == 1.0 ? k : k.scaled(scale);
  }
  throw ConfigError("kernel.type", "unknown kernel \"" + type + "\"");
}

RunConfig ExperimentConfig::cell_config(std::optional<double> value, int repeat) const {
  RunConfig rc = run;
  if (value) {
    const double v = *value;
    const std::string& p = sweep.param;
    const auto count = static_cast<long>(v);
    if (p == "beta") rc.beta = v;
    else if (p == "h") rc.h_x = rc.h_y = v;
    else if (p == "h_x") rc.h_x = v;
    else if (p == "h_y") rc.h_y = v;
    else if (p == "n") rc.n_x = rc.n_y = static_cast<std::size_t>(count);
    else if (p == "n_x") rc.n_x = static_cast<std::size_t>(count);
    else if (p == "n_y") rc.n_y = static_cast<std::size_t>(count);
    else if (p == "k0") rc.k0 = count;
    else if (p == "k1") rc.k1 = count;
    else if (p == "k2") rc.k2 = count;
    else if (p == "T") rc.T = count;
  }
  if (inner_budget) rc.T = algorithm == Algorithm::kQslgd ? *inner_budget / std::max(rc.k1, 1L) : *inner_budget;
  rc.seed = run.seed + static_cast<std::uint64_t>(repeat);
  return rc;
}

KernelSpec ExperimentConfig::cell_kernel(std::optional<double> value) const {
  KernelSpec k = kernel;
  if (value && sweep.param == "d") k.d = static_cast<int>(*value);
  if (value && sweep.param == "scale") k.scale = *value;
  return k;
}

ExperimentConfig parse_experiment(std::string_view text) {
  const json j = parse_json(text);
  ObjectReader r(j, "");
  ExperimentConfig cfg;

  const std::string algo = r.string("algorithm", "");
  if (algo == "qslgd") cfg.algorithm = Algorithm::kQslgd;
  else if (algo == "lgda") cfg.algorithm = Algorithm::kLgda;
  else throw ConfigError("algorithm", "expected \"qslgd\" or \"lgda\"");

  if (!r.has("kernel")) throw ConfigError("kernel", "missing");
  cfg.kernel = parse_kernel(r.child("kernel"), "kernel");
  const ManifoldSpec m = kernel_manifold(cfg.kernel);
  if (r.has("manifold")) {
    const ManifoldSpec given = ManifoldSpec::parse(r.string("manifold", ""));
    if (!(given == m)) throw ConfigError("manifold", "kernel lives on " + m.to_string());
  }

  RunConfig& rc = cfg.run;
  const long n = r.integer("n", 1000);
  const long n_x = r.integer("n_x", n);
  const long n_y = r.integer("n_y", n);
  if (n_x < 1) throw ConfigError("n_x", "must be >= 1");
  if (n_y < 1) throw ConfigError("n_y", "must be >= 1");
  rc.n_x = static_cast<std::size_t>(n_x);
  rc.n_y = static_cast<std::size_t>(n_y);
  rc.k0 = r.integer("k0", rc.k0);
  rc.k1 = r.integer("k1", rc.k1);
  rc.k2 = r.integer("k2", rc.k2);
  rc.T = r.integer("T", rc.T);
  const double h = r.number("h", 0.01);
  rc.h_x = r.number("h_x", h);
  rc.h_y = r.number("h_y", h);
  rc.beta = r.number("beta", rc.beta);
  const long seed = r.integer("seed", 0);
  if (seed < 0) throw ConfigError("seed", "must be >= 0");
  rc.seed = static_cast<std::uint64_t>(seed);
  if (r.has("init_x")) rc.init_x = parse_init(r.child("init_x"), "init_x");
  if (r.has("init_y")) rc.init_y = parse_init(r.child("init_y"), "init_y");
  validate_init(rc.init_x, m, "init_x");
  validate_init(rc.init_y, m, "init_y");
  const std::string update = r.string("lgda_update", "alternating");
  if (update == "alternating") rc.lgda_update = LgdaUpdate::kAlternating;
  else if (update == "simultaneous") rc.lgda_update = LgdaUpdate::kSimultaneous;
  else throw ConfigError("lgda_update", "expected \"alternating\" or \"simultaneous\"");
  rc.threads = static_cast<int>(r.integer("threads", 1));

  if (r.has("inner_budget")) {
    const long b = r.integer("inner_budget", 0);
    if (b < 1) throw ConfigError("inner_budget", "must be >= 1");
    cfg.inner_budget = b;
  }

  if (r.has("sweep")) {
    ObjectReader s(r.child("sweep"), "sweep");
    cfg.sweep.param = s.string("param", "");
    cfg.sweep.values = s.numbers("values");
    cfg.sweep.repeats = static_cast<int>(s.integer("repeats", 1));
    s.finish();
    if (cfg.sweep.repeats < 1) throw ConfigError("sweep.repeats", "must be >= 1");
    if (!cfg.sweep.param.empty() && !sweepable().contains(cfg.sweep.param))
      throw ConfigError("sweep.param", "cannot sweep \"" + cfg.sweep.param + "\"");
    if (cfg.sweep.param.empty() && !cfg.sweep.values.empty())
      throw ConfigError("sweep.param", "values given without a parameter");
    if (!cfg.sweep.param.empty() && cfg.sweep.values.empty())
      throw ConfigError("sweep.values", "must list at least one value");
    if (cfg.sweep.param == "d" && cfg.kernel.type != "poly_sphere")
      throw ConfigError("sweep.param", "\"d\" sweeps need a poly_sphere kernel");
    for (double v : cfg.sweep.values) {
      if (!std::isfinite(v)) throw ConfigError("sweep.values", "must be finite");
      if (integer_param(cfg.sweep.param) && (v != std::floor(v) || v < 0))
        throw ConfigError("sweep.values", "\"" + cfg.sweep.param + "\" needs nonnegative integers");
      if (cfg.sweep.param == "d" && v < 2) throw ConfigError("sweep.values", "d must be >= 2");
    }
  }

  cfg.record_every = r.integer("record_every", 100);
  if (cfg.record_every < 1) throw ConfigError("record_every", "must be >= 1");
  cfg.kl_bins = static_cast<int>(r.integer("kl_bins", 10));
  if (cfg.kl_bins < 1) throw ConfigError("kl_bins", "must be >= 1");
  cfg.grid_n = static_cast<int>(r.integer("grid_n", 256));
  if (cfg.grid_n < 2) throw ConfigError("grid_n", "must be >= 2");
  cfg.workers = static_cast<int>(r.integer("workers", 1));
  if (cfg.workers < 1) throw ConfigError("workers", "must be >= 1");
  cfg.output = r.string("output", cfg.output);

  if (r.has("ni")) {
    ObjectReader s(r.child("ni"), "ni");
    cfg.ni.grid_points = static_cast<int>(s.integer("grid_points", cfg.ni.grid_points));
    cfg.ni.starts = static_cast<int>(s.integer("starts", cfg.ni.starts));
    cfg.ni.steps = static_cast<int>(s.integer("steps", cfg.ni.steps));
    cfg.ni.step = s.number("step", cfg.ni.step);
    const long ni_seed = s.integer("seed", 0);
    if (ni_seed < 0) throw ConfigError("ni.seed", "must be >= 0");
    cfg.ni.seed = static_cast<std::uint64_t>(ni_seed);
    s.finish();
    if (cfg.ni.grid_points < 1) throw ConfigError("ni.grid_points", "must be >= 1");
    if (cfg.ni.starts < 1) throw ConfigError("ni.starts", "must be >= 1");
    if (cfg.ni.steps < 0) throw ConfigError("ni.steps", "must be >= 0");
    if (!(cfg.ni.step > 0.0)) throw ConfigError("ni.step", "must be positive");
  }

  if (r.has("metrics")) {
    const json& ms = r.child("metrics");
    if (!ms.is_array()) throw ConfigError("metrics", "expected an array of names");
    for (const auto& e : ms) {
      if (!e.is_string()) throw ConfigError("metrics", "expected an array of names");
      std::string name = e.get<std::string>();
      if (name == "kl") name = kl_name(cfg.kl_bins);
      cfg.metrics.push_back(name);
    }
  } else {
    cfg.metrics = {m == ManifoldSpec::torus(1) ? kl_name(cfg.kl_bins) : std::string("ni")};
  }
  if (cfg.metrics.empty()) throw ConfigError("metrics", "must name at least one metric");
  for (const auto& name : cfg.metrics) {
    if (name == kl_name(cfg.kl_bins)) {
      if (!(m == ManifoldSpec::torus(1))) throw ConfigError("metrics", name + " needs a torus:1 game");
    } else if (name == "free_energy_grid") {
      if (cfg.kernel.type != "sine_torus") throw ConfigError("metrics", "free_energy_grid needs a sine_torus kernel");
    } else if (name != "ni") {
      throw ConfigError("metrics", "unknown metric \"" + name + "\" (known: " + kl_name(cfg.kl_bins) +
                                       ", ni, free_energy_grid)");
    }
  }
  r.finish();

  // Every cell must be runnable before anything starts.
  const bool qs = cfg.algorithm == Algorithm::kQslgd;
  auto check_cell = [&](std::optional<double> v) {
    const RunConfig c = cfg.cell_config(v, 0);
    c.validate(qs);
    if (!qs && c.h_x != c.h_y) throw ConfigError("h_y", "lgda uses one step size; h_x and h_y must match");
  };
  if (cfg.sweep.values.empty()) check_cell(std::nullopt);
  for (double v : cfg.sweep.values) check_cell(v);
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) { return parse_experiment(read_text(path)); }

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, int workers) {
  std::vector<std::optional<double>> values;
  if (cfg.sweep.values.empty()) values.emplace_back(std::nullopt);
  for (double v : cfg.sweep.values) values.emplace_back(v);
  const int repeats = cfg.sweep.repeats;
  const std::size_t jobs = values.size() * static_cast<std::size_t>(repeats);
  std::vector<CellResult> results(jobs);

  auto run_cell = [&](std::size_t job) {
    const auto& value = values[job / static_cast<std::size_t>(repeats)];
    const int repeat = static_cast<int>(job % static_cast<std::size_t>(repeats));
    const RunConfig rc = cfg.cell_config(value, repeat);
    const Kernel kernel = cfg.cell_kernel(value).build();
    std::optional<grid::GridKernel> grid_kernel;
    for (const auto& name : cfg.metrics)
      if (name == "free_energy_grid") grid_kernel = grid::GridKernel::from_kernel(kernel, cfg.grid_n);

    const std::string lead = (value ? format_double(*value) : std::string()) + "," + std::to_string(repeat) + "," +
                             std::to_string(rc.seed) + ",";
    CellResult& out = results[job];
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    auto observer = [&](std::int64_t t, const Ensemble& x, const Ensemble& y) {
      if (t % cfg.record_every != 0 && t != rc.T) return;
      std::vector<double> metrics;
      for (const auto& name : cfg.metrics) {
        if (name == "ni") {
          metrics.push_back(ni_error(x, y, kernel, cfg.ni).value);
        } else if (name == "free_energy_grid") {
          const Histogram h = histogram(x, cfg.grid_n);
          std::vector<double> dens(h.counts.size());
          for (std::size_t i = 0; i < dens.size(); ++i) dens[i] = static_cast<double>(h.counts[i]);
          metrics.push_back(grid::free_energy(grid::GridDensity::normalized(std::move(dens)), *grid_kernel, rc.beta));
        } else {
          metrics.push_back(kl_to_reference(x, cfg.kl_bins));
        }
      }
      std::string row = lead + std::to_string(t);
      for (double v : metrics) row += "," + format_double(v);
      row += ",ok";
      out.rows.push_back({std::move(row), elapsed()});
      if (t == rc.T) out.final_metrics = std::move(metrics);
    };

    try {
      if (cfg.algorithm == Algorithm::kQslgd)
        run_qslgd(rc, kernel, observer);
      else
        run_lgda(rc, kernel, observer);
    } catch (const NumericalBlowUp& e) {
      std::string row = lead + std::to_string(e.iteration());
      for (std::size_t i = 0; i < cfg.metrics.size(); ++i) row += ",nan";
      row += ",error: " + std::string(e.what());
      out.rows.push_back({std::move(row), elapsed()});
      out.final_metrics.clear();
      out.failed = true;
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) run_cell(job);
  };
  {
    const auto pool_size = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < std::min(pool_size, jobs); ++w) pool.emplace_back(worker);
    worker();
  }

  ExperimentOutcome outcome;
  std::string header = "sweep_value,repeat,seed,outer_iter";
  for (const auto& name : cfg.metrics) header += "," + name;
  header += ",status,elapsed_seconds\n";
  outcome.csv = header;
  for (const auto& cell : results) {
    outcome.numerical_failure = outcome.numerical_failure || cell.failed;
    for (const auto& row : cell.rows) outcome.csv += row.prefix + "," + format_double(row.elapsed) + "\n";
  }

  outcome.summary_csv = "sweep_value,metric,mean,stderr,repeats\n";
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const std::string label = values[vi] ? format_double(*values[vi]) : std::string();
    for (std::size_t mi = 0; mi < cfg.metrics.size(); ++mi) {
      std::vector<double> finals;
      for (int r = 0; r < repeats; ++r) {
        const auto& cell = results[vi * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)];
        if (!cell.final_metrics.empty()) finals.push_back(cell.final_metrics[mi]);
      }
      double mean = std::nan("");
      double se = std::nan("");
      if (!finals.empty()) {
        mean = 0.0;
        for (double v : finals) mean += v;
        mean /= static_cast<double>(finals.size());
        se = sample_stderr(finals, mean);
      }
      outcome.summary_csv += label + "," + cfg.metrics[mi] + "," + format_double(mean) + "," + format_double(se) +
                             "," + std::to_string(finals.size()) + "\n";
    }
  }
  return outcome;
}

OracleConfig parse_oracle(std::string_view text) {
  const json j = parse_json(text);
  ObjectReader r(j, "");
  OracleConfig cfg;
  if (!r.has("kernel")) throw ConfigError("kernel", "missing");
  cfg.kernel = parse_kernel(r.child("kernel"), "kernel");
  if (cfg.kernel.type != "sine_torus") throw ConfigError("kernel.type", "the grid oracle supports sine_torus only");
  cfg.beta = r.number("beta", cfg.beta);
  if (!(cfg.beta > 0.0)) throw ConfigError("beta", "must be positive");
  cfg.grid_n = static_cast<int>(r.integer("grid_n", cfg.grid_n));
  if (cfg.grid_n < 2) throw ConfigError("grid_n", "must be >= 2");
  cfg.fixed_point.damping = r.number("damping", cfg.fixed_point.damping);
  if (!(cfg.fixed_point.damping > 0.0 && cfg.fixed_point.damping <= 1.0))
    throw ConfigError("damping", "must lie in (0, 1]");
  cfg.fixed_point.tol = r.number("tol", cfg.fixed_point.tol);
  if (!(cfg.fixed_point.tol > 0.0)) throw ConfigError("tol", "must be positive");
  cfg.fixed_point.max_iter = r.integer("max_iter", cfg.fixed_point.max_iter);
  if (cfg.fixed_point.max_iter < 1) throw ConfigError("max_iter", "must be >= 1");
  cfg.fixed_point.adaptive = r.boolean("adaptive_damping", cfg.fixed_point.adaptive);
  cfg.output = r.string("output", cfg.output);
  if (r.has("pde")) {
    ObjectReader p(r.child("pde"), "pde");
    cfg.pde = true;
    cfg.coupled = p.boolean("coupled", false);
    cfg.init = p.string("init", cfg.init);
    if (cfg.init != "bump" && cfg.init != "uniform") throw ConfigError("pde.init", "expected \"bump\" or \"uniform\"");
    cfg.bump_center = p.number("bump_center", cfg.bump_center);
    cfg.bump_width = p.number("bump_width", cfg.bump_width);
    if (!(cfg.bump_width > 0.0)) throw ConfigError("pde.bump_width", "must be positive");
    cfg.t_end = p.number("t_end", cfg.t_end);
    if (!(cfg.t_end > 0.0)) throw ConfigError("pde.t_end", "must be positive");
    cfg.pde_record_every = p.integer("record_every", cfg.pde_record_every);
    if (cfg.pde_record_every < 1) throw ConfigError("pde.record_every", "must be >= 1");
    p.finish();
  }
  r.finish();
  return cfg;
}

OracleConfig load_oracle(const std::filesystem::path& path) { return parse_oracle(read_text(path)); }

grid::GridDensity bump_density(int n, double center, double width) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double d = std::abs((i + 0.5) / n - center);
    d = std::min(d, 1.0 - d);
    v[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (width * width));
  }
  return grid::GridDensity::normalized(std::move(v));
}

OracleOutcome run_oracle(const OracleConfig& cfg) {
  const Kernel kernel = cfg.kernel.build();
  const grid::GridKernel k = grid::GridKernel::from_kernel(kernel, cfg.grid_n);
  const grid::FixedPointResult fp = grid::fixed_point_solve(k, cfg.beta, cfg.fixed_point);

  OracleOutcome out;
  out.iterations = fp.iterations;
  out.residual = fp.residual;

  std::optional<grid::GridDensity> p_final;
  std::optional<grid::GridDensity> q_final;
  if (cfg.pde) {
    grid::GridDensity p = cfg.init == "bump" ? bump_density(cfg.grid_n, cfg.bump_center, cfg.bump_width)
                                             : grid::GridDensity::uniform(cfg.grid_n);
    grid::GridDensity q = p;
    std::ostringstream rows;
    rows << (cfg.coupled ? "step,time,tv_p,tv_q,clipped\n" : "step,time,free_energy,tv_to_p_star,clipped\n");
    double t = 0.0;
    long step = 0;
    double energy = grid::free_energy(p, k, cfg.beta);
    auto record = [&](double clipped) {
      rows << step << ',' << format_double(t) << ',';
      if (cfg.coupled)
        rows << format_double(grid::total_variation(p, fp.p)) << ',' << format_double(grid::total_variation(q, fp.q));
      else
        rows << format_double(energy) << ',' << format_double(grid::total_variation(p, fp.p));
      rows << ',' << format_double(clipped) << '\n';
    };
    record(0.0);
    while (t < cfg.t_end) {
      double clipped = 0.0;
      double dt = 0.0;
      if (cfg.coupled) {
        auto res = grid::coupled_pde_step(p, q, k, cfg.beta);
        if (t + res.dt > cfg.t_end) res = grid::coupled_pde_step(p, q, k, cfg.beta, cfg.t_end - t);
        p = std::move(res.p);
        q = std::move(res.q);
        clipped = res.clipped;
        dt = res.dt;
      } else {
        auto res = grid::pde_step(p, k, cfg.beta);
        if (t + res.dt > cfg.t_end) res = grid::pde_step(p, k, cfg.beta, cfg.t_end - t);
        p = std::move(res.density);
        clipped = res.clipped;
        dt = res.dt;
        const double next = grid::free_energy(p, k, cfg.beta);
        if (next > energy + 1e-12) out.free_energy_monotone = false;
        energy = next;
      }
      t = std::min(t + dt, cfg.t_end);
      ++step;
      out.max_clipped = std::max(out.max_clipped, clipped);
      if (step % cfg.pde_record_every == 0 || t >= cfg.t_end) record(clipped);
    }
    out.pde_csv = rows.str();
    p_final = p;
    if (cfg.coupled) q_final = q;
  }

  std::ostringstream csv;
  csv << "x,p_star,q_star";
  if (p_final) csv << ",p_final";
  if (q_final) csv << ",q_final";
  csv << '\n';
  for (int i = 0; i < cfg.grid_n; ++i) {
    csv << format_double(fp.p.center(i)) << ',' << format_double(fp.p[i]) << ',' << format_double(fp.q[i]);
    if (p_final) csv << ',' << format_double((*p_final)[i]);
    if (q_final) csv << ',' << format_double((*q_final)[i]);
    csv << '\n';
  }
  out.csv = csv.str();
  return out;
}

}  // namespace qslgd
