#include "ncmfg/scenario.hpp"

#include "ncmfg/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ncmfg {

namespace pt = boost::property_tree;

namespace {

std::string fmt(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_vec(const Vec& v)
{
  std::string s;
  for (int i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::string trim(const std::string& s)
{
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v)
{
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("key " + key + ": expected a number, got '" + v + "'");
}

long to_long(const std::string& key, const std::string& v)
{
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("key " + key + ": expected an integer, got '" + v + "'");
  return static_cast<long>(d);
}

Vec to_vec(const std::string& key, const std::string& v)
{
  const auto parts = split(v, ',');
  if (parts.empty() || static_cast<int>(parts.size()) > kMaxDim)
    throw ConfigError("key " + key + ": expected 1 to 4 comma-separated numbers");
  Vec out(static_cast<int>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) out[static_cast<int>(i)] = to_double(key, parts[i]);
  return out;
}

pt::ptree to_tree(const ScenarioConfig& c)
{
  pt::ptree t;
  t.put("scenario.name", c.name);
  t.put("bfield.kind", c.bfield_kind);
  t.put("bfield.dim", c.dim);
  if (c.bfield_kind == "grushin") t.put("bfield.h", c.h);
  if (c.bfield_kind == "custom")
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
      std::string row;
      for (std::size_t j = 0; j < c.rows[i].size(); ++j) row += (j ? "; " : "") + c.rows[i][j];
      t.put("bfield.row" + std::to_string(i + 1), row);
    }
  if (c.c2_bound) t.put("bfield.c2_bound", fmt(*c.c2_bound));
  t.put("coupling.V", c.V);
  t.put("coupling.G", c.G);
  t.put("coupling.rho_width", fmt(c.rho_width));
  t.put("coupling.rho_power", c.rho_power);
  t.put("coupling.rho_g_width", fmt(c.rho_g_width));
  t.put("domain.lo", fmt_vec(c.box.lo));
  t.put("domain.hi", fmt_vec(c.box.hi));
  t.put("domain.padding", fmt(c.padding));
  t.put("domain.horizon", fmt(c.horizon));
  t.put("grid.dx", fmt(c.dx));
  t.put("grid.dt", fmt(c.dt));
  t.put("grid.lattice_points", c.lattice_points);
  t.put("grid.control_tol", fmt(c.control_tol));
  t.put("m0.components", c.m0.components.size());
  for (std::size_t i = 0; i < c.m0.components.size(); ++i) {
    const auto& m = c.m0.components[i];
    const std::string p = "m0.c" + std::to_string(i + 1) + "_";
    const bool gauss = m.kind == M0Component::Kind::TruncatedGaussian;
    t.put(p + "kind", gauss ? "gaussian" : "uniform");
    t.put(p + "lo", fmt_vec(m.box.lo));
    t.put(p + "hi", fmt_vec(m.box.hi));
    if (gauss) {
      t.put(p + "mean", fmt_vec(m.mean));
      t.put(p + "sigma", fmt_vec(m.sigma));
    }
    t.put(p + "weight", fmt(m.weight));
  }
  t.put("m0.particles", c.particles);
  t.put("m0.seed", c.seed);
  t.put("solver.bvp_tol", fmt(c.bvp_tol));
  t.put("solver.n_starts", c.n_starts);
  t.put("solver.sanity_margin", fmt(c.sanity_margin));
  t.put("solver.steps_per_unit", c.steps_per_unit);
  t.put("solver.uniq_tol", fmt(c.uniq_tol));
  t.put("solver.oracle_steps", c.oracle_steps);
  t.put("solver.frozen_particles", c.frozen_particles);
  t.put("mfg.theta", fmt(c.theta));
  t.put("mfg.fp_tol", fmt(c.fp_tol));
  t.put("mfg.max_iter", c.max_iter);
  t.put("mfg.snapshots", c.snapshots);
  t.put("mfg.n_exact", c.n_exact);
  t.put("mfg.flow_substeps", c.flow_substeps);
  return t;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& t) : t_(t) {}

  std::optional<std::string> get(const std::string& section, const std::string& key)
  {
    seen_.insert(section + "." + key);
    const auto sec = t_.get_child_optional(section);
    if (!sec) return {};
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return {};
    return trim(*v);
  }

  void str(const std::string& s, const std::string& k, std::string& out)
  {
    if (auto v = get(s, k)) out = *v;
  }
  template <class T>
  void num(const std::string& s, const std::string& k, T& out)
  {
    if (auto v = get(s, k)) {
      if constexpr (std::is_floating_point_v<T>)
        out = to_double(s + "." + k, *v);
      else
        out = static_cast<T>(to_long(s + "." + k, *v));
    }
  }

  void check_unknown() const
  {
    for (const auto& [section, sub] : t_) {
      if (sub.empty() && !sub.data().empty())
        throw ConfigError("key '" + section + "' outside any section");
      for (const auto& [key, v] : sub) {
        const std::string full = section + "." + key;
        if (!seen_.count(full)) throw ConfigError("unknown key " + full);
      }
    }
  }

 private:
  const pt::ptree& t_;
  std::set<std::string> seen_;
};

ScenarioConfig from_tree(const pt::ptree& t, ScenarioConfig c)
{
  Reader r(t);
  std::string base;
  r.str("scenario", "base", base);
  r.str("scenario", "name", c.name);

  r.str("bfield", "kind", c.bfield_kind);
  r.num("bfield", "dim", c.dim);
  r.str("bfield", "h", c.h);
  if (c.bfield_kind == "custom") {
    std::vector<std::vector<std::string>> rows;
    for (int i = 1; i <= std::max(c.dim, kMaxDim); ++i) {
      const auto v = r.get("bfield", "row" + std::to_string(i));
      if (v) rows.push_back(split(*v, ';'));
      else if (i <= c.dim && i <= static_cast<int>(c.rows.size())) rows.push_back(c.rows[i - 1]);
    }
    c.rows = rows;
  } else {
    for (int i = 1; i <= kMaxDim; ++i) r.get("bfield", "row" + std::to_string(i));
  }
  if (auto v = r.get("bfield", "c2_bound")) c.c2_bound = to_double("bfield.c2_bound", *v);

  r.str("coupling", "V", c.V);
  r.str("coupling", "G", c.G);
  r.num("coupling", "rho_width", c.rho_width);
  r.num("coupling", "rho_power", c.rho_power);
  r.num("coupling", "rho_g_width", c.rho_g_width);

  if (auto v = r.get("domain", "lo")) c.box.lo = to_vec("domain.lo", *v);
  if (auto v = r.get("domain", "hi")) c.box.hi = to_vec("domain.hi", *v);
  r.num("domain", "padding", c.padding);
  r.num("domain", "horizon", c.horizon);

  r.num("grid", "dx", c.dx);
  r.num("grid", "dt", c.dt);
  r.num("grid", "lattice_points", c.lattice_points);
  r.num("grid", "control_tol", c.control_tol);

  std::size_t ncomp = c.m0.components.size();
  r.num("m0", "components", ncomp);
  if (ncomp > 16) throw ConfigError("m0.components: at most 16 mixture components");
  c.m0.components.resize(ncomp);
  for (std::size_t i = 0; i < ncomp; ++i) {
    auto& m = c.m0.components[i];
    const std::string p = "c" + std::to_string(i + 1) + "_";
    if (auto v = r.get("m0", p + "kind")) {
      if (*v == "uniform") m.kind = M0Component::Kind::Uniform;
      else if (*v == "gaussian") m.kind = M0Component::Kind::TruncatedGaussian;
      else throw ConfigError("m0." + p + "kind: unsupported initial measure '" + *v + "'");
    }
    if (auto v = r.get("m0", p + "lo")) m.box.lo = to_vec("m0." + p + "lo", *v);
    if (auto v = r.get("m0", p + "hi")) m.box.hi = to_vec("m0." + p + "hi", *v);
    if (auto v = r.get("m0", p + "mean")) m.mean = to_vec("m0." + p + "mean", *v);
    if (auto v = r.get("m0", p + "sigma")) m.sigma = to_vec("m0." + p + "sigma", *v);
    r.num("m0", p + "weight", m.weight);
  }
  r.num("m0", "particles", c.particles);
  r.num("m0", "seed", c.seed);

  r.num("solver", "bvp_tol", c.bvp_tol);
  r.num("solver", "n_starts", c.n_starts);
  r.num("solver", "sanity_margin", c.sanity_margin);
  r.num("solver", "steps_per_unit", c.steps_per_unit);
  r.num("solver", "uniq_tol", c.uniq_tol);
  r.num("solver", "oracle_steps", c.oracle_steps);
  r.num("solver", "frozen_particles", c.frozen_particles);

  r.num("mfg", "theta", c.theta);
  r.num("mfg", "fp_tol", c.fp_tol);
  r.num("mfg", "max_iter", c.max_iter);
  r.num("mfg", "snapshots", c.snapshots);
  r.num("mfg", "n_exact", c.n_exact);
  r.num("mfg", "flow_substeps", c.flow_substeps);

  r.check_unknown();
  return c;
}

void apply_to_tree(pt::ptree& t, const std::string& ov)
{
  const auto eq = ov.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + ov + "' is not section.key=value");
  const std::string path = trim(ov.substr(0, eq));
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size())
    throw ConfigError("override '" + ov + "' is not section.key=value");
  t.put(pt::ptree::path_type(path, '.'), trim(ov.substr(eq + 1)));
}

ScenarioConfig base_for(const pt::ptree& t)
{
  if (const auto b = t.get_optional<std::string>("scenario.base")) return builtin_scenario(trim(*b));
  return ScenarioConfig{};
}

}  // namespace

BField ScenarioConfig::make_bfield() const
{
  std::optional<BField> b;
  try {
    if (bfield_kind == "identity") b = BField::identity(dim);
    else if (bfield_kind == "grushin") {
      if (dim != 2) throw ConfigError("grushin bfield is two-dimensional");
      b = BField::grushin(h);
    } else if (bfield_kind == "custom") b = BField::from_strings(dim, rows);
    else throw ConfigError("unknown bfield kind '" + bfield_kind + "'");
  } catch (const ExpressionError& e) {
    throw ConfigError(std::string("bfield: ") + e.what());
  }
  b->set_domain(grid_box());
  if (c2_bound) b->set_c2_bound(*c2_bound);
  return *b;
}

CouplingSpec ScenarioConfig::make_coupling() const
{
  try {
    return CouplingSpec{Expression::parse(V), BumpKernel(rho_width, dim, rho_power), Expression::parse(G),
                        BumpKernel(rho_g_width, dim, rho_power), std::nullopt};
  } catch (const ExpressionError& e) {
    throw ConfigError(std::string("coupling: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("coupling: ") + e.what());
  }
}

HjbGridSpec ScenarioConfig::grid_spec() const
{
  HjbGridSpec s;
  s.box = box;
  s.padding = padding;
  s.dx = dx;
  s.dt = dt;
  s.horizon = horizon;
  s.lattice_points = lattice_points;
  s.control_tol = control_tol;
  return s;
}

ShootingConfig ScenarioConfig::shooting_config() const
{
  ShootingConfig s;
  s.bvp_tol = bvp_tol;
  s.n_starts = n_starts;
  s.sanity_margin = sanity_margin;
  s.steps_per_unit = steps_per_unit;
  s.guard = grid_box();
  return s;
}

OracleConfig ScenarioConfig::oracle_config() const
{
  OracleConfig o;
  o.n_steps = oracle_steps;
  if (dim >= 3) o.grid_points = 9;
  return o;
}

void ScenarioConfig::validate() const
{
  if (dim < 1 || dim > kMaxDim) throw ConfigError("bfield.dim must be between 1 and 4");
  if (box.lo.size() != dim || box.hi.size() != dim) throw ConfigError("domain.lo/hi must have dim entries");
  for (int i = 0; i < dim; ++i)
    if (!(box.hi[i] > box.lo[i])) throw ConfigError("domain box is empty");
  if (!(horizon > 0.0)) throw ConfigError("domain.horizon must be positive");
  if (!(padding >= 0.0)) throw ConfigError("domain.padding must be nonnegative");
  if (!(dx > 0.0)) throw ConfigError("grid.dx must be positive");
  if (dt < 0.0) throw ConfigError("grid.dt must be nonnegative");
  if (lattice_points < 1) throw ConfigError("grid.lattice_points must be positive");
  if (!(rho_width > 0.0) || !(rho_g_width > 0.0)) throw ConfigError("mollifier widths must be positive");
  if (rho_power < 2) throw ConfigError("coupling.rho_power must be at least 2");
  if (m0.components.empty()) throw ConfigError("m0 needs at least one component");
  if (particles == 0) throw ConfigError("m0.particles must be positive");
  for (const auto& c : m0.components) {
    if (c.box.lo.size() != dim || c.box.hi.size() != dim) throw ConfigError("m0 component box dimension");
    if (!box.contains(c.box.lo) || !box.contains(c.box.hi)) throw ConfigError("m0 support must lie in the domain box");
    if (c.kind == M0Component::Kind::TruncatedGaussian && (c.mean.size() != dim || c.sigma.size() != dim))
      throw ConfigError("m0 gaussian mean/sigma dimension");
  }
  if (!(bvp_tol > 0.0) || n_starts < 1 || steps_per_unit < 2) throw ConfigError("invalid solver parameters");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("mfg.theta must lie in (0, 1]");
  if (!(fp_tol > 0.0) || max_iter < 1 || snapshots < 2 || n_exact < 1 || flow_substeps < 1)
    throw ConfigError("invalid mfg parameters");

  const BField b = make_bfield();
  if (b.dim() != dim) throw ConfigError("bfield dimension mismatch");
  const CouplingSpec cs = make_coupling();
  if (cs.V.max_x_index() > dim || cs.G.max_x_index() > dim)
    throw ConfigError("coupling expressions reference coordinates beyond dim");
  if (cs.G.uses(kSlotT)) throw ConfigError("terminal coupling G may not depend on t");
}

ScenarioConfig apply_overrides(const ScenarioConfig& base, const std::vector<std::string>& overrides)
{
  if (overrides.empty()) return base;
  pt::ptree t = to_tree(base);
  for (const auto& ov : overrides) apply_to_tree(t, ov);
  ScenarioConfig c = from_tree(t, base);
  c.validate();
  return c;
}

ScenarioConfig parse_scenario(const std::string& ini_text, const std::vector<std::string>& overrides)
{
  pt::ptree t;
  try {
    std::istringstream is(ini_text);
    pt::read_ini(is, t);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const auto& ov : overrides) apply_to_tree(t, ov);
  ScenarioConfig c = from_tree(t, base_for(t));
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string(), "config-not-found");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str(), overrides);
}

std::string serialize_scenario(const ScenarioConfig& cfg)
{
  std::ostringstream os;
  pt::write_ini(os, to_tree(cfg));
  return os.str();
}

namespace {

M0Spec gaussian_m0(const Box& box, double sigma)
{
  M0Component c;
  c.kind = M0Component::Kind::TruncatedGaussian;
  c.box = box;
  c.mean = box.center();
  c.sigma = Vec::Constant(box.dim(), sigma);
  return M0Spec{{c}};
}

ScenarioConfig coupled(ScenarioConfig c, const std::string& V)
{
  c.name += "-coupled";
  c.V = V;
  return c;
}

}  // namespace

std::vector<ScenarioConfig> builtin_scenarios()
{
  std::vector<ScenarioConfig> out;

  ScenarioConfig id;
  id.name = "identity2d";
  id.bfield_kind = "identity";
  id.G = "0.5*(x1^2 + x2^2)*cutoff(x1^2 + x2^2, 9, 16)";
  id.padding = 1.0;
  id.dx = id.dt = 1.0 / 32.0;
  id.m0 = gaussian_m0(id.box, 0.35);

  ScenarioConfig gs = id;
  gs.name = "grushin-sin";
  gs.bfield_kind = "grushin";
  gs.h = "sin(x1)";
  gs.G = "0.5*((x1 - 0.5)^2 + (x2 - 0.25)^2)*cutoff((x1 - 0.5)^2 + (x2 - 0.25)^2, 25, 36)";
  gs.padding = 2.0;

  ScenarioConfig gg = gs;
  gg.name = "grushin-sigmoid";
  gg.h = "x1/sqrt(1 + x1^2)";

  ScenarioConfig hz;
  hz.name = "heisenberg3d";
  hz.bfield_kind = "custom";
  hz.dim = 3;
  hz.rows = {{"1"}, {"0", "1"}, {"-0.5*sin(x2)", "0.5*sin(x1)", "0"}};
  hz.box = Box{make_vec({-0.5, -0.5, -0.5}), make_vec({0.5, 0.5, 0.5})};
  hz.G = "0.5*((x1 - 0.3)^2 + (x2 - 0.2)^2 + (x3 - 0.1)^2)*cutoff((x1 - 0.3)^2 + (x2 - 0.2)^2 + (x3 - 0.1)^2, 16, 25)";
  hz.padding = 1.25;
  hz.dx = hz.dt = 0.125;
  hz.lattice_points = 5;
  hz.m0 = gaussian_m0(hz.box, 0.25);

  for (ScenarioConfig base : {id, gs, gg, hz}) {
    ScenarioConfig c = coupled(base, "0.1*z");
    base.name += "-decoupled";
    c.padding = base.dim == 3 ? 2.5 : 2.0;
    out.push_back(base);
    out.push_back(c);
  }
  return out;
}

ScenarioConfig builtin_scenario(const std::string& name)
{
  for (auto& s : builtin_scenarios())
    if (s.name == name) return s;
  throw ConfigError("unknown built-in scenario '" + name + "'", "config-not-found");
}

}  // namespace ncmfg
