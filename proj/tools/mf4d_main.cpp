// Command line driver. One subcommand per suite; everything except `euler`
// emits a JSON report embedding the resolved config and the code version, so
// two runs with the same config and seed produce byte-identical files up to
// the timestamp field. Failure classes map to exit codes: usage 2, solver 3,
// flow stall 4, inconclusive 5.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mf4d/barycenters.hpp"
#include "mf4d/bubbles.hpp"
#include "mf4d/combinatorics.hpp"
#include "mf4d/domain.hpp"
#include "mf4d/errors.hpp"
#include "mf4d/functional.hpp"
#include "mf4d/io.hpp"
#include "mf4d/morseflow.hpp"
#include "mf4d/version.hpp"

namespace {

using nlohmann::json;
using namespace mf4d;

std::string iso_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[24];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<double> parse_numbers(const std::string& args) {
  std::vector<double> out;
  size_t pos = 0;
  for (;;) {
    const size_t comma = args.find(',', pos);
    const std::string tok =
        args.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    size_t used = 0;
    double val = 0.0;
    try {
      val = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (tok.empty() || used != tok.size())
      throw std::invalid_argument("bad number '" + tok + "' in domain spec");
    out.push_back(val);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

DomainSpec parse_domain(const std::string& text) {
  std::string head = text, args;
  const size_t colon = text.find(':');
  bool has_args = colon != std::string::npos;
  if (has_args) {
    head = text.substr(0, colon);
    args = text.substr(colon + 1);
  }
  std::vector<double> v;
  if (has_args) v = parse_numbers(args);
  if (head == "ball") {
    if (v.empty()) return DomainSpec::ball(1.0);
    if (v.size() == 1) return DomainSpec::ball(v[0]);
  } else if (head == "shell") {
    if (v.empty()) return DomainSpec::shell(0.5, 1.0);
    if (v.size() == 2) return DomainSpec::shell(v[0], v[1]);
  } else if (head == "box") {
    if (v.empty()) return DomainSpec::box(Vec4{1.0, 1.0, 1.0, 1.0});
    if (v.size() == 4) return DomainSpec::box(Vec4{v[0], v[1], v[2], v[3]});
  }
  throw std::invalid_argument("domain must be ball[:R], shell[:r0,r1] or box[:a,b,c,d], got '" +
                              text + "'");
}

int resolve_resolution(const DomainSpec& dom, int requested, int radial_default,
                       int grid_default) {
  if (requested > 0) return requested;
  return dom.kind == DomainKind::box4d ? grid_default : radial_default;
}

MeshPtr build_mesh(const DomainSpec& dom, int res) {
  return dom.kind == DomainKind::box4d ? make_grid_mesh(dom, res) : make_radial_mesh(dom, res);
}

json domain_json(const DomainSpec& d) {
  json j;
  switch (d.kind) {
    case DomainKind::ball:
      j["kind"] = "ball";
      j["radius"] = d.radius;
      break;
    case DomainKind::shell:
      j["kind"] = "shell";
      j["r0"] = d.r0;
      j["r1"] = d.r1;
      break;
    case DomainKind::box4d:
      j["kind"] = "box";
      j["extent"] = {d.extent[0], d.extent[1], d.extent[2], d.extent[3]};
      break;
  }
  j["chi"] = d.chi;
  j["eta"] = d.eta_value();
  return j;
}

json sigma_json(const FormalBarycenter& s) {
  json atoms = json::array();
  for (const auto& a : s.atoms)
    atoms.push_back(json{{"t", a.t}, {"x", {a.x[0], a.x[1], a.x[2], a.x[3]}}});
  return json{{"atoms", atoms}};
}

double sup_abs(const Field& u) {
  double m = 0.0;
  for (double x : u.v) m = std::max(m, std::abs(x));
  return m;
}

void emit_report(const std::string& command, const json& config, const json& result,
                 const std::string& out) {
  json env{{"command", command},
           {"config", config},
           {"result", result},
           {"timestamp", iso_timestamp()},
           {"version", version_string}};
  const std::string text = env.dump(2) + "\n";
  if (out.empty()) {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream os(out, std::ios::binary);
  if (!os) throw std::invalid_argument("cannot open output file " + out);
  os << text;
}

Field start_field(const MeshPtr& mesh, const std::string& start, uint64_t seed, double norm) {
  if (start == "zero") return make_field(mesh, 0.0);
  if (start != "random")
    throw std::invalid_argument("start must be 'zero' or 'random', got '" + start + "'");
  Field u = random_field(mesh, seed, 1.0, 12);
  const double nrm = h_norm(u);
  if (!(nrm > 0.0)) throw SolverError("random start collapsed to zero");
  return (norm / nrm) * u;
}

BubbleConvention parse_convention(const std::string& s) {
  if (s == "corrected") return BubbleConvention::corrected;
  if (s == "paper-literal") return BubbleConvention::paper_literal;
  throw std::invalid_argument("bubble convention must be corrected or paper-literal");
}

// Radial meshes carry only rotation-invariant data, so the lone supported
// atom placement there is a unit atom at the center of the ball; box domains
// take any k with positions sampled from the seed.
FormalBarycenter place_atoms(const DomainSpec& dom, long long k, uint64_t seed) {
  if (k < 1) throw std::invalid_argument("need at least one atom");
  FormalBarycenter s;
  if (dom.kind != DomainKind::box4d) {
    if (k != 1 || dom.kind != DomainKind::ball)
      throw std::invalid_argument(
          "radial meshes support a single atom at the ball center; use a box domain for "
          "k >= 2 or off-center atoms");
    s.atoms.push_back({1.0, Vec4{0.0, 0.0, 0.0, 0.0}});
    return s;
  }
  std::mt19937_64 rng(seed);
  for (long long i = 0; i < k; ++i)
    s.atoms.push_back({1.0 / static_cast<double>(k), sample_domain_point(dom, rng)});
  return s;
}

const char* stop_name(FlowStop s) {
  switch (s) {
    case FlowStop::stationary: return "stationary";
    case FlowStop::sublevel: return "sublevel";
    case FlowStop::time_limit: return "time_limit";
    case FlowStop::step_limit: return "step_limit";
  }
  return "unknown";
}

json record_json(const ContinuationRecord& r) {
  return json{{"tau", r.tau},
              {"converged", r.converged},
              {"residual", r.residual},
              {"iters", r.iters},
              {"index", r.index},
              {"unstable_count", r.unstable_count},
              {"degenerate", r.degenerate},
              {"h_norm", r.h_norm_u},
              {"notes", r.notes}};
}

// ---------------------------------------------------------------------------
// subcommands

struct EulerOpts {
  long long chi = 0;
  long long k = 8;
  std::string out;
};

void cmd_euler(const EulerOpts& o) {
  std::printf("%4s %16s %16s %16s %16s\n", "k", "config", "pair", "sigma", "degree");
  json rows = json::array();
  for (long long k = 0; k <= o.k; ++k) {
    const Integer deg = binomial(k - o.chi, k);
    const std::string config = k >= 1 ? config_space_euler(o.chi, k).str() : "-";
    const std::string pair = k >= 1 ? barycenter_pair_euler(o.chi, k).str() : "-";
    const std::string sigma = barycenter_euler(o.chi, k).str();
    std::printf("%4lld %16s %16s %16s %16s\n", k, config.c_str(), pair.c_str(), sigma.c_str(),
                deg.str().c_str());
    rows.push_back(json{{"k", k},
                        {"config_euler", config},
                        {"pair_euler", pair},
                        {"sigma_euler", sigma},
                        {"degree", deg.str()},
                        {"window", {tau_threshold(k), tau_threshold(k + 1)}}});
  }
  if (!o.out.empty())
    emit_report("euler", json{{"chi", o.chi}, {"k", o.k}}, json{{"rows", rows}}, o.out);
}

struct SolveOpts {
  std::string domain = "shell";
  double tau = 0.0;
  int resolution = 0;
  uint64_t seed = 1;
  std::string start = "zero";
  double start_norm = 0.5;
  double tol = 1e-11;
  int max_iters = 40;
  bool skip_index = false;
  std::string out, out_field;
};

void cmd_solve(const SolveOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 1200, 12);
  const MeshPtr mesh = build_mesh(dom, res);
  const Field u0 = start_field(mesh, o.start, o.seed, o.start_norm);
  NewtonOpts nopts;
  nopts.compute_index = !o.skip_index;
  nopts.tol_rel = o.tol;
  nopts.max_iters = o.max_iters;
  const ContinuationRecord rec = newton_solve(o.tau, u0, nopts);
  const WeightH h = WeightH::one(mesh);

  json result = record_json(rec);
  result["sup_norm"] = sup_abs(rec.u);
  result["i_value"] = I_tau(rec.u, o.tau, h).total;
  try {
    result["window_k"] = window_of_tau(o.tau);
    result["formula_degree"] = degree_from_tau(o.tau, dom.chi).str();
  } catch (const ThresholdError&) {
    result["window_k"] = nullptr;
    result["formula_degree"] = nullptr;
  }
  if (!o.out_field.empty()) {
    write_field(rec.u, o.out_field);
    result["field_file"] = o.out_field;
  }
  const json config{{"domain", domain_json(dom)}, {"resolution", res},   {"seed", o.seed},
                    {"start", o.start},           {"start_norm", o.start_norm},
                    {"skip_index", o.skip_index}, {"tau", o.tau}};
  emit_report("solve", config, result, o.out);
  if (!rec.converged)
    throw SolverError("solve: newton did not converge, residual " +
                      std::to_string(rec.residual));
}

struct ContinueOpts {
  std::string domain = "shell";
  double tau_lo = 0.0, tau_hi = 0.0;
  int steps = 8;
  int nseeds = 1;
  int resolution = 0;
  uint64_t seed = 1;
  std::string out;
};

void cmd_continue(const ContinueOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 800, 12);
  const MeshPtr mesh = build_mesh(dom, res);
  std::vector<Field> seeds;
  seeds.push_back(make_field(mesh, 0.0));
  for (int i = 1; i < o.nseeds; ++i)
    seeds.push_back(start_field(mesh, "random", o.seed + static_cast<uint64_t>(i), 0.5 * i));
  const ContinuationResult cr = continuation(mesh, o.tau_lo, o.tau_hi, o.steps, seeds);

  json records = json::array();
  for (const auto& r : cr.records) records.push_back(record_json(r));
  json result{{"records", records},
              {"events", cr.events},
              {"blow_up", cr.blow_up}};
  if (cr.blow_up) {
    result["blow_up_value"] = cr.blow_up_value;
    result["blow_up_location"] = {cr.blow_up_location[0], cr.blow_up_location[1],
                                  cr.blow_up_location[2], cr.blow_up_location[3]};
  }
  const json config{{"domain", domain_json(dom)}, {"resolution", res}, {"seed", o.seed},
                    {"seeds", o.nseeds},          {"steps", o.steps},  {"tau_hi", o.tau_hi},
                    {"tau_lo", o.tau_lo}};
  emit_report("continue", config, result, o.out);
}

struct ScanOpts {
  std::string domain = "ball";
  double tau = 0.0;
  long long k = 1;
  int resolution = 0;
  uint64_t seed = 7;
  double lambda_lo = 10.0, lambda_hi = 1000.0;
  int lambda_points = 12;
  std::string convention = "corrected";
  std::string out;
};

void cmd_bubble_scan(const ScanOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 4096, 12);
  const MeshPtr mesh = build_mesh(dom, res);
  const FormalBarycenter sigma = place_atoms(dom, o.k, o.seed);
  if (o.lambda_points < 4) throw std::invalid_argument("need at least 4 lambda points");
  std::vector<double> grid(o.lambda_points);
  for (int i = 0; i < o.lambda_points; ++i)
    grid[i] = o.lambda_lo *
              std::pow(o.lambda_hi / o.lambda_lo, double(i) / double(o.lambda_points - 1));
  const AsymptoticsReport rep =
      energy_asymptotics(mesh, sigma, o.tau, grid, parse_convention(o.convention));

  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back(json{{"lambda", r.lambda},
                        {"half_quad", r.half_quad},
                        {"j_value", r.j_value},
                        {"i_value", r.i_value},
                        {"ok", r.ok}});
  const double pi2 = pi * pi;
  const json result{{"rows", rows},
                    {"slope_i", rep.slope_i},
                    {"se_i", rep.se_i},
                    {"slope_j", rep.slope_j},
                    {"se_j", rep.se_j},
                    {"slope_quad", rep.slope_quad},
                    {"se_quad", rep.se_quad},
                    {"intercept_i", rep.intercept_i},
                    {"failures", rep.failures},
                    // measured quadratic growth per atom against the 128 pi^2
                    // book value; reported, not gated
                    {"quad_slope_per_atom_over_128pi2",
                     rep.slope_quad / (128.0 * pi2 * static_cast<double>(o.k))},
                    {"sigma", sigma_json(sigma)}};
  const json config{{"bubble_convention", o.convention},
                    {"domain", domain_json(dom)},
                    {"k", o.k},
                    {"lambda_hi", o.lambda_hi},
                    {"lambda_lo", o.lambda_lo},
                    {"lambda_points", o.lambda_points},
                    {"resolution", res},
                    {"seed", o.seed},
                    {"tau", o.tau}};
  emit_report("bubble-scan", config, result, o.out);
}

struct MtOpts {
  std::string domain = "ball";
  int count = 100;
  int resolution = 0;
  uint64_t seed = 1;
  double amplitude = 1.0;
  int modes = 8;
  std::string out;
};

// The sup of the gap is approached by small fields (the gap vanishes at
// u = 0 and is strictly negative elsewhere on these domains), so the max
// over purely random draws has O(1) relative flutter between seeds. The
// scan therefore adds a deterministic reference ladder along the torsion
// direction; it dominates the max and pins the reported statistic.
void cmd_mt_check(const MtOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 800, 10);
  const MeshPtr mesh = build_mesh(dom, res);
  if (o.count < 1) throw std::invalid_argument("count must be >= 1");
  double rworst = -std::numeric_limits<double>::infinity();
  double rbest = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  int argmax = -1;
  for (int i = 0; i < o.count; ++i) {
    const Field u = random_field(mesh, o.seed + static_cast<uint64_t>(i), o.amplitude, o.modes);
    const double g = mt_gap(u);
    if (!std::isfinite(g)) throw InconclusiveError("mt gap is not finite at sample " +
                                                   std::to_string(i));
    if (g > rworst) {
      rworst = g;
      argmax = i;
    }
    rbest = std::min(rbest, g);
    sum += g;
  }
  const Field torsion = biharmonic_solve_navier(make_field(mesh, 1.0));
  const Field dir = (1.0 / h_norm(torsion)) * torsion;
  json reference = json::array();
  double dworst = -std::numeric_limits<double>::infinity();
  for (int j = -4; j <= 4; ++j) {
    const double t = std::ldexp(1.0, j);
    const double g = mt_gap(t * dir);
    if (!std::isfinite(g))
      throw InconclusiveError("mt gap is not finite on the reference ladder");
    dworst = std::max(dworst, g);
    reference.push_back(json{{"t", t}, {"gap", g}});
  }
  const json result{{"count", o.count},
                    {"max_gap", std::max(rworst, dworst)},
                    {"max_gap_source", dworst >= rworst ? "reference" : "random"},
                    {"random_max_gap", rworst},
                    {"random_min_gap", rbest},
                    {"random_mean_gap", sum / o.count},
                    {"argmax_sample", argmax},
                    {"reference", reference}};
  const json config{{"amplitude", o.amplitude}, {"count", o.count},
                    {"domain", domain_json(dom)}, {"modes", o.modes},
                    {"resolution", res},          {"seed", o.seed}};
  emit_report("mt-check", config, result, o.out);
}

struct FlowOpts {
  std::string domain = "shell";
  double tau = 0.0;
  int resolution = 0;
  uint64_t seed = 1;
  std::string start = "random";
  double start_norm = 1.0;
  double max_time = 200.0;
  double rtol = 1e-7;
  double stat_tol = 1e-6;
  double eps = 1e-3;
  double radius = 0.0;  // 0: sized from the start norm
  double sublevel = std::numeric_limits<double>::quiet_NaN();
  std::string out, csv;
};

void cmd_flow(const FlowOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 600, 10);
  const MeshPtr mesh = build_mesh(dom, res);
  const Field u0 = start_field(mesh, o.start, o.seed, o.start_norm);
  FlowConfig cfg = default_flow_config(std::max(1.0, h_norm(u0)));
  cfg.max_time = o.max_time;
  cfg.rtol = o.rtol;
  cfg.stat_tol = o.stat_tol;
  cfg.eps = o.eps;
  if (o.radius > 0.0) cfg.R = o.radius;
  std::optional<double> sub;
  if (std::isfinite(o.sublevel)) sub = o.sublevel;
  const Trajectory traj = flow_integrate(u0, o.tau, cfg, sub);
  if (!o.csv.empty()) {
    std::ofstream cs(o.csv, std::ios::binary);
    if (!cs) throw std::invalid_argument("cannot open csv file " + o.csv);
    write_trajectory_csv(cs, traj);
  }
  double max_increase = 0.0;
  for (size_t i = 1; i < traj.samples.size(); ++i)
    max_increase = std::max(max_increase, traj.samples[i].i_value - traj.samples[i - 1].i_value);
  json result{{"reason", stop_name(traj.reason)},
              {"t_final", traj.t_final},
              {"steps_accepted", traj.steps_accepted},
              {"steps_rejected", traj.steps_rejected},
              {"samples", traj.samples.size()},
              {"i_initial", traj.samples.front().i_value},
              {"i_final", traj.samples.back().i_value},
              {"max_i_increase", max_increase},
              {"grad_final", traj.samples.back().grad_norm},
              {"h_norm_final", h_norm(traj.u_final)},
              {"sup_final", sup_abs(traj.u_final)}};
  if (traj.reason == FlowStop::sublevel) result["sublevel_time"] = traj.sublevel_time;
  if (!o.csv.empty()) result["csv_file"] = o.csv;
  json config{{"domain", domain_json(dom)},
              {"eps", cfg.eps},
              {"max_time", cfg.max_time},
              {"r_cutoff", cfg.R},
              {"resolution", res},
              {"rtol", cfg.rtol},
              {"seed", o.seed},
              {"start", o.start},
              {"start_norm", o.start_norm},
              {"stat_tol", cfg.stat_tol},
              {"tau", o.tau}};
  if (sub) config["sublevel"] = *sub;
  emit_report("flow", config, result, o.out);
}

struct CensusOpts {
  std::string domain = "shell";
  long long k = 2;
  long long starts = 10000;
  uint64_t seed = 1;
  double eta = 0.0;  // 0: domain default
  std::string out;
};

void cmd_fstar_census(const CensusOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const double eta = o.eta > 0.0 ? o.eta : dom.eta_value();
  CensusConfig cc;
  cc.nstarts = o.starts;
  cc.seed = o.seed;
  const CensusReport rep = f_star_critical_census(dom, static_cast<int>(o.k), GCutoff(eta), cc);

  json entries = json::array();
  for (const auto& e : rep.entries)
    entries.push_back(json{{"sigma", sigma_json(e.sigma)},
                           {"morse_index", e.morse_index},
                           {"value", e.value},
                           {"hits", e.hits}});
  const Rational expected = morse_count_sum(dom.chi, o.k);
  const json result{{"starts", rep.starts},
                    {"converged", rep.converged},
                    {"unconverged", rep.unconverged},
                    {"degenerate_excluded", rep.degenerate_excluded},
                    {"counts", rep.counts},
                    {"plain_sum", rep.plain_sum},
                    {"alternating_sum", rep.alternating_sum},
                    {"expected_alternating_sum", expected.str()},
                    {"matches_expected", Rational(rep.alternating_sum) == expected},
                    {"incomplete", rep.incomplete},
                    {"warnings", rep.warnings},
                    {"entries", entries}};
  const json config{{"domain", domain_json(dom)}, {"eta", eta},   {"k", o.k},
                    {"seed", o.seed},             {"starts", o.starts}};
  emit_report("fstar-census", config, result, o.out);
}

struct ProjectOpts {
  std::string domain = "ball";
  int resolution = 0;
  long long k = 1;
  double lambda = 100.0;
  uint64_t seed = 7;
  std::string convention = "corrected";
  std::string in, out, out_field;
};

void cmd_project(const ProjectOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 2048, 12);
  const MeshPtr mesh = build_mesh(dom, res);
  Field phi = make_field(mesh, 0.0);
  json source;
  if (!o.in.empty()) {
    phi = read_field(mesh, o.in);
    source = json{{"file", o.in}};
  } else {
    BubbleParams p;
    p.lambda = o.lambda;
    p.sigma = place_atoms(dom, o.k, o.seed);
    phi = bubble_multi(mesh, p, parse_convention(o.convention));
    source = json{{"bubble", sigma_json(p.sigma)}, {"lambda", o.lambda}};
  }
  const Field proj = project_P(phi);
  const Field again = project_P(proj);
  const double pn = h_norm(proj);
  json result{{"source", source},
              {"h_norm_input", h_norm(phi)},
              {"h_norm_projected", pn},
              {"sup_projected", sup_abs(proj)},
              {"fixed_point_dev", h_norm(again - proj) / std::max(1.0, pn)}};
  if (mesh->mode == MeshMode::radial) {
    double trace = std::abs(proj.v[mesh->size() - 1]);
    if (dom.kind == DomainKind::shell) trace = std::max(trace, std::abs(proj.v[0]));
    result["boundary_trace_sup"] = trace;
  }
  if (!o.out_field.empty()) {
    write_field(proj, o.out_field);
    result["field_file"] = o.out_field;
  }
  const json config{{"bubble_convention", o.convention},
                    {"domain", domain_json(dom)},
                    {"in", o.in},
                    {"k", o.k},
                    {"lambda", o.lambda},
                    {"resolution", res},
                    {"seed", o.seed}};
  emit_report("project", config, result, o.out);
}

struct DegOpts {
  std::string domain = "shell";
  double tau = 0.0;
  int starts = 10;
  int resolution = 0;
  uint64_t seed = 1;
  double dedup_tol = 1e-4;
  int max_iters = 40;
  std::string out;
};

void cmd_degree_compare(const DegOpts& o) {
  const DomainSpec dom = parse_domain(o.domain);
  const int res = resolve_resolution(dom, o.resolution, 1000, 12);
  const MeshPtr mesh = build_mesh(dom, res);
  if (o.starts < 1) throw std::invalid_argument("starts must be >= 1");
  NewtonOpts nopts;
  nopts.max_iters = o.max_iters;
  std::vector<ContinuationRecord> raw;
  for (int i = 0; i < o.starts; ++i) {
    Field u0 = i == 0 ? make_field(mesh, 0.0)
                      : start_field(mesh, "random", o.seed + static_cast<uint64_t>(i),
                                    0.25 * (1 + i % 4));
    raw.push_back(newton_solve(o.tau, u0, nopts));
  }

  // one representative per solution orbit; unconverged starts pass through
  // so the report keeps honest completeness accounting
  struct Orbit {
    ContinuationRecord rec;
    long long hits = 0;
  };
  std::vector<Orbit> orbits;
  std::vector<ContinuationRecord> pass;
  int raw_converged = 0;
  for (const auto& r : raw) {
    if (!r.converged) {
      pass.push_back(r);
      continue;
    }
    ++raw_converged;
    bool merged = false;
    for (auto& orb : orbits) {
      if (h_norm(r.u - orb.rec.u) <= o.dedup_tol * (1.0 + orb.rec.h_norm_u)) {
        ++orb.hits;
        if (r.residual < orb.rec.residual) orb.rec = r;
        merged = true;
        break;
      }
    }
    if (!merged) orbits.push_back(Orbit{r, 1});
  }
  for (const auto& orb : orbits) pass.push_back(orb.rec);
  const DegreeReport rep = degree_compare(o.tau, pass, dom.chi);

  const WeightH h = WeightH::one(mesh);
  json jorbits = json::array();
  for (const auto& orb : orbits) {
    json r = record_json(orb.rec);
    r["hits"] = orb.hits;
    r["i_value"] = I_tau(orb.rec.u, o.tau, h).total;
    jorbits.push_back(r);
  }
  const json result{{"tau", rep.tau},
                    {"window_k", rep.k},
                    {"formula_degree", rep.formula_degree.str()},
                    {"sigma_euler", rep.sigma_euler.str()},
                    {"index_sum", rep.index_sum},
                    {"solutions_found", rep.solutions_found},
                    {"degenerate_count", rep.degenerate_count},
                    {"unconverged_count", rep.unconverged_count},
                    {"certified", rep.certified},
                    {"consistent", rep.consistent},
                    {"caveat", rep.caveat},
                    {"raw_converged", raw_converged},
                    {"raw_starts", o.starts},
                    {"orbits", jorbits}};
  const json config{{"dedup_tol", o.dedup_tol}, {"domain", domain_json(dom)},
                    {"max_iters", o.max_iters}, {"resolution", res},
                    {"seed", o.seed},           {"starts", o.starts},
                    {"tau", o.tau}};
  emit_report("degree-compare", config, result, o.out);
  if (rep.solutions_found == 0)
    throw InconclusiveError("no start converged; the comparison says nothing about the degree");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"degree-counting laboratory for the 4d mean field equation"};
  app.set_version_flag("--version", mf4d::version_string);
  app.set_config("--config", "", "read defaults from a key=value file with [command] sections");
  // keep commas literal in config values (domain specs carry them)
  app.get_config_formatter_base()->arrayDelimiter(';');
  app.require_subcommand(1);

  EulerOpts eo;
  auto* sc_euler = app.add_subcommand("euler", "exact characteristic / degree table");
  sc_euler->add_option("--chi", eo.chi, "Euler characteristic of the domain")->required();
  sc_euler->add_option("--k,--kmax", eo.k, "largest window index")->check(CLI::Range(0ll, 64ll));
  sc_euler->add_option("--out", eo.out, "also write the table as a JSON report");

  SolveOpts so;
  auto* sc_solve = app.add_subcommand("solve", "newton solve at one tau");
  sc_solve->add_option("--domain", so.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_solve->add_option("--tau", so.tau, "interaction strength")->required();
  sc_solve->add_option("--resolution", so.resolution, "radial nodes or grid cells per axis");
  sc_solve->add_option("--seed", so.seed, "rng seed for random starts");
  sc_solve->add_option("--start", so.start, "zero | random");
  sc_solve->add_option("--start-norm", so.start_norm, "H-norm of a random start");
  sc_solve->add_option("--tol", so.tol, "relative newton tolerance on the gradient");
  sc_solve->add_option("--max-iters", so.max_iters, "newton iteration cap")
      ->check(CLI::Range(1, 1000));
  sc_solve->add_flag("--skip-index", so.skip_index, "skip the linearization spectrum");
  sc_solve->add_option("--out", so.out, "report file (stdout if omitted)");
  sc_solve->add_option("--out-field", so.out_field, "write the solution field (binary)");

  ContinueOpts co;
  auto* sc_cont = app.add_subcommand("continue", "walk a tau range with warm starts");
  sc_cont->add_option("--domain", co.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_cont->add_option("--tau-lo", co.tau_lo, "lower end of the tau range")->required();
  sc_cont->add_option("--tau-hi", co.tau_hi, "upper end of the tau range")->required();
  sc_cont->add_option("--steps", co.steps, "number of tau steps")->check(CLI::Range(1, 4096));
  sc_cont->add_option("--seeds", co.nseeds, "newton seeds per tau (first is zero)")
      ->check(CLI::Range(1, 64));
  sc_cont->add_option("--resolution", co.resolution, "radial nodes or grid cells per axis");
  sc_cont->add_option("--seed", co.seed, "rng seed for the extra seeds");
  sc_cont->add_option("--out", co.out, "report file (stdout if omitted)");

  ScanOpts bo;
  auto* sc_scan = app.add_subcommand("bubble-scan", "energy asymptotics of the bubble family");
  sc_scan->add_option("--domain", bo.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_scan->add_option("--tau", bo.tau, "interaction strength")->required();
  sc_scan->add_option("--k", bo.k, "number of atoms")->check(CLI::Range(1ll, 8ll));
  sc_scan->add_option("--resolution", bo.resolution, "radial nodes or grid cells per axis");
  sc_scan->add_option("--seed", bo.seed, "rng seed for atom placement on boxes");
  sc_scan->add_option("--lambda-lo", bo.lambda_lo, "smallest concentration parameter");
  sc_scan->add_option("--lambda-hi", bo.lambda_hi, "largest concentration parameter");
  sc_scan->add_option("--lambda-points", bo.lambda_points, "log-spaced grid size")
      ->check(CLI::Range(4, 256));
  sc_scan
      ->add_option("--bubble-convention", bo.convention,
                   "profile constant convention: corrected | paper-literal")
      ->check(CLI::IsMember({"corrected", "paper-literal"}));
  sc_scan->add_option("--out", bo.out, "report file (stdout if omitted)");

  MtOpts mo;
  auto* sc_mt = app.add_subcommand("mt-check", "moser-trudinger gap over random fields");
  sc_mt->add_option("--domain", mo.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_mt->add_option("--count", mo.count, "number of random fields")->check(CLI::Range(1, 100000));
  sc_mt->add_option("--resolution", mo.resolution, "radial nodes or grid cells per axis");
  sc_mt->add_option("--seed", mo.seed, "base rng seed");
  sc_mt->add_option("--amplitude", mo.amplitude, "random field amplitude");
  sc_mt->add_option("--modes", mo.modes, "random field mode count")->check(CLI::Range(1, 64));
  sc_mt->add_option("--out", mo.out, "report file (stdout if omitted)");

  FlowOpts fo;
  auto* sc_flow = app.add_subcommand("flow", "integrate the truncated descent flow");
  sc_flow->add_option("--domain", fo.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_flow->add_option("--tau", fo.tau, "interaction strength")->required();
  sc_flow->add_option("--resolution", fo.resolution, "radial nodes or grid cells per axis");
  sc_flow->add_option("--seed", fo.seed, "rng seed for random starts");
  sc_flow->add_option("--start", fo.start, "zero | random");
  sc_flow->add_option("--start-norm", fo.start_norm, "H-norm of a random start");
  sc_flow->add_option("--max-time", fo.max_time, "flow time budget");
  sc_flow->add_option("--rtol", fo.rtol, "step controller tolerance");
  sc_flow->add_option("--stat-tol", fo.stat_tol, "stationarity threshold on the gradient");
  sc_flow->add_option("--eps", fo.eps, "lower-ramp width of the interpolation weight");
  sc_flow->add_option("--R", fo.radius, "truncation radius (0: sized from the start)");
  sc_flow->add_option("--sublevel", fo.sublevel, "stop once I falls below this level");
  sc_flow->add_option("--out", fo.out, "report file (stdout if omitted)");
  sc_flow->add_option("--csv", fo.csv, "trajectory samples as CSV");

  CensusOpts xo;
  auto* sc_census = app.add_subcommand("fstar-census", "critical point census of F*");
  sc_census->add_option("--domain", xo.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_census->add_option("--k", xo.k, "number of atoms")->check(CLI::Range(2ll, 3ll));
  sc_census->add_option("--starts", xo.starts, "multistart count")
      ->check(CLI::Range(1ll, 10000000ll));
  sc_census->add_option("--seed", xo.seed, "rng seed for the starts");
  sc_census->add_option("--eta", xo.eta, "cutoff scale (0: domain default)");
  sc_census->add_option("--out", xo.out, "report file (stdout if omitted)");

  ProjectOpts po;
  auto* sc_proj = app.add_subcommand("project", "navier projection of a field");
  sc_proj->add_option("--domain", po.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_proj->add_option("--resolution", po.resolution, "radial nodes or grid cells per axis");
  sc_proj->add_option("--k", po.k, "atoms of the synthesized bubble input")
      ->check(CLI::Range(1ll, 8ll));
  sc_proj->add_option("--lambda", po.lambda, "bubble concentration parameter");
  sc_proj->add_option("--seed", po.seed, "rng seed for atom placement on boxes");
  sc_proj
      ->add_option("--bubble-convention", po.convention,
                   "profile constant convention: corrected | paper-literal")
      ->check(CLI::IsMember({"corrected", "paper-literal"}));
  sc_proj->add_option("--in", po.in, "read the input field from a binary file");
  sc_proj->add_option("--out", po.out, "report file (stdout if omitted)");
  sc_proj->add_option("--out-field", po.out_field, "write the projected field (binary)");

  DegOpts dgo;
  auto* sc_deg = app.add_subcommand("degree-compare", "multistart index sum vs the formula");
  sc_deg->add_option("--domain", dgo.domain, "ball[:R] | shell[:r0,r1] | box[:a,b,c,d]");
  sc_deg->add_option("--tau", dgo.tau, "interaction strength")->required();
  sc_deg->add_option("--starts", dgo.starts, "newton multistart count")
      ->check(CLI::Range(1, 4096));
  sc_deg->add_option("--resolution", dgo.resolution, "radial nodes or grid cells per axis");
  sc_deg->add_option("--seed", dgo.seed, "rng seed for the starts");
  sc_deg->add_option("--dedup-tol", dgo.dedup_tol, "relative H-distance merging orbits");
  sc_deg->add_option("--max-iters", dgo.max_iters, "newton iteration cap per start")
      ->check(CLI::Range(1, 1000));
  sc_deg->add_option("--out", dgo.out, "report file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sc_euler->parsed()) cmd_euler(eo);
    else if (sc_solve->parsed()) cmd_solve(so);
    else if (sc_cont->parsed()) cmd_continue(co);
    else if (sc_scan->parsed()) cmd_bubble_scan(bo);
    else if (sc_mt->parsed()) cmd_mt_check(mo);
    else if (sc_flow->parsed()) cmd_flow(fo);
    else if (sc_census->parsed()) cmd_fstar_census(xo);
    else if (sc_proj->parsed()) cmd_project(po);
    else if (sc_deg->parsed()) cmd_degree_compare(dgo);
  } catch (const mf4d::FlowStallError& e) {
    std::fprintf(stderr, "mf4d: flow stall: %s\n", e.what());
    return 4;
  } catch (const mf4d::InconclusiveError& e) {
    std::fprintf(stderr, "mf4d: inconclusive: %s\n", e.what());
    return 5;
  } catch (const mf4d::SolverError& e) {
    std::fprintf(stderr, "mf4d: solver failure: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "mf4d: usage: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mf4d: %s\n", e.what());
    return 1;
  }
  return 0;
}
