// sdta: command-line front end for the policy-based stochastic DTA pipeline.
//
// Exit codes: 0 ok, 2 parse failure, 3 validation failure, 4 runtime failure.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include "sdta/sdta.hpp"

namespace fs = std::filesystem;
using sdta::Json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kPrecision = 12;

int exit_code(sdta::ErrorClass c) {
  switch (c) {
    case sdta::ErrorClass::Parse: return 2;
    case sdta::ErrorClass::Validation: return 3;
    case sdta::ErrorClass::Runtime: return 4;
  }
  return 4;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof())
      throw sdta::Error(sdta::ErrorCode::InvalidConfig, std::string("bad ") + what + " value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string loader = "chrono";
  std::size_t policies = 3;
  std::string z;
  double kappa = -0.01;
  int iters = 50;
  int inner_iters = 5;
  double eps = 1e-3;
  bool strict_origin = false;
  bool no_early_stop = false;
  unsigned threads = 1;
};

sdta::SolverConfig make_config(const Globals& g) {
  sdta::SolverConfig cfg;
  cfg.outer_iterations = g.iters;
  cfg.policies = g.policies;
  if (!g.z.empty()) cfg.z = parse_list<double>(g.z, "z");
  cfg.choice.kappa = g.kappa;
  cfg.loader = g.loader == "iter" ? sdta::LoaderKind::Iterative : sdta::LoaderKind::Chronological;
  cfg.inner_iterations = g.inner_iters;
  cfg.eps = g.eps;
  cfg.early_stop = !g.no_early_stop;
  cfg.strict_origin = g.strict_origin;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  cfg.check();
  return cfg;
}

Json config_json(const sdta::SolverConfig& cfg) {
  return Json{{"outer_iterations", cfg.outer_iterations},
              {"policies", cfg.policies},
              {"z", cfg.policies > 1 ? cfg.z_factors() : std::vector<double>{}},
              {"kappa", cfg.choice.kappa},
              {"loader", cfg.loader == sdta::LoaderKind::Iterative ? "iter" : "chrono"},
              {"inner_iterations", cfg.inner_iterations},
              {"eps", cfg.eps},
              {"early_stop", cfg.early_stop},
              {"strict_origin", cfg.strict_origin},
              {"threads", cfg.threads}};
}

Json stage_json(const sdta::StageTimes& ms) {
  return Json{{"policy_ms", ms.policy}, {"choice_ms", ms.choice}, {"load_ms", ms.load}, {"total_ms", ms.total()}};
}

struct Inputs {
  std::vector<std::pair<std::string, std::string>> files;  // path, contents

  const std::string& add(const std::string& path) {
    files.emplace_back(path, sdta::read_file(path));
    return files.back().second;
  }
  Json digests() const {
    Json out = Json::array();
    for (const auto& [path, text] : files) out.push_back({{"path", path}, {"sha256", sha256_hex(text)}});
    return out;
  }
};

/// Result directory writer; every table is written with fixed precision.
class OutDir {
 public:
  explicit OutDir(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cannot create '" + dir_ + "': " + ec.message());
  }
  bool enabled() const { return !dir_.empty(); }

  template <class Fn>
  void table(const std::string& name, Fn&& fn) const {
    if (!enabled()) return;
    std::ofstream os(fs::path(dir_) / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + name + "'");
    os << std::setprecision(kPrecision);
    fn(os);
  }
  void json(const std::string& name, const Json& j) const {
    table(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

 private:
  std::string dir_;
};

Json manifest(const std::string& command, const std::vector<std::string>& argv, const Json& config,
              const Inputs& inputs, std::uint64_t seed, const Json& stages) {
  return Json{{"command", command}, {"argv", argv},     {"config", config},        {"inputs", inputs.digests()},
              {"seed", seed},       {"version", kVersion}, {"wall_time", stages}};
}

struct Loaded {
  sdta::Network net;
  sdta::Scenario sc;
};

Loaded load_inputs(Inputs& in, const std::string& net_path, const std::string& sc_path) {
  auto net = sdta::parse_network(in.add(net_path));
  auto sc = sdta::parse_scenario(in.add(sc_path), net);
  for (const auto& w : sdta::check_scenario(net, sc)) std::cerr << "warning: " << w << '\n';
  return {std::move(net), std::move(sc)};
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_validate(const std::string& net_path, const std::string& sc_path) {
  Inputs in;
  auto net = sdta::parse_graph(sdta::detail::parse_text(in.add(net_path)));
  auto report = sdta::validate(net);
  for (const auto& v : report.violations) std::cout << "violation: " << v << '\n';
  if (!report.ok()) return 3;
  if (!sc_path.empty()) {
    auto sc = sdta::parse_scenario(in.add(sc_path), net);
    for (const auto& w : sdta::check_scenario(net, sc)) std::cout << "warning: " << w << '\n';
  }
  std::cout << "ok: " << net.node_count() << " nodes, " << net.link_count() << " links\n";
  return 0;
}

int cmd_solve(const Globals& g, const std::vector<std::string>& argv, const std::string& net_path,
              const std::string& sc_path) {
  Inputs in;
  auto [net, sc] = load_inputs(in, net_path, sc_path);
  const auto cfg = make_config(g);
  const auto res = sdta::msa_solve(net, sc, cfg);

  const OutDir out(g.out);
  out.table("splits.tsv", [&](std::ostream& os) { sdta::write_splits_tsv(os, res.final_splits); });
  out.table("travel_times.tsv", [&](std::ostream& os) { sdta::write_travel_times_tsv(os, net, res.final_ttd); });
  out.table("trace.tsv", [&](std::ostream& os) { sdta::write_trace_tsv(os, res); });
  double conservation = 0.0;
  for (const auto& r : res.last_runs) conservation = std::max(conservation, r.conservation_error());
  const auto& last = res.trace.back();
  Json summary{{"iterations", res.trace.size()},
               {"final_delta", std::isinf(last.delta) ? Json(nullptr) : Json(last.delta)},
               {"converged", res.converged(cfg.eps)},
               {"average_expected_time_s", sdta::average_expected_time(res)},
               {"conservation_error_veh", conservation},
               {"time_loops", res.stats.time_loops},
               {"translations", res.stats.translations}};
  out.json("summary.json", summary);
  out.json("manifest.json", manifest("solve", argv, config_json(cfg), in, g.seed, stage_json(res.total_ms)));

  std::cout << std::setprecision(6) << "iterations " << res.trace.size() << "  final delta "
            << (std::isinf(last.delta) ? std::string("n/a") : std::to_string(last.delta)) << "  avg expected time "
            << sdta::average_expected_time(res) << " s\n";
  std::cout << "t\tpolicy\teta\n";
  const int stride = std::max(1, res.final_splits.steps() / 10);
  for (int t = 1; t <= res.final_splits.steps(); t += stride)
    for (std::size_t w = 0; w < res.final_splits.policies(); ++w)
      std::cout << t << '\t' << w << '\t' << res.final_splits(w, t) << '\n';
  return 0;
}

int cmd_load(const Globals& g, const std::vector<std::string>& argv, const std::string& net_path,
             const std::string& sc_path) {
  Inputs in;
  auto [net, sc] = load_inputs(in, net_path, sc_path);
  const auto cfg = make_config(g);
  sdta::StageTimes ms;
  auto t0 = std::chrono::steady_clock::now();
  const auto policies = sdta::generate_policies(net, sdta::free_flow_ttd(net, sc), cfg);
  ms.policy = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  const auto splits = sdta::logit_splits(sdta::utilities(policies, cfg.choice));
  ms.choice = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  const auto out_load = sdta::load(net, policies, splits, sc, cfg);
  ms.load = ms_since(t0);

  const OutDir out(g.out);
  out.table("splits.tsv", [&](std::ostream& os) { sdta::write_splits_tsv(os, splits); });
  out.table("travel_times.tsv", [&](std::ostream& os) { sdta::write_travel_times_tsv(os, net, out_load.ttd); });
  Json runs = Json::array();
  for (const auto& r : out_load.runs)
    runs.push_back({{"demand", r.demand},
                    {"exited", r.exited},
                    {"in_network", r.in_network.empty() ? 0.0 : r.in_network.back()},
                    {"backlog", r.backlog.empty() ? 0.0 : r.backlog.back()},
                    {"dropped", r.dropped},
                    {"conservation_error_veh", r.conservation_error()}});
  out.json("summary.json", Json{{"runs", runs},
                                {"time_loops", out_load.stats.time_loops},
                                {"translations", out_load.stats.translations}});
  out.json("manifest.json", manifest("load", argv, config_json(cfg), in, g.seed, stage_json(ms)));

  std::cout << std::setprecision(6) << "realization\texited\tbacklog\tconservation_error\n";
  for (std::size_t r = 0; r < out_load.runs.size(); ++r)
    std::cout << r + 1 << '\t' << out_load.runs[r].exited << '\t'
              << (out_load.runs[r].backlog.empty() ? 0.0 : out_load.runs[r].backlog.back()) << '\t'
              << out_load.runs[r].conservation_error() << '\n';
  return 0;
}

int cmd_policies(const Globals& g, const std::vector<std::string>& argv, const std::string& ttd_path,
                 const std::string& arbitrary) {
  Inputs in;
  const auto doc = sdta::parse_ttd(sdta::detail::parse_text(in.add(ttd_path)));
  const auto& net = doc.network;
  const auto tree = sdta::generate_events(doc.ttd);
  std::vector<sdta::Policy> policies{sdta::dot_spi(net, doc.ttd, tree)};
  const auto z = parse_list<double>(g.z, "z");
  if (!arbitrary.empty()) {
    std::set<int> steps;
    if (arbitrary == "all")
      for (int t = 1; t <= doc.ttd.steps(); ++t) steps.insert(t);
    else
      for (int t : parse_list<int>(arbitrary, "step")) steps.insert(t);
    auto sub = sdta::lp_policy_arbitrary(net, doc.ttd, policies.front(), z, steps, g.threads);
    for (auto& p : sub) policies.push_back(std::move(p));
  } else if (!z.empty()) {
    auto sub = sdta::lp_policy(net, doc.ttd, policies.front(), z, g.threads);
    for (auto& p : sub) policies.push_back(std::move(p));
  }

  auto dump = [&](std::ostream& os) {
    os << std::setprecision(kPrecision);
    for (std::size_t w = 0; w < policies.size(); ++w) {
      os << "# policy " << w << ' ' << (w == 0 ? "optimal" : "suboptimal z=" + std::to_string(z[w - 1])) << '\n';
      sdta::write_policy_tsv(os, net, policies[w]);
    }
  };
  const OutDir out(g.out);
  if (out.enabled()) {
    out.table("policies.tsv", dump);
    Json config{{"z", z}, {"arbitrary_steps", arbitrary}};
    out.json("manifest.json", manifest("policies", argv, config, in, g.seed, Json::object()));
  } else {
    dump(std::cout);
  }
  return 0;
}

struct BenchRow {
  std::string loader;
  sdta::EquilibriumResult res;
  double wall_ms = 0.0;
};

int cmd_bench(const Globals& g, const std::vector<std::string>& argv, const std::string& net_path,
              const std::string& sc_path) {
  Inputs in;
  auto [net, sc] = load_inputs(in, net_path, sc_path);
  auto cfg = make_config(g);
  cfg.early_stop = false;
  std::vector<BenchRow> rows;
  for (auto kind : {sdta::LoaderKind::Chronological, sdta::LoaderKind::Iterative}) {
    cfg.loader = kind;
    const auto t0 = std::chrono::steady_clock::now();
    auto res = sdta::msa_solve(net, sc, cfg);
    rows.push_back({kind == sdta::LoaderKind::Iterative ? "iter" : "chrono", std::move(res), ms_since(t0)});
  }
  const double chrono_ms = rows[0].res.total_ms.load, iter_ms = rows[1].res.total_ms.load;

  auto report = [&](std::ostream& os) {
    os << "loader\titerations\tpolicy_ms\tchoice_ms\tload_ms\twall_ms\ttime_loops\ttranslations\n";
    for (const auto& r : rows)
      os << r.loader << '\t' << r.res.trace.size() << '\t' << r.res.total_ms.policy << '\t' << r.res.total_ms.choice
         << '\t' << r.res.total_ms.load << '\t' << r.wall_ms << '\t' << r.res.stats.time_loops << '\t'
         << r.res.stats.translations << '\n';
  };
  const OutDir out(g.out);
  out.table("bench.tsv", report);
  Json cmp{{"chrono_load_ms", chrono_ms},
           {"iter_load_ms", iter_ms},
           {"iter_load_ms_per_inner", iter_ms / cfg.inner_iterations},
           {"speedup", iter_ms / chrono_ms}};
  out.json("summary.json", cmp);
  Json stages{{"chrono", stage_json(rows[0].res.total_ms)}, {"iter", stage_json(rows[1].res.total_ms)}};
  out.json("manifest.json", manifest("bench", argv, config_json(cfg), in, g.seed, stages));

  std::cout << std::setprecision(6);
  report(std::cout);
  std::cout << "iter load ms / K_inner\t" << iter_ms / cfg.inner_iterations << "\nspeedup (iter / chrono)\t"
            << iter_ms / chrono_ms << '\n';
  return 0;
}

int cmd_sweep(const Globals& g, const std::vector<std::string>& argv, const std::string& net_path,
              const std::string& sc_path, const std::string& axis, const std::vector<std::string>& values,
              const std::string& link, const std::string& at, int draws) {
  Inputs in;
  auto [net, sc] = load_inputs(in, net_path, sc_path);
  auto base = make_config(g);
  const auto steps = parse_list<int>(at, "departure step");
  for (int t : steps)
    if (t < 1 || t > sc.steps) throw sdta::Error(sdta::ErrorCode::InvalidConfig, "departure step out of horizon");
  if (values.empty()) throw sdta::Error(sdta::ErrorCode::InvalidConfig, "sweep needs at least one value");

  std::ostringstream table;
  table << std::setprecision(kPrecision);
  sdta::StageTimes stages;
  auto timed = [&](const sdta::Scenario& s, const sdta::SolverConfig& c, double& wall) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = sdta::msa_solve(net, s, c);
    wall = ms_since(t0);
    stages += res.total_ms;
    return res;
  };

  if (axis == "capacity") {
    table << "point\tvector\taverage_expected_time_s\titerations\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      double wall = 0.0;
      const auto res = timed(sdta::with_capacity_means(net, sc, link, parse_list<double>(values[i], "capacity")), base, wall);
      table << i + 1 << '\t' << values[i] << '\t' << sdta::average_expected_time(res) << '\t' << res.trace.size() << '\n';
    }
  } else if (axis == "cov") {
    table << "cov";
    for (int t : steps) table << "\tstd_t" << t;
    table << '\n';
    for (const auto& v : values) {
      const double cov = parse_list<double>(v, "cov").at(0);
      const auto sd = sdta::monte_carlo_std(net, sc, cov, draws, g.seed, base, steps);
      table << cov;
      for (double s : sd) table << '\t' << s;
      table << '\n';
    }
  } else if (axis == "z") {
    table << "z";
    for (int t : steps) table << "\teta_optimal_t" << t;
    table << '\n';
    auto cfg = base;
    cfg.policies = 2;
    for (const auto& v : values) {
      cfg.z = {parse_list<double>(v, "z").at(0)};
      double wall = 0.0;
      const auto res = timed(sc, cfg, wall);
      table << cfg.z[0];
      for (int t : steps) table << '\t' << res.final_splits(0, t);
      table << '\n';
    }
  } else if (axis == "W" || axis == "R") {
    table << axis << "\titerations\twall_ms\tload_ms\n";
    auto cfg = base;
    cfg.early_stop = false;
    for (const auto& v : values) {
      const auto n = parse_list<std::size_t>(v, axis.c_str()).at(0);
      auto s = sc;
      if (axis == "W") {
        cfg.policies = n;
        cfg.z.clear();
      } else {
        s = sdta::replicate_realizations(sc, n, g.seed);
      }
      double wall = 0.0;
      const auto res = timed(s, cfg, wall);
      table << n << '\t' << res.trace.size() << '\t' << wall << '\t' << res.total_ms.load << '\n';
    }
  } else {
    throw sdta::Error(sdta::ErrorCode::InvalidConfig, "unknown sweep axis '" + axis + "'");
  }

  const OutDir out(g.out);
  out.table("sweep.tsv", [&](std::ostream& os) { os << table.str(); });
  Json config = config_json(base);
  config["axis"] = axis;
  config["values"] = values;
  config["link"] = link;
  config["at"] = steps;
  config["draws"] = draws;
  out.json("manifest.json", manifest("sweep", argv, config, in, g.seed, stage_json(stages)));
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Policy-based stochastic dynamic traffic assignment"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Result directory");
  app.add_option("--loader", g.loader, "Network loader")->check(CLI::IsMember({"chrono", "iter"}))->capture_default_str();
  app.add_option("--policies", g.policies, "Policies per iteration (W)")->capture_default_str();
  app.add_option("--z", g.z, "Comma-separated z factors for the suboptimal policies");
  app.add_option("--kappa", g.kappa, "Logit scale (negative)")->capture_default_str();
  app.add_option("--iters", g.iters, "Outer iterations (K)")->capture_default_str();
  app.add_option("--inner-iters", g.inner_iters, "Inner iterations of the iterative loader")->capture_default_str();
  app.add_option("--eps", g.eps, "Split convergence tolerance")->capture_default_str();
  app.add_flag("--strict-origin", g.strict_origin, "Drop demand the first link cannot admit");
  app.add_flag("--no-early-stop", g.no_early_stop, "Always run all outer iterations");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();

  std::string net_path, sc_path, ttd_path, arbitrary, axis, link = "2-3", at = "1";
  std::vector<std::string> values;
  int draws = 10;

  auto* validate = app.add_subcommand("validate", "Check a network and optionally a scenario");
  validate->add_option("network", net_path)->required();
  validate->add_option("scenario", sc_path);

  auto* solve = app.add_subcommand("solve", "Run the equilibrium solver");
  auto* load = app.add_subcommand("load", "Load free-flow policies once");
  auto* bench = app.add_subcommand("bench", "Time both loaders at equal outer iterations");
  auto* sweep = app.add_subcommand("sweep", "Solve once per value of one parameter");
  for (auto* sub : {solve, load, bench, sweep}) {
    sub->add_option("network", net_path)->required();
    sub->add_option("scenario", sc_path)->required();
  }
  sweep->add_option("--axis", axis, "Sweep axis")->required()->check(CLI::IsMember({"capacity", "cov", "z", "W", "R"}));
  sweep->add_option("--values", values, "Sweep points; capacity vectors are comma-separated per point")
      ->required()
      ->delimiter(';');
  sweep->add_option("--link", link, "Link whose capacity the capacity axis sets")->capture_default_str();
  sweep->add_option("--at", at, "Comma-separated departure steps for per-step responses")->capture_default_str();
  sweep->add_option("--draws", draws, "Monte Carlo draws per cov value")->capture_default_str();

  auto* policies = app.add_subcommand("policies", "Generate policies from a travel-time file");
  policies->add_option("ttd", ttd_path)->required();
  policies->add_option("--arbitrary-steps", arbitrary, "Inflate at these steps ('all' or a list)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::cout << std::setprecision(kPrecision);
  try {
    if (*validate) return cmd_validate(net_path, sc_path);
    if (*solve) return cmd_solve(g, args, net_path, sc_path);
    if (*load) return cmd_load(g, args, net_path, sc_path);
    if (*bench) return cmd_bench(g, args, net_path, sc_path);
    if (*sweep) return cmd_sweep(g, args, net_path, sc_path, axis, values, link, at, draws);
    if (*policies) return cmd_policies(g, args, ttd_path, arbitrary);
  } catch (const sdta::Error& e) {
    std::cerr << "error [" << sdta::to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
