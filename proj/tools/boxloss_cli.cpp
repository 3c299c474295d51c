// boxloss: run the regression benchmark, audit gradients, sample gain
// curves. Exit codes: 0 success, 1 property failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "boxloss/gradcheck.hpp"
#include "boxloss/losses.hpp"
#include "boxloss/simlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPropertyFailure = 1;
constexpr int kExitUsage = 2;

constexpr const char* kAllLossNames = "iou,giou,diou,eiou,ciou,siou,wiou1";

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<boxloss::BaseLoss> parse_losses_or_exit(const std::string& csv) {
  std::vector<boxloss::BaseLoss> out;
  for (const std::string& name : split_csv(csv)) {
    const auto base = boxloss::parse_base_loss(name);
    if (!base) {
      std::cerr << "unknown loss '" << name << "'; valid losses: "
                << kAllLossNames << "\n";
      std::exit(kExitUsage);
    }
    out.push_back(*base);
  }
  if (out.empty()) {
    std::cerr << "no losses given; valid losses: " << kAllLossNames << "\n";
    std::exit(kExitUsage);
  }
  return out;
}

struct FmFlags {
  std::string kind = "none";  // none | v2 | v3
  double gamma = 0.5;
  double alpha = 1.9;
  double delta = 3.0;

  boxloss::FocusSpec to_spec() const {
    if (kind == "v2") return boxloss::FocusMonotonic{gamma};
    if (kind == "v3") return boxloss::FocusNonMonotonic{alpha, delta};
    return boxloss::FocusNone{};
  }
  json to_json() const {
    json j{{"kind", kind}};
    if (kind == "v2") j["gamma"] = gamma;
    if (kind == "v3") {
      j["alpha"] = alpha;
      j["delta"] = delta;
    }
    return j;
  }
};

void add_fm_flags(CLI::App* cmd, FmFlags& fm) {
  cmd->add_option("--fm", fm.kind, "Focusing mechanism: none, v2, or v3")
      ->check(CLI::IsMember({"none", "v2", "v3"}))
      ->capture_default_str();
  cmd->add_option("--gamma", fm.gamma, "v2 exponent (> 0)")
      ->capture_default_str();
  cmd->add_option("--alpha", fm.alpha, "v3 gain base (> 1)")
      ->capture_default_str();
  cmd->add_option("--delta", fm.delta, "v3 unit-gain outlier degree (> 0)")
      ->capture_default_str();
}

void write_file_or_exit(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    std::cerr << "cannot open " << path << " for writing\n";
    std::exit(kExitPropertyFailure);
  }
  os << content;
}

std::string join_args(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

int run_simulate(const std::string& command_line, const std::string& losses,
                 const FmFlags& fm, boxloss::SimConfig config, double epsilon,
                 double threshold, const std::string& out_dir,
                 bool dump_cases) {
  const auto bases = parse_losses_or_exit(losses);
  try {
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  const fs::path out(out_dir);
  fs::create_directories(out);

  std::vector<std::string> artifacts;
  std::vector<std::vector<boxloss::CurveRecord>> curves;
  for (const boxloss::BaseLoss base : bases) {
    boxloss::LossSpec spec{base, fm.to_spec(), epsilon};
    try {
      spec.validate();
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    curves.push_back(boxloss::run(config, spec));
    const std::string name = "curve_" + spec.name() + ".csv";
    std::ostringstream os;
    boxloss::write_curve_csv(os, curves.back());
    write_file_or_exit(out / name, os.str());
    artifacts.push_back(name);
    std::cout << spec.name() << ": final mean IoU loss "
              << boxloss::format_double(curves.back().back().mean_iou_loss)
              << "\n";
  }

  const auto ranking = boxloss::final_report(curves, threshold);
  {
    std::ostringstream os;
    boxloss::write_ranking_csv(os, ranking);
    write_file_or_exit(out / "ranking.csv", os.str());
    artifacts.push_back("ranking.csv");
  }
  if (dump_cases) {
    std::ostringstream os;
    boxloss::write_cases_csv(os, boxloss::generate_cases(config));
    write_file_or_exit(out / "cases.csv", os.str());
    artifacts.push_back("cases.csv");
  }

  json manifest{
      {"command", command_line},
      {"tool", "boxloss"},
      {"version", BOXLOSS_VERSION},
      {"seed", config.seed},
      {"config",
       {{"radius", config.radius},
        {"points_density", config.points_density},
        {"scales", config.scales},
        {"aspect_ratios", config.aspect_ratios},
        {"target_area", config.target_area},
        {"lr", config.lr},
        {"iterations", config.iterations},
        {"subsample", config.subsample},
        {"tracker_momentum", config.tracker_momentum},
        {"threads", config.threads},
        {"epsilon", epsilon},
        {"threshold", threshold}}},
      {"losses", json::array()},
      {"fm", fm.to_json()},
      {"artifacts", artifacts}};
  for (const boxloss::BaseLoss base : bases) {
    manifest["losses"].push_back(std::string(boxloss::base_loss_name(base)));
  }
  write_file_or_exit(out / "manifest.json", manifest.dump(2) + "\n");

  std::cout << "wrote " << artifacts.size() + 1 << " artifacts to "
            << out.string() << "\n";
  return kExitOk;
}

int run_grad_check(const std::string& losses, const FmFlags& fm,
                   boxloss::GradCheckConfig config, double epsilon,
                   double ema_mean, const std::string& out_file) {
  const auto bases = parse_losses_or_exit(losses);
  config.ema_mean = ema_mean;

  std::ostringstream csv;
  csv << "loss,cases,max_scaled_err,tolerance,all_zero_grad,status\n";
  bool all_passed = true;
  for (const boxloss::BaseLoss base : bases) {
    boxloss::LossSpec spec{base, fm.to_spec(), epsilon};
    try {
      spec.validate();
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return kExitUsage;
    }
    const boxloss::GradCheckReport report = boxloss::grad_check(spec, config);
    all_passed = all_passed && report.passed;

    std::string status = report.passed ? "pass" : "fail";
    if (report.all_gradients_zero) status += " (expected-vanishing)";
    csv << report.loss << ',' << report.cases << ','
        << boxloss::format_double(report.max_scaled_err) << ','
        << boxloss::format_double(config.tolerance) << ','
        << (report.all_gradients_zero ? 1 : 0) << ',' << status << '\n';
    std::cout << report.loss << ": max scaled err "
              << boxloss::format_double(report.max_scaled_err) << " over "
              << report.cases << " cases -> " << status << "\n";
  }
  write_file_or_exit(out_file, csv.str());
  return all_passed ? kExitOk : kExitPropertyFailure;
}

int run_gain_curve(double alpha, double delta, double beta_max, int steps,
                   const std::string& preset, const std::string& out_prefix) {
  std::vector<std::pair<double, double>> pairs;
  if (!preset.empty()) {
    if (preset != "table1") {
      std::cerr << "unknown preset '" << preset << "'; supported: table1\n";
      return kExitUsage;
    }
    pairs = {{1.4, 5.0}, {1.6, 4.0}, {1.9, 3.0}};
  } else {
    if (!(alpha > 1.0)) {
      std::cerr << "--alpha must be > 1\n";
      return kExitUsage;
    }
    if (!(delta > 0.0)) {
      std::cerr << "--delta must be > 0\n";
      return kExitUsage;
    }
    pairs = {{alpha, delta}};
  }

  for (const auto& [a, d] : pairs) {
    const auto table = boxloss::gain_curve(a, d, beta_max, steps);
    std::ostringstream os;
    os << "beta,r\n";
    for (const boxloss::GainSample& s : table) {
      os << boxloss::format_double(s.beta) << ','
         << boxloss::format_double(s.r) << '\n';
    }
    std::ostringstream name;
    name << out_prefix << "_a" << a << "_d" << d << ".csv";
    write_file_or_exit(name.str(), os.str());
    std::cout << "wrote " << name.str() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IoU-family bounding-box regression losses: simulation "
               "benchmark, gradient audits, gain curves"};
  app.set_version_flag("--version", std::string(BOXLOSS_VERSION));
  app.require_subcommand(1);

  // --- simulate ---
  auto* sim = app.add_subcommand(
      "simulate", "Gradient-descent regression benchmark; emits curve CSVs, "
                  "a ranking table, and a manifest");
  std::string sim_losses = kAllLossNames;
  FmFlags sim_fm;
  boxloss::SimConfig sim_config;
  double sim_epsilon = 1e-7;
  double sim_threshold = 0.2;
  std::string sim_out = ".";
  bool sim_dump_cases = false;
  sim->add_option("--r,--radius", sim_config.radius,
                  "Anchor-point disc radius (0, 0.5]")
      ->capture_default_str();
  sim->add_option("--density", sim_config.points_density,
                  "Points per unit radius^2")
      ->capture_default_str();
  sim->add_option("--losses", sim_losses, "Comma-separated loss list")
      ->capture_default_str();
  add_fm_flags(sim, sim_fm);
  sim->add_option("--iters", sim_config.iterations, "Descent iterations")
      ->capture_default_str();
  sim->add_option("--lr", sim_config.lr, "Learning rate")
      ->capture_default_str();
  sim->add_option("--seed", sim_config.seed, "RNG seed")
      ->envname("BOXLOSS_SEED")
      ->capture_default_str();
  sim->add_option("--subsample", sim_config.subsample,
                  "Fraction of cases kept, (0, 1]")
      ->capture_default_str();
  sim->add_option("--momentum", sim_config.tracker_momentum,
                  "EMA momentum for focusing runs (0 freezes the mean)")
      ->capture_default_str();
  sim->add_option("--target-area", sim_config.target_area, "Target box area")
      ->capture_default_str();
  sim->add_option("--threads", sim_config.threads,
                  "Worker threads (0 = hardware)")
      ->capture_default_str();
  sim->add_option("--epsilon", sim_epsilon, "Angle-cost guard")
      ->capture_default_str();
  sim->add_option("--threshold", sim_threshold,
                  "Mean-loss threshold for the ranking table")
      ->capture_default_str();
  sim->add_option("--out-dir", sim_out, "Artifact directory")
      ->capture_default_str();
  sim->add_flag("--dump-cases", sim_dump_cases,
                "Also write the generated cases as CSV");

  // --- grad-check ---
  auto* gc = app.add_subcommand(
      "grad-check", "Compare backward gradients against central finite "
                    "differences of the recorded loss");
  std::string gc_losses = kAllLossNames;
  FmFlags gc_fm;
  boxloss::GradCheckConfig gc_config;
  double gc_epsilon = 1e-7;
  double gc_mean = 1.0;
  std::string gc_out = "grad_check.csv";
  bool gc_disjoint = false, gc_overlap = false;
  gc->add_option("--losses,--loss", gc_losses, "Comma-separated loss list")
      ->capture_default_str();
  add_fm_flags(gc, gc_fm);
  gc->add_option("--cases", gc_config.cases, "Random cases per loss")
      ->capture_default_str();
  gc->add_option("--tolerance", gc_config.tolerance,
                 "Max allowed scaled error")
      ->capture_default_str();
  gc->add_option("--step", gc_config.step, "Central-difference half step")
      ->capture_default_str();
  gc->add_option("--seed", gc_config.seed, "RNG seed")
      ->envname("BOXLOSS_SEED")
      ->capture_default_str();
  gc->add_option("--ema-mean", gc_mean, "Tracker mean seen by focusing")
      ->capture_default_str();
  gc->add_option("--epsilon", gc_epsilon, "Angle-cost guard")
      ->capture_default_str();
  gc->add_option("--out", gc_out, "Report CSV path")->capture_default_str();
  auto* flag_disjoint =
      gc->add_flag("--disjoint-only", gc_disjoint, "Only disjoint pairs");
  gc->add_flag("--overlap-only", gc_overlap, "Only overlapping pairs")
      ->excludes(flag_disjoint);

  // --- gain-curve ---
  auto* gain = app.add_subcommand(
      "gain-curve", "Sample the non-monotonic gradient gain r(beta)");
  double gain_alpha = 1.9, gain_delta = 3.0, gain_beta_max = 10.0;
  int gain_steps = 1000;
  std::string gain_preset;
  std::string gain_out = "gain";
  gain->add_option("--alpha", gain_alpha, "Gain base (> 1)")
      ->capture_default_str();
  gain->add_option("--delta", gain_delta, "Unit-gain outlier degree (> 0)")
      ->capture_default_str();
  gain->add_option("--beta-max", gain_beta_max, "Largest sampled beta")
      ->capture_default_str();
  gain->add_option("--steps", gain_steps, "Grid size (>= 2)")
      ->capture_default_str();
  gain->add_option("--preset", gain_preset,
                   "Named hyperparameter set (table1)");
  gain->add_option("--out", gain_out, "Output file prefix")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (sim->parsed()) {
      return run_simulate(join_args(argc, argv), sim_losses, sim_fm,
                          sim_config, sim_epsilon, sim_threshold, sim_out,
                          sim_dump_cases);
    }
    if (gc->parsed()) {
      gc_config.pairs = gc_disjoint ? boxloss::PairFilter::kDisjointOnly
                        : gc_overlap ? boxloss::PairFilter::kOverlapOnly
                                     : boxloss::PairFilter::kMixed;
      return run_grad_check(gc_losses, gc_fm, gc_config, gc_epsilon, gc_mean,
                            gc_out);
    }
    if (gain->parsed()) {
      return run_gain_curve(gain_alpha, gain_delta, gain_beta_max, gain_steps,
                            gain_preset, gain_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitPropertyFailure;
  }
  return kExitUsage;
}
