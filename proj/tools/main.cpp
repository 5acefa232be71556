// flagstall CLI: batch front door for leak / sweep / mitigate / analyze
// runs. Every run writes a manifest first; re-running a manifest (or the
// same command) reproduces byte-identical outputs.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "flagstall/io.hpp"

namespace fs = std::filesystem;
using namespace flagstall;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  std::optional<uint32_t> passes;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "override rng_seed");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--passes", args.passes, "override passes per byte");
}

ExperimentConfig resolve(const CommonArgs& args) {
  ExperimentConfig cfg = load_config_file(args.config_path);
  if (args.seed) cfg.micro.rng_seed = *args.seed;
  if (args.passes) {
    cfg.attack.passes = *args.passes;
    cfg.attack.validate();
  }
  return cfg;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const std::map<std::string, std::string>& extra, const ExperimentConfig& cfg) {
  std::string m = "# flagstall run manifest\n";
  m += "subcommand = " + subcommand + "\n";
  for (const auto& [k, v] : extra) m += k + " = " + v + "\n";
  m += "[config]\n";
  m += serialize_config(cfg);
  write_file((out_dir / "manifest.txt").string(), m);
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

int cmd_leak(const CommonArgs& args, const std::string& trace_out) {
  ExperimentConfig cfg = resolve(args);
  fs::path out = prepare_out(args.out_dir);
  write_manifest(out, "leak", {}, cfg);

  std::string passes_rows = passes_csv_header();
  std::string mean_rows = mean_profile_csv_header();
  auto sink = [&](uint64_t offset, const std::vector<PassRecord>& records) {
    append_passes_csv(passes_rows, offset, records);
    append_mean_profile_csv(mean_rows, offset, mean_profile(records));
  };

  LeakReport report = leak_string(cfg.micro, cfg.attack, cfg.victim, {}, sink);
  report.config_echo = serialize_config(cfg);

  write_file((out / "report.txt").string(), leak_report_text(report));
  write_file((out / "passes.csv").string(), passes_rows);
  write_file((out / "histogram.csv").string(), histogram_csv(report.per_offset));
  write_file((out / "mean_profile.csv").string(), mean_rows);

  if (!trace_out.empty()) {
    // sample trace: first selected offset, matching test value, pass-0 seed
    uint64_t offset = cfg.attack.offset_range.empty() ? 0 : cfg.attack.offset_range.front();
    if (offset >= cfg.victim.secret.size())
      throw SimError(Err::BadConfig, "trace offset outside victim secret");
    InstalledVictim iv = install_victim(cfg.victim, cfg.micro);
    MicroConfig m = cfg.micro;
    m.rng_seed = derive_seed(derive_seed(cfg.micro.rng_seed, offset), 0);
    m.secret_transiently_readable = iv.effective_readability;
    ArchState init;
    init.mem = iv.mem;
    auto prog = build_attack_program(static_cast<uint8_t>(cfg.victim.secret[offset]), offset);
    write_file(trace_out, trace_csv(run(m, std::move(init), prog, true)));
  }

  std::cout << "success_rate = " << format_double(report.success_rate) << "\n";
  return 0;
}

std::vector<double> parse_grid(const std::string& grid_arg) {
  std::vector<double> grid;
  std::stringstream ss(grid_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::runtime_error("");
    } catch (...) {
      throw SimError(Err::BadConfig, "bad grid value '" + item + "'");
    }
  }
  if (grid.empty()) throw SimError(Err::BadConfig, "empty sweep grid");
  for (size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1]) throw SimError(Err::BadConfig, "grid must be strictly increasing");
  return grid;
}

int cmd_sweep(const CommonArgs& args, const std::string& param, const std::string& grid_arg,
              uint32_t experiments) {
  ExperimentConfig cfg = resolve(args);

  std::string grid_str = grid_arg;
  if (grid_str.empty()) {
    if (param == "delay") grid_str = "0,1,2,3,4,5,6,7,8,9,10,11,12";
    else if (param == "revert_stall_window") grid_str = "6,7,8,9";
    else if (param == "jitter") grid_str = "0,1,2,4,8";
    else if (param == "passes") grid_str = "1,10,100,2000";
  }
  std::vector<double> grid = parse_grid(grid_str);

  SweepResult result;
  result.param = param;
  result.grid = grid;

  auto accuracy_at = [&](const MicroConfig& m, const AttackConfig& a) {
    return decoder_accuracy(m, a, cfg.victim, a.decode_rule, experiments);
  };

  if (param == "delay") {
    std::vector<uint32_t> delays(grid.begin(), grid.end());
    result = stall_window_sweep(cfg.micro, delays);
  } else if (param == "revert_stall_window") {
    // metric: smallest NOP delay that zeroes the signal (the window itself)
    for (double w : grid) {
      MicroConfig m = cfg.micro;
      m.revert_stall_window = static_cast<uint32_t>(w);
      uint32_t d = 0;
      while (zero_noise_signal(m, nop_delay_transform(d)) > 0) {
        ++d;
        if (d > m.revert_stall_window + 64)
          throw SimError(Err::BadProgram, "signal did not vanish within the sweep bound");
      }
      result.metric.push_back(d);
    }
  } else if (param == "jitter") {
    for (double j : grid) {
      MicroConfig m = cfg.micro;
      m.noise.kind = NoiseModel::Kind::Additive;
      m.noise.per_sample_jitter = static_cast<uint32_t>(j);
      result.metric.push_back(accuracy_at(m, cfg.attack));
    }
  } else if (param == "passes") {
    for (double p : grid) {
      AttackConfig a = cfg.attack;
      a.passes = static_cast<uint32_t>(p);
      a.validate();
      result.metric.push_back(accuracy_at(cfg.micro, a));
    }
  } else {
    throw SimError(Err::BadConfig, "unknown sweep param '" + param + "'");
  }

  fs::path out = prepare_out(args.out_dir);
  write_manifest(out, "sweep",
                 {{"param", param}, {"grid", grid_str}, {"experiments", std::to_string(experiments)}}, cfg);
  write_file((out / "sweep.csv").string(), sweep_csv(result));
  std::cout << "sweep " << param << ": " << result.grid.size() << " points\n";
  return 0;
}

int cmd_mitigate(const CommonArgs& args, const std::string& gadget_arg, uint32_t experiments) {
  ExperimentConfig cfg = resolve(args);
  Gadget gadget = parse_gadget(gadget_arg);
  fs::path out = prepare_out(args.out_dir);
  write_manifest(out, "mitigate",
                 {{"gadget", gadget_name(gadget)}, {"experiments", std::to_string(experiments)}}, cfg);

  MitigationReport report = evaluate_mitigation(cfg.micro, cfg.attack, cfg.victim, gadget, experiments);
  write_file((out / "mitigation_report.txt").string(), mitigation_report_text(report));
  std::cout << "mitigated_accuracy = " << format_double(report.mitigated_accuracy) << " (baseline "
            << format_double(report.baseline_accuracy) << "), signal " << report.signal_before << " -> "
            << report.signal_after << "\n";
  return 0;
}

// Recompute statistics from a stored passes.csv (argmax-mode decode).
int cmd_analyze(const CommonArgs& args, const std::string& in_dir) {
  ExperimentConfig cfg = resolve(args);
  std::string csv = read_file((fs::path(in_dir) / "passes.csv").string());

  std::map<uint64_t, OffsetLeak> offsets;
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "offset,pass,argmax,max_time")
    throw SimError(Err::BadConfig, "unrecognized passes.csv header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<uint64_t, 4> cols{};
    std::stringstream ls(line);
    std::string item;
    for (auto& col : cols) {
      if (!std::getline(ls, item, ',')) throw SimError(Err::BadConfig, "short row in passes.csv");
      col = std::stoull(item);
    }
    auto& ol = offsets[cols[0]];
    ol.offset = cols[0];
    if (cols[2] > 255) throw SimError(Err::BadConfig, "argmax out of range in passes.csv");
    ol.histogram[cols[2]]++;
    ol.passes++;
  }

  LeakReport report;
  size_t matches = 0;
  for (auto& [off, ol] : offsets) {
    ol.decoded = decode_argmax_mode(ol.histogram);
    ol.truth = off < cfg.victim.secret.size() ? static_cast<uint8_t>(cfg.victim.secret[off]) : 0;
    if (ol.decoded == ol.truth) ++matches;
    report.per_offset.push_back(ol);
  }
  report.success_rate =
      report.per_offset.empty() ? 1.0 : static_cast<double>(matches) / report.per_offset.size();
  report.config_echo = serialize_config(cfg);

  fs::path out = prepare_out(args.out_dir);
  write_manifest(out, "analyze", {{"input", in_dir}}, cfg);
  write_file((out / "report.txt").string(), leak_report_text(report));
  write_file((out / "histogram.csv").string(), histogram_csv(report.per_offset));
  std::cout << "success_rate = " << format_double(report.success_rate) << "\n";
  return 0;
}

// Re-execute a recorded manifest using its embedded resolved config.
int cmd_rerun(const std::string& manifest_path, std::string out_dir) {
  std::string text = read_file(manifest_path);
  size_t split = text.find("[config]\n");
  if (split == std::string::npos) throw SimError(Err::BadConfig, "manifest has no [config] section");
  ExperimentConfig cfg = parse_config_text(text.substr(split + 9));

  std::map<std::string, std::string> head;
  std::istringstream is(text.substr(0, split));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    head[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto sub = head.find("subcommand");
  if (sub == head.end()) throw SimError(Err::BadConfig, "manifest has no subcommand");

  if (out_dir.empty()) out_dir = fs::path(manifest_path).parent_path().string();
  fs::path tmp_cfg = fs::path(out_dir.empty() ? "." : out_dir);
  fs::create_directories(tmp_cfg);
  std::string cfg_file = (tmp_cfg / ".rerun_config.txt").string();
  write_file(cfg_file, serialize_config(cfg));

  CommonArgs args;
  args.config_path = cfg_file;
  args.out_dir = out_dir.empty() ? "." : out_dir;
  if (sub->second == "leak") return cmd_leak(args, "");
  if (sub->second == "sweep")
    return cmd_sweep(args, head.at("param"), head.at("grid"),
                     static_cast<uint32_t>(std::stoul(head.at("experiments"))));
  if (sub->second == "mitigate")
    return cmd_mitigate(args, head.at("gadget"), static_cast<uint32_t>(std::stoul(head.at("experiments"))));
  if (sub->second == "analyze") return cmd_analyze(args, head.at("input"));
  throw SimError(Err::BadConfig, "manifest subcommand '" + sub->second + "' not rerunnable");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"flagstall: transient-flag timing channel simulator"};
  app.require_subcommand(1);

  CommonArgs leak_args, sweep_args, mit_args, an_args;
  std::string trace_out, sweep_param, sweep_grid, gadget_arg = "delay", analyze_in;
  std::string manifest_path, rerun_out;
  uint32_t sweep_experiments = 50, mit_experiments = 200;

  auto* leak = app.add_subcommand("leak", "leak the victim secret, write report + histograms");
  add_common(leak, leak_args);
  leak->add_option("--trace-out", trace_out, "also write a sample run trace CSV");

  auto* sweep = app.add_subcommand("sweep", "sweep a parameter, write metric CSV");
  add_common(sweep, sweep_args);
  sweep->add_option("--param", sweep_param, "delay | revert_stall_window | jitter | passes")->required();
  sweep->add_option("--grid", sweep_grid, "comma-separated grid (default per param)");
  sweep->add_option("--experiments", sweep_experiments, "experiments per accuracy point");

  auto* mitigate = app.add_subcommand("mitigate", "evaluate a mitigation gadget");
  add_common(mitigate, mit_args);
  mitigate->add_option("--gadget", gadget_arg, "delay[:COUNT] | lahf_sahf | pushf_popf | hardware_off");
  mitigate->add_option("--experiments", mit_experiments, "experiments per accuracy measurement");

  auto* analyze = app.add_subcommand("analyze", "recompute statistics from stored pass CSVs");
  add_common(analyze, an_args);
  analyze->add_option("--in", analyze_in, "directory containing passes.csv")->required();

  auto* rerun = app.add_subcommand("rerun", "re-execute a run manifest");
  rerun->add_option("manifest", manifest_path, "manifest.txt path")->required();
  rerun->add_option("--out", rerun_out, "output directory (default: manifest's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e); // --help
    app.exit(e);
    return 2;
  }

  try {
    if (leak->parsed()) return cmd_leak(leak_args, trace_out);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_param, sweep_grid, sweep_experiments);
    if (mitigate->parsed()) return cmd_mitigate(mit_args, gadget_arg, mit_experiments);
    if (analyze->parsed()) return cmd_analyze(an_args, analyze_in);
    if (rerun->parsed()) return cmd_rerun(manifest_path, rerun_out);
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case Err::BadConfig:
      case Err::IoError:
      case Err::ParseError: return 2;
      default: return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
