#include "flagstall/analysis.hpp"

#include <cmath>
#include <string_view>

#include "flagstall/parallel.hpp"

namespace flagstall {

Histogram argmax_histogram(const std::vector<PassRecord>& records) {
  if (records.empty()) throw SimError(Err::BadConfig, "argmax_histogram needs at least one record");
  Histogram h;
  for (const auto& rec : records) {
    h.bins[rec.argmax & 0xff]++;
    h.total++;
  }
  return h;
}

MeanProfile mean_profile(const std::vector<PassRecord>& records) {
  if (records.empty()) throw SimError(Err::BadConfig, "mean_profile needs at least one record");
  std::array<double, 256> sum{};
  std::array<double, 256> sumsq{};
  std::array<uint64_t, 256> n{};
  for (const auto& rec : records)
    for (const auto& t : rec.timings) {
      double v = static_cast<double>(t.spend_time);
      sum[t.test_num] += v;
      sumsq[t.test_num] += v * v;
      n[t.test_num]++;
    }
  MeanProfile prof;
  for (uint32_t i = 0; i < 256; ++i) {
    if (n[i] == 0) continue;
    MeanProfileEntry e;
    e.test_num = i;
    e.samples = n[i];
    e.mean = sum[i] / static_cast<double>(n[i]);
    if (n[i] > 1) {
      double var = (sumsq[i] - sum[i] * sum[i] / static_cast<double>(n[i])) / static_cast<double>(n[i] - 1);
      e.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    prof.entries.push_back(e);
  }
  return prof;
}

namespace {

struct ExperimentOutcome {
  bool argmax_correct = false;
  bool mean_correct = false;
};

std::vector<ExperimentOutcome> run_experiments(const MicroConfig& micro, const AttackConfig& attack,
                                               uint32_t experiments, const VictimFactory& factory,
                                               const ProgramTransform& transform) {
  if (experiments < 1) throw SimError(Err::BadConfig, "experiments must be >= 1");
  uint64_t offset = attack.offset_range.empty() ? 0 : attack.offset_range.front();
  const AttackPrograms prepared = prepare_attack_programs(attack, offset, transform);
  std::vector<ExperimentOutcome> out(experiments);
  parallel_for(experiments, [&](size_t i) {
    uint64_t seed = derive_seed(micro.rng_seed, i);
    VictimSpec victim = factory(static_cast<uint32_t>(i), seed);
    MicroConfig m = micro;
    m.rng_seed = seed;
    LeakByteResult lb = leak_byte_prepared(m, attack, victim, prepared);
    uint8_t truth = static_cast<uint8_t>(victim.secret.at(offset));
    out[i].argmax_correct = decode_argmax_mode(lb.histogram) == truth;
    out[i].mean_correct = decode_mean_max(lb.records) == truth;
  });
  return out;
}

} // namespace

double accuracy_over_experiments(const MicroConfig& micro, const AttackConfig& attack, DecodeRule rule,
                                 uint32_t experiments, const VictimFactory& factory,
                                 const ProgramTransform& transform) {
  auto outcomes = run_experiments(micro, attack, experiments, factory, transform);
  size_t hits = 0;
  for (const auto& o : outcomes)
    hits += rule == DecodeRule::ArgmaxMode ? o.argmax_correct : o.mean_correct;
  return static_cast<double>(hits) / experiments;
}

double decoder_accuracy(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                        DecodeRule rule, uint32_t experiments, const ProgramTransform& transform) {
  return accuracy_over_experiments(
      micro, attack, rule, experiments, [&](uint32_t, uint64_t) { return victim; }, transform);
}

std::pair<double, double> paired_rule_accuracy(const MicroConfig& micro, const AttackConfig& attack,
                                               const VictimSpec& victim, uint32_t experiments,
                                               const ProgramTransform& transform) {
  auto outcomes = run_experiments(
      micro, attack, experiments, [&](uint32_t, uint64_t) { return victim; }, transform);
  size_t am = 0, mm = 0;
  for (const auto& o : outcomes) {
    am += o.argmax_correct;
    mm += o.mean_correct;
  }
  return {static_cast<double>(am) / experiments, static_cast<double>(mm) / experiments};
}

ProgramTransform nop_delay_transform(uint32_t count) {
  if (count == 0) return {};
  return [count](const Program& prog) {
    auto jcc = find_jcc_after_transaction(prog);
    if (!jcc) throw SimError(Err::BadProgram, "no flag-dependent jump after the transaction");
    Program out = prog;
    std::vector<Instruction> nops(count);
    for (auto& n : nops) n.op = Opcode::Nop;
    out.insert(*jcc, nops);
    return out;
  };
}

uint64_t zero_noise_signal(const MicroConfig& micro, const ProgramTransform& transform) {
  MicroConfig quiet = micro;
  quiet.noise.kind = NoiseModel::Kind::None;
  quiet.secret_transiently_readable = 1.0;

  VictimSpec victim;
  victim.secret = std::string(1, '\x42');
  InstalledVictim iv = install_victim(victim, quiet);

  auto jcc_cost_of = [&](uint32_t test_num) -> uint64_t {
    Program prog = build_attack_program(test_num, 0);
    if (transform) prog = transform(prog);
    ArchState init;
    init.mem = iv.mem;
    RunResult r = run(quiet, std::move(init), prog, /*record_trace=*/true);
    bool after_squash = false;
    for (const auto& t : r.trace) {
      if (std::string_view(t.op) == "SQUASH") after_squash = true;
      if (after_squash && !t.transient && (std::string_view(t.op) == "JZ" || std::string_view(t.op) == "JE"))
        return t.cycle_cost;
    }
    throw SimError(Err::BadProgram, "attack trace has no post-squash Jcc");
  };

  uint64_t stalled = jcc_cost_of(0x42);  // matching test value: flag flips, revert pending
  uint64_t unstalled = jcc_cost_of(0x17);
  return stalled - unstalled;
}

SweepResult stall_window_sweep(const MicroConfig& micro, const std::vector<uint32_t>& delays) {
  if (delays.empty()) throw SimError(Err::BadConfig, "empty delay grid");
  SweepResult res;
  res.param = "delay";
  uint32_t prev = 0;
  bool first = true;
  for (uint32_t d : delays) {
    if (!first && d <= prev) throw SimError(Err::BadConfig, "delay grid must be strictly increasing");
    first = false;
    prev = d;
    res.grid.push_back(d);
    res.metric.push_back(static_cast<double>(zero_noise_signal(micro, nop_delay_transform(d))));
  }
  return res;
}

} // namespace flagstall
