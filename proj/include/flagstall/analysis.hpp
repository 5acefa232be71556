#pragma once

// Statistics over pass records: the argmax distribution (the usable
// channel) against the mean-duration profile (swamped by noise), plus the
// accuracy and stall-window sweep utilities the reports are built from.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flagstall/attack.hpp"

namespace flagstall {

struct Histogram {
  std::array<uint64_t, 256> bins{};
  uint64_t total = 0;
};

// bin[v] = number of passes whose argmax was v.
Histogram argmax_histogram(const std::vector<PassRecord>& records);

struct MeanProfileEntry {
  uint32_t test_num = 0;
  double mean = 0.0;
  double stddev = 0.0; // sample standard deviation; 0 with a single sample
  uint64_t samples = 0;
};

struct MeanProfile {
  std::vector<MeanProfileEntry> entries; // only test values with >= 1 sample
};

MeanProfile mean_profile(const std::vector<PassRecord>& records);

// Fraction of independent experiments (derived seeds) that decode the
// victim byte correctly under the given rule.
double decoder_accuracy(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                        DecodeRule rule, uint32_t experiments, const ProgramTransform& transform = {});

// Both rules decoded from one shared set of records per experiment —
// identical to two paired-seed decoder_accuracy calls, at half the cost.
// Returns {argmax_mode accuracy, mean_max accuracy}.
std::pair<double, double> paired_rule_accuracy(const MicroConfig& micro, const AttackConfig& attack,
                                               const VictimSpec& victim, uint32_t experiments,
                                               const ProgramTransform& transform = {});

// Per-experiment victim provider (uniform-random secrets and the like).
using VictimFactory = std::function<VictimSpec(uint32_t experiment, uint64_t experiment_seed)>;

double accuracy_over_experiments(const MicroConfig& micro, const AttackConfig& attack, DecodeRule rule,
                                 uint32_t experiments, const VictimFactory& factory,
                                 const ProgramTransform& transform = {});

struct SweepResult {
  std::string param;
  std::vector<double> grid;   // strictly increasing
  std::vector<double> metric; // accuracy or signal cycles, per grid value
};

// Zero-noise revert-stall signal: stalled minus unstalled cost of the
// attack's flag-dependent jump, read from traces.
uint64_t zero_noise_signal(const MicroConfig& micro, const ProgramTransform& transform = {});

// Signal as a function of NOP delay inserted between squash and the Jcc.
SweepResult stall_window_sweep(const MicroConfig& micro, const std::vector<uint32_t>& delays);

// d NOPs inserted immediately before the attack's flag-dependent jump
// (identity when d == 0).
ProgramTransform nop_delay_transform(uint32_t count);

} // namespace flagstall
