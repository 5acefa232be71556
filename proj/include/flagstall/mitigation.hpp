#pragma once

// Software mitigations as program transformations: a NOP delay that outlasts
// the revert-stall window, flag-rewrite gadgets (LAHF;SAHF or PUSHF;POPF)
// that clear the pending revert, and the hardware switch that zeroes the
// stall penalty. Plus the evaluator that measures each against the attack.

#include <cstdint>
#include <string>

#include "flagstall/analysis.hpp"

namespace flagstall {

struct Gadget {
  enum class Kind { Delay, LahfSahf, PushfPopf, HardwareOff };
  Kind kind = Kind::Delay;
  uint32_t delay_count = 6; // delay kind only

  bool operator==(const Gadget&) const = default;
};

// "delay", "delay:10", "lahf_sahf", "pushf_popf", "hardware_off".
Gadget parse_gadget(const std::string& name);
std::string gadget_name(const Gadget& gadget);

// Inserts the gadget's instructions immediately before the first
// flag-dependent jump after the transaction. hardware_off inserts nothing
// (the evaluator applies it as a config change). Errors: delay count 0, or
// no flag-dependent jump to protect.
Program apply_gadget(const Program& prog, const Gadget& gadget);

struct MitigationReport {
  Gadget gadget;
  uint32_t experiments = 0;
  uint32_t passes = 0;
  double baseline_accuracy = 0.0;
  double mitigated_accuracy = 0.0;
  uint64_t signal_before = 0; // zero-noise stall signal, cycles
  uint64_t signal_after = 0;
};

// Paired-seed comparison: per-experiment uniform-random secret bytes,
// decoded with and without the gadget (hardware_off: with and without
// zeroing jcc_stall_penalty). The victim argument supplies the caching
// behavior; its secret is not used.
MitigationReport evaluate_mitigation(const MicroConfig& micro, const AttackConfig& attack,
                                     const VictimSpec& victim, const Gadget& gadget, uint32_t experiments);

} // namespace flagstall
