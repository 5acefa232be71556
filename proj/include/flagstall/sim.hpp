#pragma once

// Cycle-counting executor. Adds to the ISA: TSX-style transactions, the
// transient window a privileged access opens inside one, architectural
// rollback on squash, and the post-squash revert stall that briefly slows
// flag-dependent jumps — the timing channel everything else measures.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flagstall/isa.hpp"

namespace flagstall {

struct NoiseModel {
  enum class Kind { None, Additive };
  Kind kind = Kind::Additive;
  uint32_t per_sample_jitter = 4; // max cycles added uniformly per RDTSC read
  double outlier_prob = 0.01;     // chance of a large outlier per read
  uint64_t outlier_magnitude = 6000;

  bool operator==(const NoiseModel&) const = default;
};

struct BaseLatency {
  uint32_t jump = 1;
  uint32_t alu = 1;       // SUB/CMP/CMPXCHG, register MOV, XBEGIN/XEND
  uint32_t mov_load = 4;  // MOV touching memory
  uint32_t nop = 1;
  uint32_t flag_image = 2; // LAHF/SAHF/PUSHF/POPF
  uint32_t rdtsc = 0;      // reads the counter without advancing it

  bool operator==(const BaseLatency&) const = default;
};

enum class Suppression { Tsx, Interrupt };

struct MicroConfig {
  uint32_t transient_window = 8;      // shadow instructions after the faulting access
  uint32_t revert_stall_window = 8;   // cycles after squash during which a Jcc stalls
  uint32_t jcc_stall_penalty = 20;    // extra cycles on a stalled Jcc
  BaseLatency base_latency{};
  double secret_transiently_readable = 1.0; // chance a privileged byte forwards its true value
  NoiseModel noise{};
  uint64_t rng_seed = 1;
  Suppression suppression = Suppression::Tsx;
  uint32_t interrupt_abort_overhead = 150; // extra squash cycles under interrupt suppression
  uint64_t instruction_budget = 1'000'000;

  bool operator==(const MicroConfig&) const = default;
  void validate() const;
};

// Flag bits for PendingRevert masks.
enum FlagBit : uint8_t { kZF = 1, kCF = 2, kSF = 4, kOF = 8, kPF = 16, kAF = 32 };

uint8_t flags_diff_mask(const Flags& a, const Flags& b);

// Squash that reverted transiently modified flags: dependent Jcc stalls
// until expires_at.
struct PendingRevert {
  uint8_t flag_mask = 0;
  uint64_t expires_at = 0;
};

struct PipelineState {
  uint64_t cycle = 0;
  std::optional<PendingRevert> pending_revert;
  bool in_transaction = false;
  std::optional<ArchState> checkpoint;
};

struct TraceEntry {
  uint32_t step = 0;
  uint32_t pc = 0;
  const char* op = "";
  uint64_t cycle_cost = 0;
  bool transient = false;
  bool stalled = false;
};

struct RunResult {
  ArchState final_state;
  uint64_t cycles = 0;
  std::vector<TraceEntry> trace;
  bool aborted = false;
};

// splitmix64: tiny, fully specified, bit-identical everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  uint64_t uniform(uint64_t hi_inclusive) {
    uint64_t draw = next();
    return hi_inclusive == 0 ? 0 : draw % (hi_inclusive + 1);
  }
  bool bernoulli(double p) {
    uint64_t draw = next();
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return draw < static_cast<uint64_t>(p * 18446744073709551616.0);
  }

 private:
  uint64_t state_;
};

// Derived stream seed (per experiment / offset / pass).
uint64_t derive_seed(uint64_t base, uint64_t stream);

// Cost of a jump at the current pipeline state: base jump latency, plus the
// stall penalty iff the opcode reads a flag with a live pending revert.
uint64_t jcc_cost(const MicroConfig& cfg, const PipelineState& pipe, Opcode op);

class Simulator {
 public:
  explicit Simulator(MicroConfig cfg);

  // Executes to HALT or past the last instruction. The RNG advances across
  // runs on the same instance, so consecutive runs share one noise stream.
  RunResult run(ArchState state, const Program& prog, bool record_trace = false);

  const MicroConfig& config() const { return cfg_; }

  // Virtual time-stamp read: under additive noise, advances the counter by
  // this read's jitter draw, then returns it.
  uint64_t rdtsc(PipelineState& pipe);

 private:
  uint64_t noise_draw();
  uint8_t transient_execute(const ArchState& at_fault, const Program& prog, const Flags& checkpoint_flags,
                            uint64_t tsc, std::vector<TraceEntry>* trace, uint32_t& step);

  MicroConfig cfg_;
  Rng rng_;
};

// Single run with a fresh Simulator (fresh noise stream from cfg.rng_seed).
RunResult run(const MicroConfig& cfg, ArchState state, const Program& prog, bool record_trace = false);

// CSV export: step,pc,opcode,cycle_cost,transient,stalled
std::string trace_csv(const RunResult& result);

} // namespace flagstall
