#pragma once

// End-to-end leak loop against the simulator: install a victim secret in
// kernel-tagged pages, time one attack run per test value, repeat passes,
// decode bytes from the per-pass argmax votes.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flagstall/sim.hpp"

namespace flagstall {

enum class DecodeRule { ArgmaxMode, MeanMax };

struct AttackConfig {
  uint32_t to = 255;     // test values 0..=to
  uint32_t passes = 2000;
  std::vector<uint64_t> offset_range; // byte offsets to leak; empty = none
  DecodeRule decode_rule = DecodeRule::ArgmaxMode;

  bool operator==(const AttackConfig&) const = default;
  void validate() const;
};

struct VictimSpec {
  std::string secret;
  bool keep_cached = true;
  double uncached_readability = 0.1; // effective readability when not kept cached

  bool operator==(const VictimSpec&) const = default;
  void validate() const;
};

inline constexpr uint64_t kSecretAddr = 0xffff800000000000ull;

// Victim secret installed in privileged memory, plus the co-runner's
// current "secret is reachable" mark.
struct InstalledVictim {
  MemorySpace mem;
  uint64_t secret_addr = kSecretAddr;
  double effective_readability = 1.0;
};

InstalledVictim install_victim(const VictimSpec& victim, const MicroConfig& micro);

// One co-runner step: refreshes the reachability mark. Scheduled once
// before every attacker pass (V,A,V,A...).
void victim_step(const VictimSpec& victim, const MicroConfig& micro, InstalledVictim& installed);

// Registers used by the generated attack program.
inline constexpr uint8_t kAddrReg = 1;
inline constexpr uint8_t kTestReg = 2;
inline constexpr uint8_t kStartReg = 6;
inline constexpr uint8_t kEndReg = 7;

// The timed gadget: load address and test value, transiently SUB the
// privileged byte inside a transaction, then JZ/JMP/NOP landing pads,
// bracketed by RDTSC reads.
Program build_attack_program(uint32_t test_num, uint64_t offset, uint64_t secret_addr = kSecretAddr);

// Optional program rewrite applied to every built attack program (the
// mitigation hook).
using ProgramTransform = std::function<Program(const Program&)>;

struct PassTiming {
  uint32_t test_num = 0;
  uint64_t spend_time = 0;
};

// One sweep over all test values. argmax is the smallest test value
// attaining max_time (strict-greater update: the first maximum wins).
struct PassRecord {
  std::vector<PassTiming> timings;
  uint64_t max_time = 0;
  uint32_t argmax = 0;
};

// Single pass seeded directly from micro.rng_seed.
PassRecord run_pass(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                    uint64_t offset, const ProgramTransform& transform = {});

struct LeakByteResult {
  uint8_t decoded = 0;
  std::array<uint64_t, 256> histogram{}; // per-pass argmax counts
  std::vector<PassRecord> records;
};

// The per-test-value programs for one offset, transform applied. Victim
// independent, so accuracy loops build them once and share.
struct AttackPrograms {
  uint64_t offset = 0;
  std::vector<Program> programs;
};

AttackPrograms prepare_attack_programs(const AttackConfig& attack, uint64_t offset,
                                       const ProgramTransform& transform = {});

// `passes` independent passes (seeds derived per offset and pass), decoded
// per attack.decode_rule.
LeakByteResult leak_byte(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                         uint64_t offset, const ProgramTransform& transform = {});

LeakByteResult leak_byte_prepared(const MicroConfig& micro, const AttackConfig& attack,
                                  const VictimSpec& victim, const AttackPrograms& prepared);

struct OffsetLeak {
  uint64_t offset = 0;
  uint8_t decoded = 0;
  uint8_t truth = 0;
  std::array<uint64_t, 256> histogram{};
  uint32_t passes = 0;
};

struct LeakReport {
  std::vector<OffsetLeak> per_offset;
  double success_rate = 1.0; // matching bytes / total; 1.0 when no offsets
  std::string config_echo;   // filled by the reporting layer
};

// Streamed access to each offset's pass records (report/CSV writers).
using OffsetRecordsSink = std::function<void(uint64_t offset, const std::vector<PassRecord>&)>;

LeakReport leak_string(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                       const ProgramTransform& transform = {}, const OffsetRecordsSink& sink = {});

// Decoders. Mode of per-pass argmax is the channel's estimator; argmax of
// per-test mean duration is the deliberately fragile baseline. Ties break
// toward the smallest value.
uint8_t decode_argmax_mode(const std::array<uint64_t, 256>& histogram);
uint8_t decode_mean_max(const std::vector<PassRecord>& records);

} // namespace flagstall
