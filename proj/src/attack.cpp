#include "flagstall/attack.hpp"

#include <cstdio>

#include "flagstall/assembler.hpp"

namespace flagstall {

void AttackConfig::validate() const {
  if (to < 1 || to > 255) throw SimError(Err::BadConfig, "to must be in [1, 255]");
  if (passes < 1) throw SimError(Err::BadConfig, "passes must be >= 1");
}

void VictimSpec::validate() const {
  if (secret.empty()) throw SimError(Err::BadConfig, "victim secret must be non-empty");
  if (uncached_readability < 0.0 || uncached_readability > 1.0)
    throw SimError(Err::BadConfig, "uncached_readability must be in [0,1]");
}

InstalledVictim install_victim(const VictimSpec& victim, const MicroConfig& micro) {
  victim.validate();
  InstalledVictim iv;
  std::vector<uint8_t> bytes(victim.secret.begin(), victim.secret.end());
  iv.mem.install(kSecretAddr, bytes, Privilege::Kernel);
  iv.secret_addr = kSecretAddr;
  victim_step(victim, micro, iv);
  return iv;
}

void victim_step(const VictimSpec& victim, const MicroConfig& micro, InstalledVictim& installed) {
  installed.effective_readability =
      victim.keep_cached ? micro.secret_transiently_readable : victim.uncached_readability;
}

Program build_attack_program(uint32_t test_num, uint64_t offset, uint64_t secret_addr) {
  // Built directly (it sits on the hot path); the test suite pins this
  // against the equivalent textual listing.
  Program p;
  auto add = [&p](Opcode op, Operand a = Operand::none(), Operand b = Operand::none()) {
    Instruction ins;
    ins.op = op;
    ins.a = a;
    ins.b = b;
    p.code.push_back(ins);
  };
  auto add_label = [&p](const char* name) {
    Instruction ins;
    ins.op = Opcode::Label;
    ins.label = name;
    p.labels.emplace(name, static_cast<uint32_t>(p.code.size()));
    p.code.push_back(ins);
  };
  auto add_jump = [&p](Opcode op, const char* target) {
    Instruction ins;
    ins.op = op;
    ins.label = target;
    p.code.push_back(ins);
  };

  add(Opcode::Rdtsc, Operand::make_reg(kStartReg));
  add(Opcode::Mov, Operand::make_reg(kAddrReg), Operand::make_imm(secret_addr + offset));
  add(Opcode::Mov, Operand::make_reg(kTestReg), Operand::make_imm(test_num));
  add_jump(Opcode::Xbegin, "fallback");
  add(Opcode::Sub, Operand::make_reg(kTestReg), Operand::make_mem(kAddrReg));
  add(Opcode::Xend);
  add_label("fallback");
  add_jump(Opcode::Jz, "equal");
  add_jump(Opcode::Jmp, "notequal");
  add_label("equal");
  add(Opcode::Nop);
  add_label("notequal");
  add(Opcode::Nop);
  add(Opcode::Rdtsc, Operand::make_reg(kEndReg));
  add(Opcode::Halt);

  for (auto& ins : p.code)
    if (is_jump(ins.op) || ins.op == Opcode::Xbegin) ins.target = static_cast<int32_t>(p.labels.at(ins.label));
  return p;
}

namespace {

PassRecord run_pass_core(const MicroConfig& micro, const AttackConfig& attack, const InstalledVictim& iv,
                         const std::vector<Program>& programs, uint64_t pass_seed) {
  MicroConfig eff = micro;
  eff.rng_seed = pass_seed;
  eff.secret_transiently_readable = iv.effective_readability;
  Simulator sim(eff);

  ArchState init;
  init.mem = iv.mem;

  PassRecord rec;
  rec.timings.reserve(attack.to + 1);
  for (uint32_t t = 0; t <= attack.to; ++t) {
    RunResult r = sim.run(init, programs[t]);
    uint64_t spend = r.final_state.regs[kEndReg] - r.final_state.regs[kStartReg];
    rec.timings.push_back({t, spend});
    if (rec.max_time < spend) { // strict: the first maximum wins
      rec.max_time = spend;
      rec.argmax = t;
    }
  }
  return rec;
}

void check_offset(const VictimSpec& victim, uint64_t offset) {
  if (offset >= victim.secret.size())
    throw SimError(Err::BadConfig, "offset " + std::to_string(offset) + " outside victim secret");
}

} // namespace

AttackPrograms prepare_attack_programs(const AttackConfig& attack, uint64_t offset,
                                       const ProgramTransform& transform) {
  attack.validate();
  AttackPrograms prepared;
  prepared.offset = offset;
  prepared.programs.reserve(attack.to + 1);
  for (uint32_t t = 0; t <= attack.to; ++t) {
    Program p = build_attack_program(t, offset);
    prepared.programs.push_back(transform ? transform(p) : std::move(p));
  }
  return prepared;
}

PassRecord run_pass(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                    uint64_t offset, const ProgramTransform& transform) {
  attack.validate();
  check_offset(victim, offset);
  InstalledVictim iv = install_victim(victim, micro);
  victim_step(victim, micro, iv);
  AttackPrograms prepared = prepare_attack_programs(attack, offset, transform);
  return run_pass_core(micro, attack, iv, prepared.programs, micro.rng_seed);
}

LeakByteResult leak_byte(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                         uint64_t offset, const ProgramTransform& transform) {
  return leak_byte_prepared(micro, attack, victim, prepare_attack_programs(attack, offset, transform));
}

LeakByteResult leak_byte_prepared(const MicroConfig& micro, const AttackConfig& attack,
                                  const VictimSpec& victim, const AttackPrograms& prepared) {
  attack.validate();
  check_offset(victim, prepared.offset);
  InstalledVictim iv = install_victim(victim, micro);
  uint64_t offset_seed = derive_seed(micro.rng_seed, prepared.offset);

  LeakByteResult out;
  out.records.reserve(attack.passes);
  for (uint32_t p = 0; p < attack.passes; ++p) {
    victim_step(victim, micro, iv);
    PassRecord rec = run_pass_core(micro, attack, iv, prepared.programs, derive_seed(offset_seed, p));
    out.histogram[rec.argmax]++;
    out.records.push_back(std::move(rec));
  }
  out.decoded = attack.decode_rule == DecodeRule::ArgmaxMode ? decode_argmax_mode(out.histogram)
                                                             : decode_mean_max(out.records);
  return out;
}

LeakReport leak_string(const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim,
                       const ProgramTransform& transform, const OffsetRecordsSink& sink) {
  attack.validate();
  victim.validate();
  LeakReport report;
  size_t matches = 0;
  for (uint64_t offset : attack.offset_range) {
    check_offset(victim, offset);
    LeakByteResult lb = leak_byte(micro, attack, victim, offset, transform);
    OffsetLeak ol;
    ol.offset = offset;
    ol.decoded = lb.decoded;
    ol.truth = static_cast<uint8_t>(victim.secret[offset]);
    ol.histogram = lb.histogram;
    ol.passes = attack.passes;
    if (ol.decoded == ol.truth) ++matches;
    if (sink) sink(offset, lb.records);
    report.per_offset.push_back(std::move(ol));
  }
  report.success_rate =
      report.per_offset.empty() ? 1.0 : static_cast<double>(matches) / report.per_offset.size();
  return report;
}

uint8_t decode_argmax_mode(const std::array<uint64_t, 256>& histogram) {
  size_t best = 0;
  for (size_t i = 1; i < histogram.size(); ++i)
    if (histogram[i] > histogram[best]) best = i;
  return static_cast<uint8_t>(best);
}

uint8_t decode_mean_max(const std::vector<PassRecord>& records) {
  if (records.empty()) throw SimError(Err::BadConfig, "no records to decode");
  std::array<double, 256> sum{};
  std::array<uint64_t, 256> n{};
  for (const auto& rec : records)
    for (const auto& t : rec.timings) {
      sum[t.test_num] += static_cast<double>(t.spend_time);
      n[t.test_num]++;
    }
  size_t best = 0;
  double best_mean = -1.0;
  for (size_t i = 0; i < 256; ++i) {
    if (n[i] == 0) continue;
    double mean = sum[i] / static_cast<double>(n[i]);
    if (mean > best_mean) {
      best_mean = mean;
      best = i;
    }
  }
  return static_cast<uint8_t>(best);
}

} // namespace flagstall
