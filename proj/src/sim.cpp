#include "flagstall/sim.hpp"

#include <cstdio>

namespace flagstall {

void MicroConfig::validate() const {
  if (secret_transiently_readable < 0.0 || secret_transiently_readable > 1.0)
    throw SimError(Err::BadConfig, "secret_transiently_readable must be in [0,1]");
  if (noise.outlier_prob < 0.0 || noise.outlier_prob > 1.0)
    throw SimError(Err::BadConfig, "noise.outlier_prob must be in [0,1]");
  if (instruction_budget == 0) throw SimError(Err::BadConfig, "instruction_budget must be positive");
}

uint8_t flags_diff_mask(const Flags& a, const Flags& b) {
  uint8_t m = 0;
  if (a.zf != b.zf) m |= kZF;
  if (a.cf != b.cf) m |= kCF;
  if (a.sf != b.sf) m |= kSF;
  if (a.of != b.of) m |= kOF;
  if (a.pf != b.pf) m |= kPF;
  if (a.af != b.af) m |= kAF;
  return m;
}

uint64_t derive_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t jcc_cost(const MicroConfig& cfg, const PipelineState& pipe, Opcode op) {
  if (!is_jump(op)) throw SimError(Err::NonJumpOpcode, std::string(opcode_name(op)) + " is not a jump");
  uint64_t cost = cfg.base_latency.jump;
  if (is_flag_dependent_jump(op) && pipe.pending_revert) {
    const auto& pr = *pipe.pending_revert;
    // JZ/JE read ZF; JMP reads nothing and never stalls.
    if ((pr.flag_mask & kZF) && pipe.cycle < pr.expires_at) cost += cfg.jcc_stall_penalty;
  }
  return cost;
}

Simulator::Simulator(MicroConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.rng_seed) { cfg_.validate(); }

uint64_t Simulator::noise_draw() {
  if (cfg_.noise.kind == NoiseModel::Kind::None) return 0;
  uint64_t jit = rng_.uniform(cfg_.noise.per_sample_jitter);
  if (rng_.bernoulli(cfg_.noise.outlier_prob)) jit += cfg_.noise.outlier_magnitude;
  return jit;
}

uint64_t Simulator::rdtsc(PipelineState& pipe) {
  pipe.cycle += noise_draw();
  return pipe.cycle;
}

namespace {

uint64_t base_cost(const BaseLatency& lat, const Instruction& ins) {
  switch (ins.op) {
    case Opcode::Jz:
    case Opcode::Je:
    case Opcode::Jmp: return lat.jump;
    case Opcode::Mov:
      return (ins.a.kind == OperandKind::Mem || ins.b.kind == OperandKind::Mem) ? lat.mov_load : lat.alu;
    case Opcode::Sub:
    case Opcode::Cmp:
    case Opcode::Cmpxchg:
    case Opcode::Xbegin:
    case Opcode::Xend: return lat.alu;
    case Opcode::Nop: return lat.nop;
    case Opcode::Lahf:
    case Opcode::Sahf:
    case Opcode::Pushf:
    case Opcode::Popf: return lat.flag_image;
    case Opcode::Rdtsc: return lat.rdtsc;
    case Opcode::Halt:
    case Opcode::Label: return 0;
  }
  return 0;
}

bool touches_kernel(const ArchState& st, const Instruction& ins) {
  auto addr = memory_operand_address(st, ins);
  return addr && st.mem.page_privilege(*addr) == Privilege::Kernel;
}

} // namespace

// Shadow execution of the transient window: the faulting access executes
// with a forwarded value, then up to transient_window more instructions run
// on a copy of the state. Nothing reaches the architectural state; the only
// residue is the mask of flags that ever differed from the checkpoint.
uint8_t Simulator::transient_execute(const ArchState& at_fault, const Program& prog,
                                     const Flags& checkpoint_flags, uint64_t tsc,
                                     std::vector<TraceEntry>* trace, uint32_t& step) {
  ArchState shadow = at_fault;
  uint8_t flipped = 0;
  uint32_t executed = 0;
  bool fault_instruction = true;
  while (shadow.pc < prog.code.size()) {
    const Instruction& ins = prog.code[shadow.pc];
    if (ins.op == Opcode::Halt) break;
    if (!fault_instruction && executed >= cfg_.transient_window) break;
    uint32_t at = shadow.pc;
    try {
      if (touches_kernel(shadow, ins)) {
        uint64_t addr = *memory_operand_address(shadow, ins);
        bool forward = rng_.bernoulli(cfg_.secret_transiently_readable);
        uint8_t value = forward ? shadow.mem.read_raw(addr) : 0;
        detail::execute_in_place_forwarded(shadow, ins, tsc, value);
      } else {
        detail::execute_in_place(shadow, ins, tsc);
      }
    } catch (const SimError&) {
      break; // shadow faults end the window early
    }
    flipped |= flags_diff_mask(shadow.flags, checkpoint_flags);
    if (trace) trace->push_back({step++, at, opcode_name(ins.op), 0, true, false});
    if (fault_instruction)
      fault_instruction = false;
    else
      ++executed;
  }
  return flipped;
}

RunResult Simulator::run(ArchState st, const Program& prog, bool record_trace) {
  RunResult out;
  PipelineState pipe;
  uint32_t fallback = 0;
  uint64_t executed = 0;
  uint32_t step = 0;
  auto note = [&](uint32_t pc, const char* op, uint64_t cost, bool stalled) {
    if (record_trace) out.trace.push_back({step++, pc, op, cost, false, stalled});
  };

  while (st.pc < prog.code.size()) {
    const Instruction& ins = prog.code[st.pc];
    if (ins.op == Opcode::Halt) {
      note(st.pc, opcode_name(ins.op), 0, false);
      break;
    }
    if (++executed > cfg_.instruction_budget)
      throw SimError(Err::Runaway, "instruction budget exceeded");

    if (ins.op == Opcode::Xbegin) {
      if (pipe.in_transaction) throw SimError(Err::NestedTransaction, "nested XBEGIN");
      if (ins.target < 0) throw SimError(Err::UnknownLabel, "XBEGIN without resolved fallback");
      pipe.in_transaction = true;
      pipe.checkpoint = st;
      fallback = static_cast<uint32_t>(ins.target);
      uint64_t cost = cfg_.base_latency.alu;
      pipe.cycle += cost;
      note(st.pc, opcode_name(ins.op), cost, false);
      ++st.pc;
      continue;
    }
    if (ins.op == Opcode::Xend) {
      if (!pipe.in_transaction) throw SimError(Err::XendOutsideTransaction, "XEND outside a transaction");
      pipe.in_transaction = false;
      pipe.checkpoint.reset();
      uint64_t cost = cfg_.base_latency.alu;
      pipe.cycle += cost;
      note(st.pc, opcode_name(ins.op), cost, false);
      ++st.pc;
      continue;
    }
    if (ins.op == Opcode::Rdtsc) {
      uint64_t before = pipe.cycle;
      uint64_t value = rdtsc(pipe);
      detail::execute_in_place(st, ins, value);
      pipe.cycle += cfg_.base_latency.rdtsc;
      note(st.pc - 1, opcode_name(ins.op), pipe.cycle - before, false);
      continue;
    }

    if (touches_kernel(st, ins)) {
      if (!pipe.in_transaction)
        throw SimError(Err::PrivilegedAccessUntransacted, "privileged access outside a transaction");
      uint32_t fault_pc = st.pc;
      uint8_t flipped = transient_execute(st, prog, pipe.checkpoint->flags, pipe.cycle,
                                          record_trace ? &out.trace : nullptr, step);
      // Squash: restore the checkpoint, resume at the fallback point. The
      // abort bookkeeping costs what a committing XEND would, so a transient
      // body that never flips a flag leaves no trace in time.
      uint64_t cost = cfg_.base_latency.alu;
      if (cfg_.suppression == Suppression::Interrupt) cost += cfg_.interrupt_abort_overhead;
      pipe.cycle += cost;
      if (flipped) pipe.pending_revert = PendingRevert{flipped, pipe.cycle + cfg_.revert_stall_window};
      st = std::move(*pipe.checkpoint);
      pipe.checkpoint.reset();
      pipe.in_transaction = false;
      st.pc = fallback;
      out.aborted = true;
      if (record_trace) out.trace.push_back({step++, fault_pc, "SQUASH", cost, false, false});
      continue;
    }

    uint64_t cost = is_jump(ins.op) ? flagstall::jcc_cost(cfg_, pipe, ins.op) : base_cost(cfg_.base_latency, ins);
    bool stalled = is_jump(ins.op) && cost > cfg_.base_latency.jump;
    uint32_t at = st.pc;
    detail::execute_in_place(st, ins, pipe.cycle);
    // Any architectural flag write redefines the flags: the conjectured
    // revert buffer has nothing left to restore.
    if (writes_flags(ins.op)) pipe.pending_revert.reset();
    if (pipe.pending_revert && pipe.cycle >= pipe.pending_revert->expires_at) pipe.pending_revert.reset();
    pipe.cycle += cost;
    note(at, opcode_name(ins.op), cost, stalled);
  }

  out.cycles = pipe.cycle;
  out.final_state = std::move(st);
  return out;
}

RunResult run(const MicroConfig& cfg, ArchState state, const Program& prog, bool record_trace) {
  Simulator sim(cfg);
  return sim.run(std::move(state), prog, record_trace);
}

std::string trace_csv(const RunResult& result) {
  std::string out = "step,pc,opcode,cycle_cost,transient,stalled\n";
  char buf[128];
  for (const auto& t : result.trace) {
    std::snprintf(buf, sizeof(buf), "%u,%u,%s,%llu,%d,%d\n", t.step, t.pc, t.op,
                  static_cast<unsigned long long>(t.cycle_cost), t.transient ? 1 : 0, t.stalled ? 1 : 0);
    out += buf;
  }
  return out;
}

} // namespace flagstall
