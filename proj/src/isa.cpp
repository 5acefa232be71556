#include "flagstall/isa.hpp"

namespace flagstall {

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Mov: return "MOV";
    case Opcode::Sub: return "SUB";
    case Opcode::Cmp: return "CMP";
    case Opcode::Cmpxchg: return "CMPXCHG";
    case Opcode::Jz: return "JZ";
    case Opcode::Je: return "JE";
    case Opcode::Jmp: return "JMP";
    case Opcode::Nop: return "NOP";
    case Opcode::Lahf: return "LAHF";
    case Opcode::Sahf: return "SAHF";
    case Opcode::Pushf: return "PUSHF";
    case Opcode::Popf: return "POPF";
    case Opcode::Rdtsc: return "RDTSC";
    case Opcode::Xbegin: return "XBEGIN";
    case Opcode::Xend: return "XEND";
    case Opcode::Halt: return "HALT";
    case Opcode::Label: return "LABEL";
  }
  return "?";
}

const std::shared_ptr<const MemorySpace::Image>& MemorySpace::shared_empty() {
  static const std::shared_ptr<const Image> empty = std::make_shared<Image>();
  return empty;
}

void MemorySpace::install(uint64_t addr, const std::vector<uint8_t>& bytes, Privilege priv) {
  Image& img = mutate();
  uint64_t first_page = addr / kPageSize;
  uint64_t last_page = bytes.empty() ? first_page : (addr + bytes.size() - 1) / kPageSize;
  for (uint64_t p = first_page; p <= last_page; ++p) {
    auto it = img.pages.find(p);
    if (it != img.pages.end() && it->second != priv)
      throw SimError(Err::BadProgram, "page privilege tags are immutable once installed");
    img.pages[p] = priv;
  }
  for (size_t i = 0; i < bytes.size(); ++i) img.cells[addr + i] = bytes[i];
}

Privilege MemorySpace::page_privilege(uint64_t addr) const {
  auto it = img_->pages.find(addr / kPageSize);
  return it == img_->pages.end() ? Privilege::User : it->second;
}

uint8_t MemorySpace::read_checked(uint64_t addr) const {
  auto it = img_->cells.find(addr);
  if (it == img_->cells.end())
    throw SimError(Err::UnmappedAddress, "read of unmapped address");
  if (page_privilege(addr) == Privilege::Kernel)
    throw SimError(Err::PrivilegedAddress, "read of kernel address");
  return it->second;
}

void MemorySpace::write_checked(uint64_t addr, uint8_t value) {
  if (!mapped(addr)) throw SimError(Err::UnmappedAddress, "write to unmapped address");
  if (page_privilege(addr) == Privilege::Kernel)
    throw SimError(Err::PrivilegedAddress, "write to kernel address");
  mutate().cells[addr] = value;
}

uint8_t MemorySpace::read_raw(uint64_t addr) const {
  auto it = img_->cells.find(addr);
  if (it == img_->cells.end())
    throw SimError(Err::UnmappedAddress, "read of unmapped address");
  return it->second;
}

void MemorySpace::write_raw(uint64_t addr, uint8_t value) {
  if (!mapped(addr)) throw SimError(Err::UnmappedAddress, "write to unmapped address");
  mutate().cells[addr] = value;
}

MemorySpace::Image& MemorySpace::mutate() {
  if (img_.use_count() != 1) img_ = std::make_shared<Image>(*img_);
  return const_cast<Image&>(*img_);
}

void Program::insert(uint32_t pos, const std::vector<Instruction>& instrs) {
  if (pos > code.size()) throw SimError(Err::BadProgram, "insert position out of range");
  auto n = static_cast<int32_t>(instrs.size());
  code.insert(code.begin() + pos, instrs.begin(), instrs.end());
  for (size_t i = 0; i < code.size(); ++i) {
    if (i >= pos && i < pos + instrs.size()) continue; // inserted targets are already final
    if (code[i].target >= static_cast<int32_t>(pos)) code[i].target += n;
  }
  for (auto& [name, idx] : labels)
    if (idx >= pos) idx += static_cast<uint32_t>(n);
}

std::optional<uint64_t> memory_operand_address(const ArchState& state, const Instruction& ins) {
  for (const Operand* op : {&ins.a, &ins.b}) {
    if (op->kind == OperandKind::Mem)
      return state.regs[op->reg] + static_cast<uint64_t>(op->disp);
  }
  return std::nullopt;
}

namespace {

// Operand value. Memory operands are byte loads, zero-extended; a non-null
// `forwarded` substitutes the value of privileged reads.
uint64_t read_operand(const ArchState& st, const Operand& op, const uint8_t* forwarded) {
  switch (op.kind) {
    case OperandKind::Reg: return st.regs[op.reg];
    case OperandKind::Imm: return op.imm;
    case OperandKind::Mem: {
      uint64_t addr = st.regs[op.reg] + static_cast<uint64_t>(op.disp);
      if (forwarded && st.mem.page_privilege(addr) == Privilege::Kernel) return *forwarded;
      return st.mem.read_checked(addr);
    }
    case OperandKind::None: break;
  }
  throw SimError(Err::BadProgram, "missing operand");
}

void write_operand(ArchState& st, const Operand& op, uint64_t value, bool shadow) {
  switch (op.kind) {
    case OperandKind::Reg:
      st.regs[op.reg] = value;
      return;
    case OperandKind::Mem: {
      uint64_t addr = st.regs[op.reg] + static_cast<uint64_t>(op.disp);
      if (shadow)
        st.mem.write_raw(addr, static_cast<uint8_t>(value));
      else
        st.mem.write_checked(addr, static_cast<uint8_t>(value));
      return;
    }
    default: throw SimError(Err::BadProgram, "operand is not writable");
  }
}

// SUB/CMP/CMPXCHG zero every flag except ZF; only ZF has full semantics.
void set_compare_flags(Flags& f, bool zero) {
  f = Flags{};
  f.zf = zero ? 1 : 0;
}

uint32_t jump_target(const Instruction& ins) {
  if (ins.target < 0) throw SimError(Err::UnknownLabel, "unresolved jump target '" + ins.label + "'");
  return static_cast<uint32_t>(ins.target);
}

void step_in_place(ArchState& st, const Instruction& ins, uint64_t tsc, const uint8_t* forwarded) {
  uint32_t next = st.pc + 1;
  switch (ins.op) {
    case Opcode::Mov:
      write_operand(st, ins.a, read_operand(st, ins.b, forwarded), forwarded != nullptr);
      break;
    case Opcode::Sub: {
      if (ins.a.kind != OperandKind::Reg) throw SimError(Err::BadProgram, "SUB destination must be a register");
      uint64_t v = st.regs[ins.a.reg] - read_operand(st, ins.b, forwarded);
      st.regs[ins.a.reg] = v;
      set_compare_flags(st.flags, v == 0);
      break;
    }
    case Opcode::Cmp: {
      uint64_t v = read_operand(st, ins.a, forwarded) - read_operand(st, ins.b, forwarded);
      set_compare_flags(st.flags, v == 0);
      break;
    }
    case Opcode::Cmpxchg: {
      // CMPXCHG [mem], reg: byte-compare the accumulator (r0) with memory;
      // equal stores the source byte, unequal loads memory into r0.
      if (ins.a.kind != OperandKind::Mem || ins.b.kind != OperandKind::Reg)
        throw SimError(Err::BadProgram, "CMPXCHG needs a memory destination and register source");
      uint8_t m = static_cast<uint8_t>(read_operand(st, ins.a, forwarded));
      uint8_t acc = static_cast<uint8_t>(st.regs[0]);
      bool equal = acc == m;
      set_compare_flags(st.flags, equal);
      if (equal)
        write_operand(st, ins.a, st.regs[ins.b.reg], forwarded != nullptr);
      else
        st.regs[0] = m; // byte load, zero-extended
      break;
    }
    case Opcode::Jz:
    case Opcode::Je:
      if (st.flags.zf) next = jump_target(ins);
      break;
    case Opcode::Jmp:
      next = jump_target(ins);
      break;
    case Opcode::Nop:
    case Opcode::Label:
    case Opcode::Xbegin:
    case Opcode::Xend:
    case Opcode::Halt:
      break;
    case Opcode::Lahf:
      st.regs[0] = (st.regs[0] & ~0xff00ull) | (static_cast<uint64_t>(st.flags.low_byte()) << 8);
      break;
    case Opcode::Sahf:
      st.flags.set_low_byte(static_cast<uint8_t>(st.regs[0] >> 8));
      break;
    case Opcode::Pushf:
      st.stack.push_back(st.flags.image16());
      break;
    case Opcode::Popf:
      if (st.stack.empty()) throw SimError(Err::StackUnderflow, "POPF on empty stack");
      st.flags = Flags::from_image16(static_cast<uint16_t>(st.stack.back()));
      st.stack.pop_back();
      break;
    case Opcode::Rdtsc:
      if (ins.a.kind != OperandKind::Reg) throw SimError(Err::BadProgram, "RDTSC needs a destination register");
      st.regs[ins.a.reg] = tsc;
      break;
  }
  st.pc = next;
}

} // namespace

namespace detail {

void execute_in_place(ArchState& state, const Instruction& ins, uint64_t tsc) {
  step_in_place(state, ins, tsc, nullptr);
}

void execute_in_place_forwarded(ArchState& state, const Instruction& ins, uint64_t tsc, uint8_t forwarded) {
  step_in_place(state, ins, tsc, &forwarded);
}

} // namespace detail

ArchState execute_architectural(ArchState state, const Instruction& ins, uint64_t tsc) {
  step_in_place(state, ins, tsc, nullptr);
  return state;
}

ArchState execute_with_forward(ArchState state, const Instruction& ins, uint64_t tsc, uint8_t forwarded) {
  step_in_place(state, ins, tsc, &forwarded);
  return state;
}

bool jcc_taken(const Flags& flags, Opcode op) {
  switch (op) {
    case Opcode::Jz:
    case Opcode::Je: return flags.zf == 1;
    case Opcode::Jmp: return true;
    default: throw SimError(Err::NonJumpOpcode, std::string(opcode_name(op)) + " is not a jump");
  }
}

std::optional<uint32_t> find_jcc_after_transaction(const Program& prog) {
  size_t i = 0;
  while (i < prog.code.size() && prog.code[i].op != Opcode::Xend) ++i;
  for (; i < prog.code.size(); ++i)
    if (is_flag_dependent_jump(prog.code[i].op)) return static_cast<uint32_t>(i);
  return std::nullopt;
}

} // namespace flagstall
