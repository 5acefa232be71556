#pragma once

// Minimal x86-flavored instruction set: registers, EFLAGS bits, privileged
// byte memory. Pure value-semantics state transitions; the cycle-level
// behavior (transactions, transient windows, stalls) lives in sim.hpp.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace flagstall {

enum class Err {
  UnmappedAddress,
  PrivilegedAddress,
  PrivilegedAccessUntransacted,
  UnknownLabel,
  StackUnderflow,
  NonJumpOpcode,
  ParseError,
  DuplicateLabel,
  UndefinedLabel,
  Runaway,
  NestedTransaction,
  XendOutsideTransaction,
  BadConfig,
  BadProgram,
  IoError,
};

class SimError : public std::runtime_error {
 public:
  SimError(Err code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

// Status flags, each 0 or 1. Only ZF carries attack semantics; the rest
// exist so the flag-image instructions (LAHF/SAHF/PUSHF/POPF) are faithful.
struct Flags {
  uint8_t zf = 0;
  uint8_t cf = 0;
  uint8_t sf = 0;
  uint8_t of = 0;
  uint8_t pf = 0;
  uint8_t af = 0;

  bool operator==(const Flags&) const = default;

  // Low FLAGS byte, x86 layout: SF ZF 0 AF 0 PF 1 CF.
  uint8_t low_byte() const {
    return static_cast<uint8_t>((sf << 7) | (zf << 6) | (af << 4) | (pf << 2) | 0x02 | cf);
  }
  void set_low_byte(uint8_t b) {
    sf = (b >> 7) & 1;
    zf = (b >> 6) & 1;
    af = (b >> 4) & 1;
    pf = (b >> 2) & 1;
    cf = b & 1;
  }
  // 16-bit FLAGS image (adds OF at bit 11), used by PUSHF/POPF.
  uint16_t image16() const { return static_cast<uint16_t>(low_byte() | (of << 11)); }
  static Flags from_image16(uint16_t img) {
    Flags f;
    f.set_low_byte(static_cast<uint8_t>(img & 0xff));
    f.of = (img >> 11) & 1;
    return f;
  }
};

enum class Opcode : uint8_t {
  Mov,
  Sub,
  Cmp,
  Cmpxchg,
  Jz,
  Je,
  Jmp,
  Nop,
  Lahf,
  Sahf,
  Pushf,
  Popf,
  Rdtsc,
  Xbegin,
  Xend,
  Halt,
  Label,
};

const char* opcode_name(Opcode op);

inline bool is_jump(Opcode op) { return op == Opcode::Jz || op == Opcode::Je || op == Opcode::Jmp; }
inline bool is_flag_dependent_jump(Opcode op) { return op == Opcode::Jz || op == Opcode::Je; }
// Instructions whose architectural execution writes the flags register.
inline bool writes_flags(Opcode op) {
  return op == Opcode::Sub || op == Opcode::Cmp || op == Opcode::Cmpxchg || op == Opcode::Sahf || op == Opcode::Popf;
}

enum class OperandKind : uint8_t { None, Reg, Imm, Mem };

inline constexpr int kNumRegs = 16;

struct Operand {
  OperandKind kind = OperandKind::None;
  uint8_t reg = 0;    // Reg: register id; Mem: base register id
  uint64_t imm = 0;   // Imm
  int64_t disp = 0;   // Mem displacement

  bool operator==(const Operand&) const = default;

  static Operand none() { return {}; }
  static Operand make_reg(uint8_t r) { return {OperandKind::Reg, r, 0, 0}; }
  static Operand make_imm(uint64_t v) { return {OperandKind::Imm, 0, v, 0}; }
  static Operand make_mem(uint8_t base, int64_t disp = 0) { return {OperandKind::Mem, base, 0, disp}; }
};

struct Instruction {
  Opcode op = Opcode::Nop;
  Operand a{};
  Operand b{};
  std::string label;   // jump/XBEGIN target symbol, or the LABEL's own name
  int32_t target = -1; // resolved target index, filled by the assembler

  bool operator==(const Instruction&) const = default;
};

enum class Privilege : uint8_t { User, Kernel };

inline constexpr uint64_t kPageSize = 4096;

// Byte-granular sparse memory with per-page privilege tags. Tags are fixed
// once a page is installed. Copies share storage; writes clone it, so
// checkpoint/rollback of a whole ArchState stays cheap.
class MemorySpace {
 public:
  MemorySpace() : img_(shared_empty()) {}

  // Host-level installation (no privilege check). Re-tagging a page with a
  // different privilege is an error.
  void install(uint64_t addr, const std::vector<uint8_t>& bytes, Privilege priv);

  bool mapped(uint64_t addr) const { return img_->cells.count(addr) != 0; }
  // Privilege of the page containing addr; User for never-installed pages.
  Privilege page_privilege(uint64_t addr) const;

  // Checked access used by architectural execution: unmapped and privileged
  // addresses raise distinct errors (unmapped checked first).
  uint8_t read_checked(uint64_t addr) const;
  void write_checked(uint64_t addr, uint8_t value);

  // Unchecked read of a mapped byte (the transient forwarding path).
  uint8_t read_raw(uint64_t addr) const;
  // Shadow-side write: mapped check only, privilege ignored.
  void write_raw(uint64_t addr, uint8_t value);

  size_t byte_count() const { return img_->cells.size(); }
  bool operator==(const MemorySpace& o) const {
    return img_ == o.img_ || (img_->cells == o.img_->cells && img_->pages == o.img_->pages);
  }

 private:
  struct Image {
    std::map<uint64_t, uint8_t> cells;
    std::map<uint64_t, Privilege> pages; // keyed by addr / kPageSize
  };
  std::shared_ptr<const Image> img_;

  static const std::shared_ptr<const Image>& shared_empty();
  Image& mutate();
};

// Architectural register/flag/memory state. This is exactly what a
// transaction checkpoint captures and a squash restores.
struct ArchState {
  std::array<uint64_t, kNumRegs> regs{};
  Flags flags{};
  uint32_t pc = 0;
  std::vector<uint64_t> stack; // PUSHF/POPF images
  MemorySpace mem;

  bool operator==(const ArchState&) const = default;
};

struct Program {
  std::vector<Instruction> code;
  std::map<std::string, uint32_t> labels; // symbol -> LABEL slot index

  size_t size() const { return code.size(); }
  bool operator==(const Program&) const = default;

  // Insert instructions at pos, shifting resolved targets and label indices.
  void insert(uint32_t pos, const std::vector<Instruction>& instrs);
};

// Resolved memory-operand address, if the instruction has one.
std::optional<uint64_t> memory_operand_address(const ArchState& state, const Instruction& ins);

// One architectural step. RDTSC writes `tsc` to its destination register.
// XBEGIN/XEND/HALT advance pc only; their transactional/halting semantics
// belong to the cycle executor. Throws SimError on unmapped/privileged
// access, unresolved jump targets, and POPF on an empty stack.
ArchState execute_architectural(ArchState state, const Instruction& ins, uint64_t tsc = 0);

// Same step, but a privileged memory access reads `forwarded` instead of
// faulting (stores go to the shadow copy). Used inside transient windows.
ArchState execute_with_forward(ArchState state, const Instruction& ins, uint64_t tsc, uint8_t forwarded);

namespace detail {
// In-place variants for the cycle executor's hot loop.
void execute_in_place(ArchState& state, const Instruction& ins, uint64_t tsc);
void execute_in_place_forwarded(ArchState& state, const Instruction& ins, uint64_t tsc, uint8_t forwarded);
} // namespace detail

// Whether a conditional/unconditional jump is taken. Never mutates state.
bool jcc_taken(const Flags& flags, Opcode op);

// Index of the first flag-dependent jump after the first XEND (the Jcc a
// mitigation gadget protects). nullopt if the program has no such jump.
std::optional<uint32_t> find_jcc_after_transaction(const Program& prog);

} // namespace flagstall
