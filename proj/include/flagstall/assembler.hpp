#pragma once

// Textual assembly for the mini ISA. One instruction per statement;
// statements separated by ';' or newline; 'name:' prefixes emit LABEL
// slots; '#' starts a comment; '.rept N' / '.endr' repeats a block.
//
//   fallback:
//     JZ equal
//     .rept 6
//     NOP
//     .endr
//
// Registers are r0..r15 (r0 doubles as the CMPXCHG accumulator and LAHF/SAHF
// AH home). Memory operands are [rN], [rN+imm], [rN-imm]. Immediates are
// decimal or 0x hex.

#include <string>

#include "flagstall/isa.hpp"

namespace flagstall {

// Throws SimError(ParseError/DuplicateLabel/UndefinedLabel); parse errors
// carry the 1-based source line number.
Program assemble(const std::string& source);

// Textual form that assembles back to an identical instruction sequence.
std::string disassemble(const Program& prog);

} // namespace flagstall
