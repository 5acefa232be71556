#include <doctest.h>

#include "flagstall/assembler.hpp"
#include "flagstall/sim.hpp"

using namespace flagstall;

namespace {

size_t count_op(const Program& p, Opcode op) {
  size_t n = 0;
  for (const auto& i : p.code) n += i.op == op;
  return n;
}

} // namespace

TEST_CASE("semicolon-separated listing with labels") {
  Program p = assemble("JZ equal; JMP notequal; equal: NOP; notequal: NOP");
  CHECK(p.code.size() == 6); // 4 instructions + 2 label slots
  CHECK(count_op(p, Opcode::Label) == 2);
  CHECK(p.labels.size() == 2);
  CHECK(p.code[0].op == Opcode::Jz);
  CHECK(p.code[0].target == static_cast<int32_t>(p.labels.at("equal")));
  CHECK(p.code[1].target == static_cast<int32_t>(p.labels.at("notequal")));
}

TEST_CASE("empty source assembles to an empty program") {
  CHECK(assemble("").code.empty());
  CHECK(assemble("  \n # only a comment\n").code.empty());
}

TEST_CASE(".rept expansion") {
  SUBCASE("inline form") {
    Program p = assemble(".rept 6 NOP .endr");
    CHECK(p.code.size() == 6);
    CHECK(count_op(p, Opcode::Nop) == 6);
  }
  SUBCASE("block form") {
    Program p = assemble(".rept 3\nNOP\nMOV r1, 1\n.endr\n");
    CHECK(p.code.size() == 6);
    CHECK(count_op(p, Opcode::Nop) == 3);
    CHECK(count_op(p, Opcode::Mov) == 3);
  }
  SUBCASE("nested blocks") {
    Program p = assemble(".rept 2\n.rept 3\nNOP\n.endr\nHALT\n.endr\n");
    CHECK(count_op(p, Opcode::Nop) == 6);
    CHECK(count_op(p, Opcode::Halt) == 2);
  }
  SUBCASE("unterminated block") {
    CHECK_THROWS_AS(assemble(".rept 2\nNOP\n"), SimError);
  }
  SUBCASE("stray .endr") {
    CHECK_THROWS_AS(assemble("NOP\n.endr\n"), SimError);
  }
}

TEST_CASE("parse errors carry line numbers") {
  try {
    assemble("NOP\nBOGUS r1\nNOP\n");
    FAIL("expected parse error");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::ParseError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("duplicate and undefined labels") {
  try {
    assemble("x: NOP\nx: NOP\n");
    FAIL("expected duplicate label");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::DuplicateLabel);
  }
  try {
    assemble("JZ nowhere\n");
    FAIL("expected undefined label");
  } catch (const SimError& e) {
    CHECK(e.code() == Err::UndefinedLabel);
  }
}

TEST_CASE("operand forms") {
  Program p = assemble("MOV r1, 0xffff800000000000\nMOV r2, [r1+8]\nMOV r3, [r1-4]\nSUB r2, -1\nRDTSC r15\n");
  CHECK(p.code[0].b.imm == 0xffff800000000000ull);
  CHECK(p.code[1].b.kind == OperandKind::Mem);
  CHECK(p.code[1].b.disp == 8);
  CHECK(p.code[2].b.disp == -4);
  CHECK(p.code[3].b.imm == ~0ull);
  CHECK(p.code[4].a.reg == 15);
}

TEST_CASE("mnemonics are case-insensitive") {
  Program p = assemble("mov r1, 5\njmp end\nend: nop\n");
  CHECK(p.code[0].op == Opcode::Mov);
  CHECK(p.code[1].op == Opcode::Jmp);
}

TEST_CASE("operand shape errors") {
  CHECK_THROWS_AS(assemble("MOV r1\n"), SimError);
  CHECK_THROWS_AS(assemble("SUB 5, r1\n"), SimError);
  CHECK_THROWS_AS(assemble("CMPXCHG r1, [r2]\n"), SimError); // reversed
  CHECK_THROWS_AS(assemble("MOV [r1], [r2]\n"), SimError);
  CHECK_THROWS_AS(assemble("XBEGIN\n"), SimError);
  CHECK_THROWS_AS(assemble("RDTSC 5\n"), SimError);
  CHECK_THROWS_AS(assemble("MOV r99, 1\n"), SimError);
}

namespace {

// Random but well-formed source: every jump references a defined label.
std::string random_source(Rng& rng) {
  int nlabels = 1 + rng.uniform(3);
  std::vector<std::string> labels;
  for (int i = 0; i < nlabels; ++i) labels.push_back("l" + std::to_string(i));
  std::string src;
  int n = 4 + rng.uniform(20);
  for (int i = 0; i < n; ++i) {
    if (rng.uniform(4) == 0) src += labels[rng.uniform(labels.size() - 1)] + "_" + std::to_string(i) + ":\n";
    switch (rng.uniform(9)) {
      case 0: src += "NOP\n"; break;
      case 1: src += "MOV r" + std::to_string(rng.uniform(15)) + ", " + std::to_string(rng.next() & 0xffff) + "\n"; break;
      case 2: src += "SUB r1, r" + std::to_string(rng.uniform(15)) + "\n"; break;
      case 3: src += "CMP r2, " + std::to_string(rng.uniform(255)) + "\n"; break;
      case 4: src += "LAHF\n"; break;
      case 5: src += "PUSHF\n"; break;
      case 6: src += "MOV r3, [r4+" + std::to_string(rng.uniform(64)) + "]\n"; break;
      case 7: src += "RDTSC r" + std::to_string(rng.uniform(15)) + "\n"; break;
      case 8: src += "CMPXCHG [r5], r6\n"; break;
    }
  }
  // define the label targets, then jumps that use them
  for (const auto& l : labels) src += l + ": NOP\n";
  for (const auto& l : labels)
    if (rng.uniform(1)) src += (rng.uniform(1) ? "JZ " : "JMP ") + l + "\n";
  src += "HALT\n";
  return src;
}

} // namespace

TEST_CASE("round trip: disassemble then reassemble is identity") {
  Rng rng(99);
  for (int iter = 0; iter < 200; ++iter) {
    Program p1 = assemble(random_source(rng));
    Program p2 = assemble(disassemble(p1));
    REQUIRE(p1.code.size() == p2.code.size());
    CHECK(p1 == p2);
  }
  // and on the canonical listing shape
  Program p1 = assemble(
      "RDTSC r6\nMOV r1, 0xffff800000000000\nMOV r2, 7\nXBEGIN fallback\nSUB r2, [r1]\nXEND\n"
      "fallback:\nJZ equal\nJMP notequal\nequal: NOP\nnotequal: NOP\nRDTSC r7\nHALT\n");
  CHECK(assemble(disassemble(p1)) == p1);
}
