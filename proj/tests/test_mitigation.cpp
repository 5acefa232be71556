#include <doctest.h>

#include "flagstall/assembler.hpp"
#include "flagstall/mitigation.hpp"

using namespace flagstall;

namespace {

MicroConfig quiet_config() {
  MicroConfig cfg;
  cfg.noise.kind = NoiseModel::Kind::None;
  return cfg;
}

Gadget delay(uint32_t n) {
  Gadget g;
  g.kind = Gadget::Kind::Delay;
  g.delay_count = n;
  return g;
}

Gadget kind_only(Gadget::Kind k) {
  Gadget g;
  g.kind = k;
  return g;
}

} // namespace

TEST_CASE("parse_gadget") {
  CHECK(parse_gadget("delay").kind == Gadget::Kind::Delay);
  CHECK(parse_gadget("delay").delay_count == 6);
  CHECK(parse_gadget("delay:10").delay_count == 10);
  CHECK(parse_gadget("lahf_sahf").kind == Gadget::Kind::LahfSahf);
  CHECK(parse_gadget("pushf_popf").kind == Gadget::Kind::PushfPopf);
  CHECK(parse_gadget("hardware_off").kind == Gadget::Kind::HardwareOff);
  CHECK_THROWS_AS(parse_gadget("delay:0"), SimError);
  CHECK_THROWS_AS(parse_gadget("delay:x"), SimError);
  CHECK_THROWS_AS(parse_gadget("lahf_sahf:2"), SimError);
  CHECK_THROWS_AS(parse_gadget("unknown"), SimError);
  CHECK(gadget_name(parse_gadget("delay:10")) == "delay:10");
}

TEST_CASE("apply_gadget insertion") {
  Program base = build_attack_program(7, 0);
  auto jcc = find_jcc_after_transaction(base);
  REQUIRE(jcc.has_value());

  SUBCASE("delay inserts the requested NOPs right before the jump") {
    Program p = apply_gadget(base, delay(6));
    CHECK(p.code.size() == base.code.size() + 6);
    for (uint32_t i = 0; i < 6; ++i) CHECK(p.code[*jcc + i].op == Opcode::Nop);
    CHECK(p.code[*jcc + 6].op == Opcode::Jz);
  }
  SUBCASE("lahf_sahf inserts exactly two instructions") {
    Program p = apply_gadget(base, kind_only(Gadget::Kind::LahfSahf));
    CHECK(p.code.size() == base.code.size() + 2);
    CHECK(p.code[*jcc].op == Opcode::Lahf);
    CHECK(p.code[*jcc + 1].op == Opcode::Sahf);
  }
  SUBCASE("pushf_popf inserts exactly two instructions") {
    Program p = apply_gadget(base, kind_only(Gadget::Kind::PushfPopf));
    CHECK(p.code.size() == base.code.size() + 2);
    CHECK(p.code[*jcc].op == Opcode::Pushf);
    CHECK(p.code[*jcc + 1].op == Opcode::Popf);
  }
  SUBCASE("hardware_off leaves the program alone") {
    CHECK(apply_gadget(base, kind_only(Gadget::Kind::HardwareOff)) == base);
  }
  SUBCASE("delay 0 is rejected") {
    CHECK_THROWS_AS(apply_gadget(base, delay(0)), SimError);
  }
  SUBCASE("program without a protected jump is rejected") {
    Program p = assemble("NOP\nHALT\n");
    CHECK_THROWS_AS(apply_gadget(p, delay(6)), SimError);
  }
  SUBCASE("gadget programs still assemble round trip") {
    for (auto g : {delay(3), kind_only(Gadget::Kind::LahfSahf), kind_only(Gadget::Kind::PushfPopf)}) {
      Program p = apply_gadget(base, g);
      CHECK(assemble(disassemble(p)) == p);
    }
  }
}

TEST_CASE("flag rewrite semantics") {
  SUBCASE("LAHF;SAHF is an architectural identity on the flags") {
    MicroConfig cfg = quiet_config();
    // set some flags via SAHF, run the pair, compare
    std::string src =
        "MOV r0, 0x4300\nSAHF\n" // distinctive flag byte
        "LAHF\nSAHF\nHALT\n";
    RunResult r = run(cfg, ArchState{}, assemble(src));
    Flags expect;
    expect.set_low_byte(0x43);
    CHECK(r.final_state.flags == expect);
  }
  SUBCASE("PUSHF;POPF preserves ZF = 1") {
    MicroConfig cfg = quiet_config();
    RunResult r = run(cfg, ArchState{}, assemble("SUB r1, r1\nPUSHF\nPOPF\nHALT\n"));
    CHECK(r.final_state.flags.zf == 1);
    CHECK(r.final_state.stack.empty());
  }
  SUBCASE("SAHF clears the pending revert: JZ pays no penalty") {
    MicroConfig cfg = quiet_config();
    VictimSpec victim;
    victim.secret = "\x42";
    InstalledVictim iv = install_victim(victim, cfg);
    ArchState init;
    init.mem = iv.mem;
    Program prog = apply_gadget(build_attack_program(0x42, 0), kind_only(Gadget::Kind::LahfSahf));
    RunResult r = run(cfg, init, prog, true);
    REQUIRE(r.aborted);
    for (const auto& t : r.trace) {
      CHECK(!t.stalled);
      if (!t.transient && std::string(t.op) == "JZ") CHECK(t.cycle_cost == cfg.base_latency.jump);
    }
  }
}

TEST_CASE("architectural transparency of every gadget") {
  MicroConfig cfg = quiet_config();
  VictimSpec victim;
  victim.secret = "\x42";
  InstalledVictim iv = install_victim(victim, cfg);

  for (auto kind : {Gadget::Kind::Delay, Gadget::Kind::LahfSahf, Gadget::Kind::PushfPopf}) {
    Gadget g = kind == Gadget::Kind::Delay ? delay(8) : kind_only(kind);
    for (uint32_t test_num : {0u, 0x42u, 200u}) {
      Program base = build_attack_program(test_num, 0);
      Program guarded = apply_gadget(base, g);

      ArchState init;
      init.mem = iv.mem;
      RunResult plain = run(cfg, init, base);
      RunResult mitigated = run(cfg, init, guarded);

      CHECK(plain.final_state.flags == mitigated.final_state.flags);
      CHECK(plain.final_state.stack == mitigated.final_state.stack);
      CHECK(plain.final_state.mem == mitigated.final_state.mem);
      for (int r = 0; r < kNumRegs; ++r) {
        uint64_t a = plain.final_state.regs[r];
        uint64_t b = mitigated.final_state.regs[r];
        if (r == 0 && kind == Gadget::Kind::LahfSahf) {
          a &= ~0xff00ull; // AH is the one sanctioned difference
          b &= ~0xff00ull;
        }
        if (r == 7) continue; // the end timestamp moves by the gadget's latency
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("mitigation completeness: no stall survives a rewrite gadget") {
  MicroConfig cfg = quiet_config();
  for (auto kind : {Gadget::Kind::LahfSahf, Gadget::Kind::PushfPopf}) {
    for (uint8_t secret : {uint8_t{0x00}, uint8_t{0x42}, uint8_t{0xa7}}) {
      VictimSpec victim;
      victim.secret = std::string(1, static_cast<char>(secret));
      InstalledVictim iv = install_victim(victim, cfg);
      for (uint32_t t = 0; t < 256; ++t) {
        Program prog = apply_gadget(build_attack_program(t, 0), kind_only(kind));
        ArchState init;
        init.mem = iv.mem;
        RunResult r = run(cfg, init, prog, true);
        for (const auto& e : r.trace) CHECK(!e.stalled);
      }
    }
  }
}

TEST_CASE("delay sufficiency threshold equals the stall window") {
  MicroConfig cfg;
  for (uint32_t window : {6u, 7u, 8u, 9u}) {
    cfg.revert_stall_window = window;
    uint32_t smallest = 0;
    while (zero_noise_signal(cfg, nop_delay_transform(smallest)) > 0) ++smallest;
    CHECK(smallest == window);
  }
}

TEST_CASE("evaluate_mitigation") {
  MicroConfig micro;
  micro.rng_seed = 1001;
  AttackConfig attack;
  attack.passes = 8;
  VictimSpec victim;
  victim.secret = "*";

  SUBCASE("an undersized delay changes nothing (paired seeds)") {
    MitigationReport rep = evaluate_mitigation(micro, attack, victim, delay(4), 40);
    CHECK(rep.signal_before == micro.jcc_stall_penalty);
    CHECK(rep.signal_after == micro.jcc_stall_penalty);
    CHECK(rep.mitigated_accuracy == rep.baseline_accuracy);
  }
  SUBCASE("a full delay kills the signal") {
    MitigationReport rep = evaluate_mitigation(micro, attack, victim, delay(10), 40);
    CHECK(rep.signal_after == 0);
    CHECK(rep.mitigated_accuracy < rep.baseline_accuracy);
  }
  SUBCASE("hardware_off zeroes the penalty without touching programs") {
    MitigationReport rep = evaluate_mitigation(micro, attack, victim, kind_only(Gadget::Kind::HardwareOff), 40);
    CHECK(rep.signal_before == micro.jcc_stall_penalty);
    CHECK(rep.signal_after == 0);
  }
  SUBCASE("experiments = 0 is rejected") {
    CHECK_THROWS_AS(evaluate_mitigation(micro, attack, victim, delay(10), 0), SimError);
  }
}
