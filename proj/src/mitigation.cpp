#include "flagstall/mitigation.hpp"

namespace flagstall {

Gadget parse_gadget(const std::string& name) {
  Gadget g;
  std::string base = name;
  size_t colon = name.find(':');
  if (colon != std::string::npos) base = name.substr(0, colon);
  if (base == "delay") {
    g.kind = Gadget::Kind::Delay;
    if (colon != std::string::npos) {
      try {
        size_t used = 0;
        unsigned long v = std::stoul(name.substr(colon + 1), &used);
        if (used != name.size() - colon - 1 || v == 0 || v > 1'000'000)
          throw SimError(Err::BadConfig, "bad delay count in '" + name + "'");
        g.delay_count = static_cast<uint32_t>(v);
      } catch (const SimError&) {
        throw;
      } catch (...) {
        throw SimError(Err::BadConfig, "bad delay count in '" + name + "'");
      }
    }
    return g;
  }
  if (colon != std::string::npos) throw SimError(Err::BadConfig, "only delay takes a count: '" + name + "'");
  if (base == "lahf_sahf") {
    g.kind = Gadget::Kind::LahfSahf;
  } else if (base == "pushf_popf") {
    g.kind = Gadget::Kind::PushfPopf;
  } else if (base == "hardware_off") {
    g.kind = Gadget::Kind::HardwareOff;
  } else {
    throw SimError(Err::BadConfig, "unknown gadget '" + name + "'");
  }
  return g;
}

std::string gadget_name(const Gadget& g) {
  switch (g.kind) {
    case Gadget::Kind::Delay: return "delay:" + std::to_string(g.delay_count);
    case Gadget::Kind::LahfSahf: return "lahf_sahf";
    case Gadget::Kind::PushfPopf: return "pushf_popf";
    case Gadget::Kind::HardwareOff: return "hardware_off";
  }
  return "?";
}

Program apply_gadget(const Program& prog, const Gadget& gadget) {
  if (gadget.kind == Gadget::Kind::HardwareOff) return prog;
  if (gadget.kind == Gadget::Kind::Delay && gadget.delay_count == 0)
    throw SimError(Err::BadConfig, "delay gadget needs a count >= 1");
  auto jcc = find_jcc_after_transaction(prog);
  if (!jcc) throw SimError(Err::BadProgram, "no flag-dependent jump after the transaction");

  std::vector<Instruction> body;
  auto push = [&](Opcode op) {
    Instruction ins;
    ins.op = op;
    body.push_back(ins);
  };
  switch (gadget.kind) {
    case Gadget::Kind::Delay:
      for (uint32_t i = 0; i < gadget.delay_count; ++i) push(Opcode::Nop);
      break;
    case Gadget::Kind::LahfSahf:
      push(Opcode::Lahf);
      push(Opcode::Sahf);
      break;
    case Gadget::Kind::PushfPopf:
      push(Opcode::Pushf);
      push(Opcode::Popf);
      break;
    case Gadget::Kind::HardwareOff: break;
  }
  Program out = prog;
  out.insert(*jcc, body);
  return out;
}

MitigationReport evaluate_mitigation(const MicroConfig& micro, const AttackConfig& attack,
                                     const VictimSpec& victim, const Gadget& gadget, uint32_t experiments) {
  if (experiments < 1) throw SimError(Err::BadConfig, "experiments must be >= 1");
  victim.validate();

  VictimFactory random_secret = [&](uint32_t, uint64_t seed) {
    VictimSpec v = victim;
    v.secret = std::string(1, static_cast<char>(derive_seed(seed, 0x5ec7e7) & 0xff));
    return v;
  };

  MicroConfig mitigated_micro = micro;
  ProgramTransform transform;
  if (gadget.kind == Gadget::Kind::HardwareOff)
    mitigated_micro.jcc_stall_penalty = 0;
  else
    transform = [gadget](const Program& p) { return apply_gadget(p, gadget); };

  MitigationReport rep;
  rep.gadget = gadget;
  rep.experiments = experiments;
  rep.passes = attack.passes;
  rep.baseline_accuracy =
      accuracy_over_experiments(micro, attack, attack.decode_rule, experiments, random_secret);
  rep.mitigated_accuracy =
      accuracy_over_experiments(mitigated_micro, attack, attack.decode_rule, experiments, random_secret, transform);
  rep.signal_before = zero_noise_signal(micro);
  rep.signal_after = zero_noise_signal(mitigated_micro, transform);
  return rep;
}

} // namespace flagstall
