#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flagstall/assembler.hpp"
#include "flagstall/io.hpp"

namespace py = pybind11;
using namespace flagstall;

namespace {

py::bytes secret_bytes(const VictimSpec& v) { return py::bytes(v.secret); }

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "flagstall: transient-flag timing channel simulator";

  py::register_exception<SimError>(m, "SimError");

  py::class_<Flags>(m, "Flags")
      .def(py::init<>())
      .def_readwrite("zf", &Flags::zf)
      .def_readwrite("cf", &Flags::cf)
      .def_readwrite("sf", &Flags::sf)
      .def_readwrite("of", &Flags::of)
      .def_readwrite("pf", &Flags::pf)
      .def_readwrite("af", &Flags::af)
      .def("low_byte", &Flags::low_byte)
      .def("image16", &Flags::image16)
      .def_static("from_image16", &Flags::from_image16)
      .def("__eq__", [](const Flags& a, const Flags& b) { return a == b; })
      .def("__repr__", [](const Flags& f) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "Flags(zf=%d cf=%d sf=%d of=%d pf=%d af=%d)", f.zf, f.cf, f.sf,
                      f.of, f.pf, f.af);
        return std::string(buf);
      });

  py::class_<Program>(m, "Program")
      .def("__len__", [](const Program& p) { return p.size(); })
      .def("disassemble", [](const Program& p) { return disassemble(p); });

  m.def("assemble", &assemble, py::arg("source"));
  m.def("disassemble", &disassemble, py::arg("program"));

  py::class_<NoiseModel> noise(m, "NoiseModel");
  py::enum_<NoiseModel::Kind>(noise, "Kind")
      .value("none", NoiseModel::Kind::None)
      .value("additive", NoiseModel::Kind::Additive);
  noise.def(py::init<>())
      .def_readwrite("kind", &NoiseModel::kind)
      .def_readwrite("per_sample_jitter", &NoiseModel::per_sample_jitter)
      .def_readwrite("outlier_prob", &NoiseModel::outlier_prob)
      .def_readwrite("outlier_magnitude", &NoiseModel::outlier_magnitude);

  py::enum_<Suppression>(m, "Suppression").value("tsx", Suppression::Tsx).value("interrupt", Suppression::Interrupt);

  py::class_<BaseLatency>(m, "BaseLatency")
      .def(py::init<>())
      .def_readwrite("jump", &BaseLatency::jump)
      .def_readwrite("alu", &BaseLatency::alu)
      .def_readwrite("mov_load", &BaseLatency::mov_load)
      .def_readwrite("nop", &BaseLatency::nop)
      .def_readwrite("flag_image", &BaseLatency::flag_image)
      .def_readwrite("rdtsc", &BaseLatency::rdtsc);

  py::class_<MicroConfig>(m, "MicroConfig")
      .def(py::init<>())
      .def_readwrite("transient_window", &MicroConfig::transient_window)
      .def_readwrite("revert_stall_window", &MicroConfig::revert_stall_window)
      .def_readwrite("jcc_stall_penalty", &MicroConfig::jcc_stall_penalty)
      .def_readwrite("base_latency", &MicroConfig::base_latency)
      .def_readwrite("secret_transiently_readable", &MicroConfig::secret_transiently_readable)
      .def_readwrite("noise", &MicroConfig::noise)
      .def_readwrite("rng_seed", &MicroConfig::rng_seed)
      .def_readwrite("suppression", &MicroConfig::suppression)
      .def_readwrite("interrupt_abort_overhead", &MicroConfig::interrupt_abort_overhead)
      .def_readwrite("instruction_budget", &MicroConfig::instruction_budget);

  py::enum_<DecodeRule>(m, "DecodeRule")
      .value("argmax_mode", DecodeRule::ArgmaxMode)
      .value("mean_max", DecodeRule::MeanMax);

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("to", &AttackConfig::to)
      .def_readwrite("passes", &AttackConfig::passes)
      .def_readwrite("offset_range", &AttackConfig::offset_range)
      .def_readwrite("decode_rule", &AttackConfig::decode_rule);

  py::class_<VictimSpec>(m, "VictimSpec")
      .def(py::init<>())
      .def(py::init([](const std::string& secret, bool keep_cached) {
             VictimSpec v;
             v.secret = secret;
             v.keep_cached = keep_cached;
             return v;
           }),
           py::arg("secret"), py::arg("keep_cached") = true)
      .def_property(
          "secret", [](const VictimSpec& v) { return secret_bytes(v); },
          [](VictimSpec& v, const std::string& s) { v.secret = s; })
      .def_readwrite("keep_cached", &VictimSpec::keep_cached)
      .def_readwrite("uncached_readability", &VictimSpec::uncached_readability);

  py::class_<TraceEntry>(m, "TraceEntry")
      .def_readonly("step", &TraceEntry::step)
      .def_readonly("pc", &TraceEntry::pc)
      .def_property_readonly("op", [](const TraceEntry& t) { return std::string(t.op); })
      .def_readonly("cycle_cost", &TraceEntry::cycle_cost)
      .def_readonly("transient", &TraceEntry::transient)
      .def_readonly("stalled", &TraceEntry::stalled);

  py::class_<ArchState>(m, "ArchState")
      .def(py::init<>())
      .def_readwrite("flags", &ArchState::flags)
      .def_readwrite("pc", &ArchState::pc)
      .def_property_readonly("regs", [](const ArchState& s) {
        return std::vector<uint64_t>(s.regs.begin(), s.regs.end());
      });

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("cycles", &RunResult::cycles)
      .def_readonly("aborted", &RunResult::aborted)
      .def_readonly("final_state", &RunResult::final_state)
      .def_readonly("trace", &RunResult::trace);

  m.def(
      "run",
      [](const MicroConfig& cfg, const Program& prog, bool record_trace) {
        return run(cfg, ArchState{}, prog, record_trace);
      },
      py::arg("config"), py::arg("program"), py::arg("record_trace") = false,
      "Run a program from a zeroed architectural state.");
  m.def("trace_csv", &trace_csv);

  py::class_<PassTiming>(m, "PassTiming")
      .def_readonly("test_num", &PassTiming::test_num)
      .def_readonly("spend_time", &PassTiming::spend_time);

  py::class_<PassRecord>(m, "PassRecord")
      .def_readonly("timings", &PassRecord::timings)
      .def_readonly("max_time", &PassRecord::max_time)
      .def_readonly("argmax", &PassRecord::argmax);

  py::class_<LeakByteResult>(m, "LeakByteResult")
      .def_readonly("decoded", &LeakByteResult::decoded)
      .def_property_readonly("histogram",
                             [](const LeakByteResult& r) {
                               return std::vector<uint64_t>(r.histogram.begin(), r.histogram.end());
                             })
      .def_readonly("records", &LeakByteResult::records);

  py::class_<OffsetLeak>(m, "OffsetLeak")
      .def_readonly("offset", &OffsetLeak::offset)
      .def_readonly("decoded", &OffsetLeak::decoded)
      .def_readonly("truth", &OffsetLeak::truth)
      .def_readonly("passes", &OffsetLeak::passes)
      .def_property_readonly("histogram", [](const OffsetLeak& r) {
        return std::vector<uint64_t>(r.histogram.begin(), r.histogram.end());
      });

  py::class_<LeakReport>(m, "LeakReport")
      .def_readonly("per_offset", &LeakReport::per_offset)
      .def_readonly("success_rate", &LeakReport::success_rate);

  m.def("build_attack_program", &build_attack_program, py::arg("test_num"), py::arg("offset"),
        py::arg("secret_addr") = kSecretAddr);
  m.def("run_pass", &run_pass, py::arg("micro"), py::arg("attack"), py::arg("victim"), py::arg("offset"),
        py::arg("transform") = ProgramTransform{});
  m.def("leak_byte", &leak_byte, py::arg("micro"), py::arg("attack"), py::arg("victim"), py::arg("offset"),
        py::arg("transform") = ProgramTransform{});
  m.def(
      "leak_string",
      [](const MicroConfig& micro, const AttackConfig& attack, const VictimSpec& victim) {
        return leak_string(micro, attack, victim);
      },
      py::arg("micro"), py::arg("attack"), py::arg("victim"));

  py::class_<MeanProfileEntry>(m, "MeanProfileEntry")
      .def_readonly("test_num", &MeanProfileEntry::test_num)
      .def_readonly("mean", &MeanProfileEntry::mean)
      .def_readonly("stddev", &MeanProfileEntry::stddev)
      .def_readonly("samples", &MeanProfileEntry::samples);

  py::class_<MeanProfile>(m, "MeanProfile").def_readonly("entries", &MeanProfile::entries);

  py::class_<Histogram>(m, "Histogram")
      .def_readonly("total", &Histogram::total)
      .def_property_readonly("bins", [](const Histogram& h) {
        return std::vector<uint64_t>(h.bins.begin(), h.bins.end());
      });

  m.def("argmax_histogram", &argmax_histogram);
  m.def("mean_profile", &mean_profile);
  m.def("decoder_accuracy", &decoder_accuracy, py::arg("micro"), py::arg("attack"), py::arg("victim"),
        py::arg("rule"), py::arg("experiments"), py::arg("transform") = ProgramTransform{});

  py::class_<SweepResult>(m, "SweepResult")
      .def_readonly("param", &SweepResult::param)
      .def_readonly("grid", &SweepResult::grid)
      .def_readonly("metric", &SweepResult::metric);

  m.def("stall_window_sweep", &stall_window_sweep, py::arg("micro"), py::arg("delays"));
  m.def("zero_noise_signal", &zero_noise_signal, py::arg("micro"), py::arg("transform") = ProgramTransform{});

  py::class_<Gadget> gadget(m, "Gadget");
  py::enum_<Gadget::Kind>(gadget, "Kind")
      .value("delay", Gadget::Kind::Delay)
      .value("lahf_sahf", Gadget::Kind::LahfSahf)
      .value("pushf_popf", Gadget::Kind::PushfPopf)
      .value("hardware_off", Gadget::Kind::HardwareOff);
  gadget.def(py::init<>())
      .def_readwrite("kind", &Gadget::kind)
      .def_readwrite("delay_count", &Gadget::delay_count)
      .def("__repr__", [](const Gadget& g) { return "Gadget(" + gadget_name(g) + ")"; });

  m.def("parse_gadget", &parse_gadget);
  m.def("gadget_name", &gadget_name);
  m.def("apply_gadget", &apply_gadget, py::arg("program"), py::arg("gadget"));

  py::class_<MitigationReport>(m, "MitigationReport")
      .def_readonly("gadget", &MitigationReport::gadget)
      .def_readonly("experiments", &MitigationReport::experiments)
      .def_readonly("passes", &MitigationReport::passes)
      .def_readonly("baseline_accuracy", &MitigationReport::baseline_accuracy)
      .def_readonly("mitigated_accuracy", &MitigationReport::mitigated_accuracy)
      .def_readonly("signal_before", &MitigationReport::signal_before)
      .def_readonly("signal_after", &MitigationReport::signal_after);

  m.def("evaluate_mitigation", &evaluate_mitigation, py::arg("micro"), py::arg("attack"), py::arg("victim"),
        py::arg("gadget"), py::arg("experiments"));

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("micro", &ExperimentConfig::micro)
      .def_readwrite("attack", &ExperimentConfig::attack)
      .def_readwrite("victim", &ExperimentConfig::victim);

  m.def("default_config", &default_config);
  m.def("parse_config_text", &parse_config_text);
  m.def("serialize_config", &serialize_config);
}
