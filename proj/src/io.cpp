#include "flagstall/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flagstall {

namespace {

const std::string kDefaultSecret = "SECRET";

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw SimError(Err::BadConfig, "bad value for " + key + ": '" + value + "'");
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    uint64_t r = std::stoull(v, &used, 0);
    if (used != v.size()) bad_value(key, v);
    return r;
  } catch (const SimError&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

uint32_t parse_u32(const std::string& key, const std::string& v) {
  uint64_t r = parse_u64(key, v);
  if (r > 0xffffffffull) bad_value(key, v);
  return static_cast<uint32_t>(r);
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double r = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v);
    return r;
  } catch (const SimError&) {
    throw;
  } catch (...) {
    bad_value(key, v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

std::vector<uint64_t> parse_offsets(const std::string& v, bool& all) {
  all = false;
  std::vector<uint64_t> out;
  if (v == "all") {
    all = true;
    return out;
  }
  if (v == "none") return out;
  size_t dots = v.find("..");
  if (dots != std::string::npos) {
    uint64_t a = parse_u64("offsets", trim(v.substr(0, dots)));
    uint64_t b = parse_u64("offsets", trim(v.substr(dots + 2)));
    if (b < a) bad_value("offsets", v);
    for (uint64_t i = a; i <= b; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64("offsets", trim(item)));
  if (out.empty()) bad_value("offsets", v);
  return out;
}

std::string format_offsets(const std::vector<uint64_t>& offsets) {
  if (offsets.empty()) return "none";
  bool contiguous = true;
  for (size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] != offsets[i - 1] + 1) contiguous = false;
  if (contiguous && offsets.size() > 1)
    return std::to_string(offsets.front()) + ".." + std::to_string(offsets.back());
  std::string s;
  for (size_t i = 0; i < offsets.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(offsets[i]);
  }
  return s;
}

std::string to_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : bytes) {
    out += digits[c >> 4];
    out += digits[c & 0xf];
  }
  return out;
}

std::string from_hex(const std::string& hex) {
  if (hex.size() % 2) throw SimError(Err::BadConfig, "secret_hex needs an even digit count");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw SimError(Err::BadConfig, std::string("bad hex digit '") + c + "'");
  };
  std::string out;
  for (size_t i = 0; i < hex.size(); i += 2)
    out += static_cast<char>((nib(hex[i]) << 4) | nib(hex[i + 1]));
  return out;
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.victim.secret = kDefaultSecret;
  c.attack.offset_range.resize(c.victim.secret.size());
  for (size_t i = 0; i < c.attack.offset_range.size(); ++i) c.attack.offset_range[i] = i;
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c = default_config();
  bool offsets_all = true;
  bool offsets_seen = false;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SimError(Err::BadConfig, "line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));

    auto& m = c.micro;
    if (key == "transient_window") m.transient_window = parse_u32(key, value);
    else if (key == "revert_stall_window") m.revert_stall_window = parse_u32(key, value);
    else if (key == "jcc_stall_penalty") m.jcc_stall_penalty = parse_u32(key, value);
    else if (key == "base_latency.jump") m.base_latency.jump = parse_u32(key, value);
    else if (key == "base_latency.alu") m.base_latency.alu = parse_u32(key, value);
    else if (key == "base_latency.mov_load") m.base_latency.mov_load = parse_u32(key, value);
    else if (key == "base_latency.nop") m.base_latency.nop = parse_u32(key, value);
    else if (key == "base_latency.flag_image") m.base_latency.flag_image = parse_u32(key, value);
    else if (key == "base_latency.rdtsc") m.base_latency.rdtsc = parse_u32(key, value);
    else if (key == "secret_transiently_readable") m.secret_transiently_readable = parse_f64(key, value);
    else if (key == "noise.kind") {
      if (value == "none") m.noise.kind = NoiseModel::Kind::None;
      else if (value == "additive") m.noise.kind = NoiseModel::Kind::Additive;
      else bad_value(key, value);
    } else if (key == "noise.per_sample_jitter") m.noise.per_sample_jitter = parse_u32(key, value);
    else if (key == "noise.outlier_prob") m.noise.outlier_prob = parse_f64(key, value);
    else if (key == "noise.outlier_magnitude") m.noise.outlier_magnitude = parse_u64(key, value);
    else if (key == "rng_seed") m.rng_seed = parse_u64(key, value);
    else if (key == "suppression") {
      if (value == "tsx") m.suppression = Suppression::Tsx;
      else if (value == "interrupt") m.suppression = Suppression::Interrupt;
      else bad_value(key, value);
    } else if (key == "interrupt_abort_overhead") m.interrupt_abort_overhead = parse_u32(key, value);
    else if (key == "instruction_budget") m.instruction_budget = parse_u64(key, value);
    else if (key == "to") c.attack.to = parse_u32(key, value);
    else if (key == "passes") c.attack.passes = parse_u32(key, value);
    else if (key == "offsets") {
      offsets_seen = true;
      c.attack.offset_range = parse_offsets(value, offsets_all);
    } else if (key == "decode_rule") {
      if (value == "argmax_mode") c.attack.decode_rule = DecodeRule::ArgmaxMode;
      else if (value == "mean_max") c.attack.decode_rule = DecodeRule::MeanMax;
      else bad_value(key, value);
    } else if (key == "secret") {
      if (value.empty()) bad_value(key, value);
      c.victim.secret = value;
    } else if (key == "secret_hex") {
      c.victim.secret = from_hex(value);
    } else if (key == "keep_cached") c.victim.keep_cached = parse_bool(key, value);
    else if (key == "uncached_readability") c.victim.uncached_readability = parse_f64(key, value);
    else throw SimError(Err::BadConfig, "unknown config key '" + key + "'");
  }

  if (!offsets_seen || offsets_all) {
    c.attack.offset_range.resize(c.victim.secret.size());
    for (size_t i = 0; i < c.attack.offset_range.size(); ++i) c.attack.offset_range[i] = i;
  }
  c.micro.validate();
  c.attack.validate();
  c.victim.validate();
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  auto kv = [&](const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; };
  const auto& m = c.micro;
  kv("transient_window", std::to_string(m.transient_window));
  kv("revert_stall_window", std::to_string(m.revert_stall_window));
  kv("jcc_stall_penalty", std::to_string(m.jcc_stall_penalty));
  kv("base_latency.jump", std::to_string(m.base_latency.jump));
  kv("base_latency.alu", std::to_string(m.base_latency.alu));
  kv("base_latency.mov_load", std::to_string(m.base_latency.mov_load));
  kv("base_latency.nop", std::to_string(m.base_latency.nop));
  kv("base_latency.flag_image", std::to_string(m.base_latency.flag_image));
  kv("base_latency.rdtsc", std::to_string(m.base_latency.rdtsc));
  kv("secret_transiently_readable", format_double(m.secret_transiently_readable));
  kv("noise.kind", m.noise.kind == NoiseModel::Kind::None ? "none" : "additive");
  kv("noise.per_sample_jitter", std::to_string(m.noise.per_sample_jitter));
  kv("noise.outlier_prob", format_double(m.noise.outlier_prob));
  kv("noise.outlier_magnitude", std::to_string(m.noise.outlier_magnitude));
  kv("rng_seed", std::to_string(m.rng_seed));
  kv("suppression", m.suppression == Suppression::Tsx ? "tsx" : "interrupt");
  kv("interrupt_abort_overhead", std::to_string(m.interrupt_abort_overhead));
  kv("instruction_budget", std::to_string(m.instruction_budget));
  kv("to", std::to_string(c.attack.to));
  kv("passes", std::to_string(c.attack.passes));
  kv("offsets", format_offsets(c.attack.offset_range));
  kv("decode_rule", c.attack.decode_rule == DecodeRule::ArgmaxMode ? "argmax_mode" : "mean_max");
  kv("secret_hex", to_hex(c.victim.secret));
  kv("keep_cached", c.victim.keep_cached ? "true" : "false");
  kv("uncached_readability", format_double(c.victim.uncached_readability));
  return out;
}

namespace {

std::string hex_byte(uint8_t b) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "0x%02x", b);
  return buf;
}

} // namespace

std::string leak_report_text(const LeakReport& report) {
  std::string out;
  out += "success_rate = " + format_double(report.success_rate) + "\n";
  out += "offset_count = " + std::to_string(report.per_offset.size()) + "\n";
  for (const auto& ol : report.per_offset) {
    out += "[offset " + std::to_string(ol.offset) + "]\n";
    out += "truth = " + hex_byte(ol.truth) + "\n";
    out += "decoded = " + hex_byte(ol.decoded) + "\n";
    out += "match = " + std::string(ol.decoded == ol.truth ? "true" : "false") + "\n";
    out += "passes = " + std::to_string(ol.passes) + "\n";
    out += "modal_count = " + std::to_string(ol.histogram[ol.decoded]) + "\n";
  }
  if (!report.config_echo.empty()) {
    out += "[config]\n";
    out += report.config_echo;
  }
  return out;
}

std::string mitigation_report_text(const MitigationReport& r) {
  std::string out;
  out += "gadget = " + gadget_name(r.gadget) + "\n";
  out += "experiments = " + std::to_string(r.experiments) + "\n";
  out += "passes = " + std::to_string(r.passes) + "\n";
  out += "baseline_accuracy = " + format_double(r.baseline_accuracy) + "\n";
  out += "mitigated_accuracy = " + format_double(r.mitigated_accuracy) + "\n";
  out += "signal_before = " + std::to_string(r.signal_before) + "\n";
  out += "signal_after = " + std::to_string(r.signal_after) + "\n";
  return out;
}

std::string histogram_csv(const std::vector<OffsetLeak>& per_offset) {
  std::string out = "offset,test_num,count\n";
  char buf[64];
  for (const auto& ol : per_offset)
    for (size_t t = 0; t < ol.histogram.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%llu,%zu,%llu\n", static_cast<unsigned long long>(ol.offset), t,
                    static_cast<unsigned long long>(ol.histogram[t]));
      out += buf;
    }
  return out;
}

std::string passes_csv_header() { return "offset,pass,argmax,max_time\n"; }

void append_passes_csv(std::string& out, uint64_t offset, const std::vector<PassRecord>& records) {
  char buf[96];
  for (size_t p = 0; p < records.size(); ++p) {
    std::snprintf(buf, sizeof(buf), "%llu,%zu,%u,%llu\n", static_cast<unsigned long long>(offset), p,
                  records[p].argmax, static_cast<unsigned long long>(records[p].max_time));
    out += buf;
  }
}

std::string mean_profile_csv_header() { return "offset,test_num,mean,stddev\n"; }

void append_mean_profile_csv(std::string& out, uint64_t offset, const MeanProfile& profile) {
  for (const auto& e : profile.entries) {
    out += std::to_string(offset) + "," + std::to_string(e.test_num) + "," + format_double(e.mean) + "," +
           format_double(e.stddev) + "\n";
  }
}

std::string sweep_csv(const SweepResult& result) {
  std::string out = "param,value,metric\n";
  for (size_t i = 0; i < result.grid.size(); ++i)
    out += result.param + "," + format_double(result.grid[i]) + "," + format_double(result.metric[i]) + "\n";
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SimError(Err::IoError, "cannot write " + path);
  f << content;
  if (!f) throw SimError(Err::IoError, "write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SimError(Err::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

} // namespace flagstall
