#pragma once

// Flat key = value config files (unknown keys are errors), the stable-order
// report/CSV writers, and small file helpers. All numeric output is fixed
// decimal so outputs are byte-reproducible.

#include <string>
#include <vector>

#include "flagstall/analysis.hpp"
#include "flagstall/mitigation.hpp"

namespace flagstall {

struct ExperimentConfig {
  MicroConfig micro;
  AttackConfig attack;
  VictimSpec victim;

  bool operator==(const ExperimentConfig&) const = default;
};

// Defaults with the whole default secret selected.
ExperimentConfig default_config();

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Stable key order; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

std::string leak_report_text(const LeakReport& report);
std::string mitigation_report_text(const MitigationReport& report);

// offset,test_num,count — one block of 256 rows per offset
std::string histogram_csv(const std::vector<OffsetLeak>& per_offset);

// offset,pass,argmax,max_time
std::string passes_csv_header();
void append_passes_csv(std::string& out, uint64_t offset, const std::vector<PassRecord>& records);

// offset,test_num,mean,stddev
std::string mean_profile_csv_header();
void append_mean_profile_csv(std::string& out, uint64_t offset, const MeanProfile& profile);

// param,value,metric
std::string sweep_csv(const SweepResult& result);

std::string format_double(double v);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

} // namespace flagstall
