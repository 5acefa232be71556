#include <doctest.h>

#include "flagstall/io.hpp"

using namespace flagstall;

TEST_CASE("config round trip: parse(serialize(c)) == c") {
  ExperimentConfig c = default_config();
  CHECK(parse_config_text(serialize_config(c)) == c);

  c.micro.revert_stall_window = 6;
  c.micro.noise.kind = NoiseModel::Kind::None;
  c.micro.suppression = Suppression::Interrupt;
  c.micro.secret_transiently_readable = 0.5;
  c.attack.passes = 123;
  c.attack.to = 31;
  c.attack.decode_rule = DecodeRule::MeanMax;
  c.attack.offset_range = {0, 2, 4};
  c.victim.secret = std::string("\x00\x01\xff\x42", 4);
  c.victim.keep_cached = false;
  CHECK(parse_config_text(serialize_config(c)) == c);
}

TEST_CASE("config parsing") {
  SUBCASE("defaults applied for missing keys; offsets default to the whole secret") {
    ExperimentConfig c = parse_config_text("secret = HI\n");
    CHECK(c.victim.secret == "HI");
    CHECK(c.attack.offset_range == std::vector<uint64_t>{0, 1});
    CHECK(c.micro.jcc_stall_penalty == 20);
  }
  SUBCASE("unknown key is an error") {
    CHECK_THROWS_AS(parse_config_text("not_a_key = 1\n"), SimError);
  }
  SUBCASE("bad values are errors") {
    CHECK_THROWS_AS(parse_config_text("passes = many\n"), SimError);
    CHECK_THROWS_AS(parse_config_text("noise.kind = loud\n"), SimError);
    CHECK_THROWS_AS(parse_config_text("secret_transiently_readable = 2.0\n"), SimError);
    CHECK_THROWS_AS(parse_config_text("to = 0\n"), SimError);
    CHECK_THROWS_AS(parse_config_text("passes = 0\n"), SimError);
  }
  SUBCASE("offset forms") {
    CHECK(parse_config_text("offsets = 1..3\n").attack.offset_range == std::vector<uint64_t>{1, 2, 3});
    CHECK(parse_config_text("offsets = 0,2,5\n").attack.offset_range == std::vector<uint64_t>{0, 2, 5});
    CHECK(parse_config_text("offsets = none\n").attack.offset_range.empty());
    CHECK(parse_config_text("offsets = all\n").attack.offset_range.size() == 6); // default secret
  }
  SUBCASE("comments and blank lines") {
    ExperimentConfig c = parse_config_text("# comment\n\npasses = 7 # trailing\n");
    CHECK(c.attack.passes == 7);
  }
  SUBCASE("secret_hex") {
    CHECK(parse_config_text("secret_hex = 414243\n").victim.secret == "ABC");
    CHECK_THROWS_AS(parse_config_text("secret_hex = 41424\n"), SimError);
    CHECK_THROWS_AS(parse_config_text("secret_hex = 41zz\n"), SimError);
  }
}

TEST_CASE("report and CSV formats are stable") {
  LeakReport rep;
  OffsetLeak ol;
  ol.offset = 0;
  ol.decoded = 0x53;
  ol.truth = 0x53;
  ol.passes = 4;
  ol.histogram[0x53] = 4;
  rep.per_offset.push_back(ol);
  rep.success_rate = 1.0;
  rep.config_echo = "passes = 4\n";

  std::string text = leak_report_text(rep);
  CHECK(text.find("success_rate = 1.000000\n") == 0);
  CHECK(text.find("decoded = 0x53") != std::string::npos);
  CHECK(text.find("[config]") != std::string::npos);

  std::string hist = histogram_csv(rep.per_offset);
  CHECK(hist.rfind("offset,test_num,count\n", 0) == 0);
  CHECK(hist.find("0,83,4\n") != std::string::npos);

  SweepResult sweep;
  sweep.param = "delay";
  sweep.grid = {0, 1};
  sweep.metric = {20, 0};
  CHECK(sweep_csv(sweep) ==
        "param,value,metric\ndelay,0.000000,20.000000\ndelay,1.000000,0.000000\n");

  std::string passes = passes_csv_header();
  PassRecord rec;
  rec.argmax = 3;
  rec.max_time = 27;
  append_passes_csv(passes, 5, {rec});
  CHECK(passes == "offset,pass,argmax,max_time\n5,0,3,27\n");
}

TEST_CASE("format_double is fixed decimal") {
  CHECK(format_double(1.0) == "1.000000");
  CHECK(format_double(0.00390625) == "0.003906");
}

TEST_CASE("file helpers report IoError") {
  CHECK_THROWS_AS(read_file("/nonexistent/nope.txt"), SimError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/nope.conf"), SimError);
}
