#include <doctest.h>

#include "trajdiff/checkpoint.hpp"
#include "trajdiff/config.hpp"
#include "trajdiff/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unistd.h>

using namespace trajdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("trajdiff_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig small_config() {
  RunConfig c;
  c.arch.seq_len = 4;
  c.arch.embed_dim = 4;
  c.arch.vocab_size = 3;
  c.arch.input_hidden = {6};
  c.arch.time_hidden = {6};
  c.arch.output_hidden = {6};
  c.arch.time_embed_dim = 8;
  c.arch.heads = 2;
  return c;
}

}  // namespace

TEST_CASE("config text round trip") {
  RunConfig c = small_config();
  c.schedule.kind = ScheduleKind::linear;
  c.schedule.beta_end = 0.1 / 3.0;
  c.train.lr_start = 1.0 / 7.0;
  c.train.rng_seed = 18446744073709551615ull;
  c.diffusion.parameterization = Parameterization::eps;
  c.diffusion.self_conditioning = false;
  RunConfig back;
  back.apply_text(c.to_text());
  CHECK(back.to_map() == c.to_map());
  CHECK(back.train.lr_start == c.train.lr_start);
  CHECK(back.schedule.beta_end == c.schedule.beta_end);
  CHECK(back.train.rng_seed == c.train.rng_seed);
  CHECK(back.arch.input_hidden == std::vector<int>{6});
}

TEST_CASE("config parsing rules") {
  RunConfig c;
  c.apply_text("# comment\n  train.batch_size = 12   # trailing\n\ndiffusion.guidance = on\n");
  CHECK(c.train.batch_size == 12);
  CHECK(c.diffusion.guidance);
  c.apply_override("diffusion.guidance=false");
  CHECK_FALSE(c.diffusion.guidance);
  c.apply_override("model.output_hidden=8,9,10");
  CHECK(c.arch.output_hidden == std::vector<int>{8, 9, 10});
  CHECK_THROWS_AS(c.set("train.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("train.batch_size", "twelve"), ConfigError);
  CHECK_THROWS_AS(c.set("train.lr_start", "1e-3x"), ConfigError);
  CHECK_THROWS_AS(c.set("diffusion.guidance", "maybe"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(c.apply_text("schedule.kind = wobbly\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/trajdiff.cfg"), ConfigError);
}

TEST_CASE("sqrt schedule offset defaults unless set") {
  RunConfig c;
  c.set("schedule.kind", "sqrt");
  CHECK(c.effective_schedule().s == 1e-4);
  c.set("schedule.s", "0.002");
  CHECK(c.effective_schedule().s == 0.002);
  RunConfig cos;
  CHECK(cos.effective_schedule().s == 0.008);
}

TEST_CASE("checkpoint round trip is byte stable") {
  const RunConfig cfg = small_config();
  TrainState st = initial_state(cfg.arch, 9);
  st.step = 17;
  st.best_step = 10;
  st.best_val = 1.0 / 3.0;
  st.stale_evals = 2;
  for (double& v : st.moments.m.values()) v = 0.125;
  const std::string bytes = serialize_checkpoint({cfg, st});
  CHECK(bytes.rfind("TRAJDIFF", 0) == 0);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.state.step == 17);
  CHECK(back.state.best_val == 1.0 / 3.0);
  CHECK(back.state.stale_evals == 2);
  CHECK(back.config.to_map() == cfg.to_map());
  CHECK(serialize_checkpoint(back) == bytes);

  TrainState fresh = initial_state(cfg.arch, 9);
  CHECK(std::isinf(deserialize_checkpoint(serialize_checkpoint({cfg, fresh})).state.best_val));
}

TEST_CASE("checkpoint corruption is detected") {
  const RunConfig cfg = small_config();
  const std::string bytes = serialize_checkpoint({cfg, initial_state(cfg.arch, 1)});
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(flipped), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(magic), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), DataError);
}

TEST_CASE("checkpoint files and best model") {
  const fs::path d = scratch_dir("ckpt");
  const RunConfig cfg = small_config();
  TrainState st = initial_state(cfg.arch, 2);
  st.best_params = initial_state(cfg.arch, 3).params;
  save_checkpoint(d / "m.ckpt", {cfg, st});
  const Checkpoint back = load_checkpoint(d / "m.ckpt");
  const ScoreNetParams best = best_model(back);
  const auto a = best.weights.values();
  const auto b = st.best_params.weights.values();
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  fs::remove_all(d);
}

TEST_CASE("sha256 test vectors") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 3e-4}) CHECK(std::stod(io::format_double(x)) == x);
}

TEST_CASE("jsonl records") {
  const std::vector<io::Record> recs{{"a", {1, 2, 3}, {}}, {"b", {0}, {60.5}}};
  const auto back = io::parse_jsonl(io::to_jsonl(recs));
  REQUIRE(back.size() == 2);
  CHECK(back[0].user == "a");
  CHECK(back[0].tokens == Trajectory{1, 2, 3});
  CHECK(back[1].dwell_s == std::vector<double>{60.5});
  CHECK(io::parse_jsonl("{\"tokens\":[4,5]}\n\n").at(0).tokens == Trajectory{4, 5});

  auto message_of = [](const std::string& text) {
    try {
      io::parse_jsonl(text, "data.jsonl");
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of("{\"tokens\":[1]}\n{oops\n").find("data.jsonl:2") != std::string::npos);
  CHECK(message_of("{\"tokens\":[1,-2]}\n").find("out of range") != std::string::npos);
  CHECK(message_of("{\"tokens\":[1.5]}\n") != "");
  CHECK(message_of("{\"user\":\"x\"}\n") != "");
  CHECK(message_of("{\"tokens\":[1,2],\"dwell_s\":[1]}\n") != "");
  CHECK(io::as_records({{1}, {2}}, "s#")[1].user == "s#1");
}

TEST_CASE("catalog csv") {
  const LocationCatalog cat{{{47.1, 8.2}, 3}, {{-33.9, 151.2}, 1}};
  const auto back = io::parse_catalog_csv(io::to_catalog_csv(cat));
  REQUIRE(back.size() == 2);
  CHECK(back[1].coord.lat == -33.9);
  CHECK(back[0].support == 3);
  CHECK_THROWS_AS(io::parse_catalog_csv("id,lat,lon,support\n1,0,0,1\n"), DataError);
  CHECK_THROWS_AS(io::parse_catalog_csv("id,lat,lon,support\n0,95,0,1\n"), DataError);
  CHECK_THROWS_AS(io::parse_catalog_csv("id,lat,lon\n0,1,2\n"), DataError);
  CHECK_THROWS_AS(io::parse_catalog_csv("id,lat,lon,support\n"), DataError);
}

TEST_CASE("gnss csv") {
  const auto pts = io::parse_gnss_csv("user,timestamp,lat,lon\nu1,0,47.0,8.0\nu1,60,47.0001,8.0\n");
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].timestamp == 60.0);
  CHECK(pts[0].user == "u1");
  CHECK_THROWS_AS(io::parse_gnss_csv("user,timestamp,lat,lon\nu1,0,47.0,181\n"), DataError);
  CHECK_THROWS_AS(io::parse_gnss_csv("user,timestamp,lat,lon\nu1,abc,47.0,8\n"), DataError);
}

TEST_CASE("atomic_write") {
  const fs::path d = scratch_dir("atomic");
  io::atomic_write(d / "f.txt", "hello");
  CHECK(io::read_file(d / "f.txt") == "hello");
  io::atomic_write(d / "f.txt", "bye");
  CHECK(io::read_file(d / "f.txt") == "bye");
  CHECK_THROWS_AS(io::atomic_write(d / "missing" / "f.txt", "x"), DataError);
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(d)) ++files;
  CHECK(files == 1);
  try {
    io::read_file(d / "nope.txt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("nope.txt") != std::string::npos);
  }
  fs::remove_all(d);
}
