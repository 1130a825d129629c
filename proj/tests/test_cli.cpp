#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "jcl/oracle.hpp"
#include "jcl/trace.hpp"

namespace fs = std::filesystem;
using namespace jcl;

namespace {

std::string cli_path() {
  const char* p = std::getenv("JCL_CLI");
  REQUIRE_MESSAGE(p != nullptr, "JCL_CLI must point at the jcl binary");
  return p;
}

struct RunOut {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunOut run_cli(const fs::path& dir, const std::string& args) {
  static int counter = 0;
  fs::path log = dir / (".out" + std::to_string(counter++) + ".log");
  std::string cmd = "cd '" + dir.string() + "' && '" + cli_path() + "' " +
                    args + " > '" + log.string() + "' 2>&1";
  int rc = std::system(cmd.c_str());
  RunOut r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream f(log);
  std::stringstream ss;
  ss << f.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("jcl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "cannot open " << p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Value of a `key value` line printed by the CLI.
std::string field_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  FAIL("missing field " << key << " in:\n" << text);
  return "";
}

std::string csv_cell(const std::string& line, size_t index) {
  size_t begin = 0;
  for (size_t i = 0; i < index; ++i) {
    begin = line.find(',', begin);
    REQUIRE(begin != std::string::npos);
    ++begin;
  }
  size_t end = line.find(',', begin);
  return line.substr(begin, end == std::string::npos ? end : end - begin);
}

std::string last_line(const std::string& text) {
  size_t end = text.find_last_not_of('\n');
  size_t begin = text.find_last_of('\n', end);
  return text.substr(begin + 1, end - begin);
}

const std::string kSmallDims =
    "--set history_len=8 --set embed_dim=8 --set hidden_dim=16 "
    "--set ctx_dim=4 --set shared_dim=16 --set proj_dim=16";

}  // namespace

TEST_CASE("gen writes the trace, a params sidecar, and is deterministic") {
  fs::path dir = fresh_dir("gen");
  RunOut r = run_cli(dir, "gen --kind coupled --phases 20 --phase-len 50 "
                          "--seed 3 -o t.csv");
  CHECK(r.exit_code == 0);
  CHECK(field_of(r.output, "accesses") == "1000");

  std::string trace = slurp(dir / "t.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 1001);
  CHECK(trace.rfind("cycle,core,pc,addr,kind\n", 0) == 0);

  std::string sidecar = slurp(dir / "t.csv.params");
  CHECK(sidecar.find("kind = coupled\n") != std::string::npos);
  CHECK(sidecar.find("phases = 20\n") != std::string::npos);
  CHECK(sidecar.find("seed = 3\n") != std::string::npos);

  RunOut again = run_cli(dir, "gen --kind coupled --phases 20 --phase-len 50 "
                              "--seed 3 -o t2.csv");
  CHECK(again.exit_code == 0);
  CHECK(slurp(dir / "t2.csv") == trace);
}

TEST_CASE("usage and configuration errors exit with code 2") {
  fs::path dir = fresh_dir("usage");
  CHECK(run_cli(dir, "gen --length 10 -o x.csv").exit_code == 2);
  CHECK(run_cli(dir, "gen --kind bogus --length 10 -o x.csv").exit_code == 2);
  CHECK(run_cli(dir, "gen --kind loop -o x.csv").exit_code == 2);
  CHECK(run_cli(dir, "").exit_code == 2);
  CHECK(run_cli(dir, "frobnicate").exit_code == 2);
  CHECK(run_cli(dir, "--help").exit_code == 0);
}

TEST_CASE("label reports belady label shares") {
  fs::path dir = fresh_dir("label");
  REQUIRE(run_cli(dir, "gen --kind stream --length 64 -o stream.csv")
              .exit_code == 0);
  RunOut stream = run_cli(
      dir, "label --trace stream.csv --sets 4 --ways 2 -o stream_labels.csv");
  CHECK(stream.exit_code == 0);
  CHECK(field_of(stream.output, "averse_fraction") == "1.000000");
  CHECK(field_of(stream.output, "hits") == "0");

  REQUIRE(run_cli(dir, "gen --kind loop --length 320 --working-set 32 "
                       "-o loop.csv")
              .exit_code == 0);
  RunOut loop = run_cli(
      dir, "label --trace loop.csv --sets 8 --ways 4 -o loop_labels.csv");
  CHECK(loop.exit_code == 0);
  CHECK(field_of(loop.output, "friendly_fraction") == "1.000000");
  CHECK(field_of(loop.output, "insertions") == "32");
  CHECK(field_of(loop.output, "hits") == "288");

  std::string labels = slurp(dir / "loop_labels.csv");
  CHECK(labels.rfind("insertion_id,position,block,pc,set,label\n", 0) == 0);
}

TEST_CASE("label hits match exhaustive-search optimal on a tiny trace") {
  fs::path dir = fresh_dir("tiny");
  BlockGeometry g;
  Trace t;
  const uint64_t blocks[] = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  for (size_t i = 0; i < std::size(blocks); ++i) {
    MemoryAccess a;
    a.cycle = 100 + i;
    a.pc = 0x400100;
    a.address = blocks[i] * g.block_size_bytes;
    t.accesses.push_back(a);
  }
  write_trace_file(t, (dir / "tiny.csv").string());

  CacheConfig cc;
  cc.num_sets = 1;
  cc.associativity = 2;
  uint64_t optimal = brute_force_optimal(t, cc);

  RunOut r = run_cli(dir, "label --trace tiny.csv --sets 1 --ways 2 "
                          "-o tiny_labels.csv");
  CHECK(r.exit_code == 0);
  CHECK(field_of(r.output, "hits") == std::to_string(optimal));
}

TEST_CASE("data errors exit with code 1") {
  fs::path dir = fresh_dir("dataerr");
  CHECK(run_cli(dir, "label --trace nothere.csv -o x.csv").exit_code == 1);

  std::ofstream(dir / "garbage.csv") << "cycle,core,pc,addr,kind\nnot,a,row\n";
  CHECK(run_cli(dir, "label --trace garbage.csv -o x.csv").exit_code == 1);
}

TEST_CASE("train writes a reproducible run directory") {
  fs::path dir = fresh_dir("train");
  REQUIRE(run_cli(dir, "gen --kind loop --length 320 --working-set 32 "
                       "-o loop.csv")
              .exit_code == 0);
  REQUIRE(run_cli(dir, "label --trace loop.csv --sets 8 --ways 4 "
                       "-o labels.csv")
              .exit_code == 0);

  std::string train_args = "train --trace loop.csv --labels labels.csv "
                           "--mode baseline --set sets=8 --set ways=4 " +
                           kSmallDims +
                           " --set max_epochs=8 --set patience=3 --seed 5 "
                           "-o runs";
  RunOut r = run_cli(dir, train_args);
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);

  fs::path run_dir = dir / field_of(r.output, "run_dir");
  CHECK(fs::exists(run_dir / "config.txt"));
  CHECK(fs::exists(run_dir / "checkpoint.bin"));
  CHECK(fs::exists(run_dir / "history.csv"));
  CHECK(fs::exists(run_dir / "eval.csv"));
  CHECK(run_dir.filename().string().ends_with("-s5"));

  std::string eval_csv = slurp(run_dir / "eval.csv");
  CHECK(eval_csv.rfind("mode,trace,accuracy", 0) == 0);
  std::string row = last_line(eval_csv);
  CHECK(csv_cell(row, 0) == "baseline");
  CHECK(csv_cell(row, 1) == "loop");
  CHECK(std::stod(csv_cell(row, 2)) >= 0.95);

  std::string history = slurp(run_dir / "history.csv");
  CHECK(history.rfind("epoch,train_loss,repl_loss,pf_loss,val_accuracy\n",
                      0) == 0);

  std::string checkpoint = slurp(run_dir / "checkpoint.bin");
  CHECK(checkpoint.rfind("JCL1", 0) == 0);

  SUBCASE("an identical rerun leaves every artifact byte-identical") {
    REQUIRE(run_cli(dir, train_args).exit_code == 0);
    CHECK(slurp(run_dir / "checkpoint.bin") == checkpoint);
    CHECK(slurp(run_dir / "history.csv") == history);
    CHECK(slurp(run_dir / "eval.csv") == eval_csv);
  }

  SUBCASE("the echoed config reproduces the run from scratch") {
    RunOut echo = run_cli(dir, "train --trace loop.csv --labels labels.csv "
                               "--mode baseline --config " +
                               (run_dir / "config.txt").string() +
                               " -o runs2");
    REQUIRE_MESSAGE(echo.exit_code == 0, echo.output);
    fs::path run_dir2 = dir / field_of(echo.output, "run_dir");
    CHECK(run_dir2.filename() == run_dir.filename());
    CHECK(slurp(run_dir2 / "checkpoint.bin") == checkpoint);
    CHECK(slurp(run_dir2 / "config.txt") == slurp(run_dir / "config.txt"));
  }

  SUBCASE("eval on the training trace reproduces the held-out row") {
    RunOut ev = run_cli(dir, "eval --checkpoint " +
                                 (run_dir / "checkpoint.bin").string() +
                                 " --trace loop.csv --labels labels.csv "
                                 "-o eval2.csv");
    REQUIRE_MESSAGE(ev.exit_code == 0, ev.output);
    CHECK(slurp(dir / "eval2.csv") == eval_csv);
  }

  SUBCASE("a trained checkpoint drives the replacement policy") {
    RunOut sim = run_cli(dir, "simulate --trace loop.csv --sets 8 --ways 4 "
                              "--policy model --checkpoint " +
                              (run_dir / "checkpoint.bin").string());
    CHECK(sim.exit_code == 0);
    CHECK(field_of(sim.output, "policy") == "model-baseline_repl");
    uint64_t hits = std::stoull(field_of(sim.output, "demand_hits"));
    uint64_t misses = std::stoull(field_of(sim.output, "demand_misses"));
    CHECK(hits + misses == 320);
  }
}

TEST_CASE("contrastive training emits its pretraining curve") {
  fs::path dir = fresh_dir("contrastive");
  REQUIRE(run_cli(dir, "gen --kind coupled --phases 6 --phase-len 40 "
                       "--seed 3 -o c.csv")
              .exit_code == 0);
  REQUIRE(run_cli(dir, "label --trace c.csv --sets 8 --ways 2 -o l.csv")
              .exit_code == 0);
  RunOut r = run_cli(dir, "train --trace c.csv --labels l.csv "
                          "--mode contrastive --set sets=8 --set ways=2 " +
                          kSmallDims +
                          " --set max_epochs=2 --set pretrain_epochs=2 "
                          "--seed 5 -o runs");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  fs::path run_dir = dir / field_of(r.output, "run_dir");

  std::string curve = slurp(run_dir / "pretrain_curve.csv");
  std::istringstream in(curve);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,loss");
  size_t rows = 0;
  double first_loss = 0.0;
  while (std::getline(in, line)) {
    if (rows == 0) first_loss = std::stod(csv_cell(line, 1));
    ++rows;
  }
  CHECK(rows == 3);  // epochs 0..pretrain_epochs
  CHECK(first_loss == doctest::Approx(std::log(5.0)).epsilon(0.2));
}

TEST_CASE("train rejects unknown keys, bad modes, and bad config files") {
  fs::path dir = fresh_dir("trainerr");
  REQUIRE(run_cli(dir, "gen --kind loop --length 64 --working-set 8 "
                       "-o t.csv")
              .exit_code == 0);
  REQUIRE(run_cli(dir, "label --trace t.csv --sets 4 --ways 2 -o l.csv")
              .exit_code == 0);

  std::string base = "train --trace t.csv --labels l.csv -o runs ";
  CHECK(run_cli(dir, base + "--mode warp").exit_code == 2);
  CHECK(run_cli(dir, base + "--mode baseline --set nope=3").exit_code == 2);
  CHECK(run_cli(dir, base + "--mode baseline --set sets").exit_code == 2);
  CHECK(run_cli(dir, base + "--mode baseline --set sets=abc").exit_code == 2);

  std::ofstream(dir / "bad_key.cfg") << "unknown_thing = 1\n";
  CHECK(run_cli(dir, base + "--mode baseline --config bad_key.cfg")
            .exit_code == 2);
  std::ofstream(dir / "bad_syntax.cfg") << "sets 8\n";
  CHECK(run_cli(dir, base + "--mode baseline --config bad_syntax.cfg")
            .exit_code == 2);
  CHECK(run_cli(dir, base + "--mode baseline --config nothere.cfg")
            .exit_code == 1);
}

TEST_CASE("simulate validates policy and prefetcher selections") {
  fs::path dir = fresh_dir("simerr");
  REQUIRE(run_cli(dir, "gen --kind stream --length 32 -o t.csv")
              .exit_code == 0);
  CHECK(run_cli(dir, "simulate --trace t.csv --policy warp").exit_code == 2);
  CHECK(run_cli(dir, "simulate --trace t.csv --policy oracle").exit_code == 2);
  CHECK(run_cli(dir, "simulate --trace t.csv --policy model").exit_code == 2);
  CHECK(run_cli(dir, "simulate --trace t.csv --prefetcher warp")
            .exit_code == 2);

  RunOut lru = run_cli(dir, "simulate --trace t.csv --sets 4 --ways 2 "
                            "--prefetcher next-line -o events.csv");
  CHECK(lru.exit_code == 0);
  CHECK(field_of(lru.output, "policy") == "lru");
  std::string events = slurp(dir / "events.csv");
  CHECK(events.rfind("event,cycle,block,pc,core,miss_type,stride,set,"
                     "is_insertion,insertion_id\n",
                     0) == 0);
  CHECK(std::stoull(field_of(lru.output, "prefetch_issued")) > 0);
}

TEST_CASE("oracle labels steer the cache at least as well as lru") {
  fs::path dir = fresh_dir("oracle");
  REQUIRE(run_cli(dir, "gen --kind coupled --phases 6 --phase-len 40 "
                       "--seed 3 -o c.csv")
              .exit_code == 0);
  REQUIRE(run_cli(dir, "label --trace c.csv --sets 8 --ways 2 -o l.csv")
              .exit_code == 0);
  RunOut lru =
      run_cli(dir, "simulate --trace c.csv --sets 8 --ways 2 --policy lru");
  RunOut oracle = run_cli(dir, "simulate --trace c.csv --sets 8 --ways 2 "
                               "--policy oracle --labels l.csv");
  CHECK(lru.exit_code == 0);
  CHECK(oracle.exit_code == 0);
  CHECK(std::stoull(field_of(oracle.output, "demand_hits")) >=
        std::stoull(field_of(lru.output, "demand_hits")));
}

TEST_CASE("report merges eval rows and bolds the best column entries") {
  fs::path dir = fresh_dir("report");
  std::ofstream(dir / "a.csv") << "mode,trace,accuracy\n"
                               << "baseline,alpha,0.75\n"
                               << "baseline,beta,0.8\n";
  std::ofstream(dir / "b.csv") << "mode,trace,accuracy\n"
                               << "joint,alpha,0.9\n"
                               << "joint,beta,0.8\n";
  RunOut r = run_cli(dir, "report a.csv b.csv -o out");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  CHECK(r.output.find("| mode | alpha | beta |") != std::string::npos);
  CHECK(r.output.find("| baseline | 75.00% | **80.00%** |") !=
        std::string::npos);
  CHECK(r.output.find("| joint | **90.00%** | **80.00%** |") !=
        std::string::npos);
  CHECK(slurp(dir / "out" / "report.md") == r.output);
  CHECK(slurp(dir / "out" / "report.csv") ==
        "mode,alpha,beta\n"
        "baseline,0.750000,0.800000\n"
        "joint,0.900000,0.800000\n");

  SUBCASE("mismatched trace sets are refused") {
    std::ofstream(dir / "c.csv") << "mode,trace,accuracy\n"
                                 << "contrastive,alpha,0.95\n";
    RunOut bad = run_cli(dir, "report a.csv b.csv c.csv");
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("lacks") != std::string::npos);
  }

  SUBCASE("duplicate cells are refused") {
    RunOut bad = run_cli(dir, "report a.csv a.csv");
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("duplicate") != std::string::npos);
  }

  SUBCASE("a header without the leading columns is refused") {
    std::ofstream(dir / "d.csv") << "trace,mode,accuracy\nalpha,joint,0.9\n";
    CHECK(run_cli(dir, "report d.csv").exit_code == 1);
  }
}
