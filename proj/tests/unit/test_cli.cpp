#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "postdiff/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "postdiff_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args) {
  const auto log = workdir() / "stdout.txt";
  const std::string cmd = std::string("\"") + POSTDIFF_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2> \"" + (workdir() / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string p(const fs::path& path) { return "\"" + path.string() + "\""; }

// Tiny model settings shared by every command that touches a checkpoint.
const std::string kSmall =
    " --schedule.steps 20 --model.channels 4 --model.blocks 2 --model.fourier_features 4"
    " --data.duration 0.064 --train.segment_length 256 --train.batch_size 2 --train.clips 4"
    " --train.max_steps 3 --mel.n_fft 256 --mel.hop 64 --mel.n_mels 20 --operator.taps 33";

const fs::path& checkpoint() {
  static const fs::path ckpt = [] {
    const auto path = workdir() / "tiny.ckpt";
    const auto r = cli("train" + kSmall + " --model.checkpoint " + p(path));
    REQUIRE(r.code == 0);
    return path;
  }();
  return ckpt;
}

const fs::path& clean_clip() {
  static const fs::path clip = [] {
    const auto path = workdir() / "clean.wav";
    REQUIRE(cli("gen-toy" + kSmall + " --run.seed 3 --run.output " + p(path)).code == 0);
    return path;
  }();
  return clip;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("no-such-command").code == 2);
  CHECK(cli("gen-toy --no.such_key 1 --run.output x.wav").code == 2);
  CHECK(cli("gen-toy --schedule.steps 0 --run.output " + p(workdir() / "a.wav")).code == 0);
  CHECK(cli("sample --schedule.steps 0 --run.output " + p(workdir() / "a.wav")).code == 2);
  CHECK(cli("gen-toy --data.duration -1 --run.output " + p(workdir() / "a.wav")).code == 2);
  CHECK(cli("gen-toy").code == 2);  // missing run.output
  CHECK(cli("degrade --run.task bogus --run.input " + p(clean_clip()) + " --run.output " +
            p(workdir() / "b.wav"))
            .code == 2);
}

TEST_CASE("help and effective configuration") {
  CHECK(cli("--help").code == 0);
  const auto r = cli("bwe --print-config --guidance.xi0 2.5");
  CHECK(r.code == 0);
  CHECK(r.out.find("[guidance]") != std::string::npos);
  CHECK(r.out.find("xi0 = 2.5") != std::string::npos);
  const auto cfg = workdir() / "run.ini";
  {
    std::ofstream out(cfg);
    out << "[run]\nseed = 77\n";
  }
  CHECK(cli("sample --print-config -c " + p(cfg)).out.find("seed = 77") != std::string::npos);
  CHECK(cli("sample --print-config -c " + p(workdir() / "missing.ini")).code == 2);
}

TEST_CASE("missing or malformed inputs exit with code 3") {
  const auto out = workdir() / "never.wav";
  CHECK(cli("bwe" + kSmall + " --model.checkpoint " + p(checkpoint()) + " --run.input " +
            p(workdir() / "missing.wav") + " --run.output " + p(out))
            .code == 3);
  const auto junk = workdir() / "junk.wav";
  {
    std::ofstream f(junk);
    f << "garbage";
  }
  CHECK(cli("bwe" + kSmall + " --model.checkpoint " + p(checkpoint()) + " --run.input " + p(junk) +
            " --run.output " + p(out))
            .code == 3);
  CHECK(cli("bwe" + kSmall + " --model.checkpoint " + p(junk) + " --run.input " + p(clean_clip()) +
            " --run.output " + p(out))
            .code == 3);
  CHECK(cli("gen-toy --run.output " + p(workdir() / "no_dir" / "x.wav")).code == 3);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("schedule mismatch with the checkpoint is a configuration error") {
  const auto y = workdir() / "mm_in.wav";
  REQUIRE(cli("degrade" + kSmall + " --run.task bwe --run.input " + p(clean_clip()) + " --run.output " +
              p(y))
              .code == 0);
  const auto out = workdir() / "mm_out.wav";
  CHECK(cli("bwe" + kSmall + " --schedule.steps 21 --model.checkpoint " + p(checkpoint()) +
            " --run.input " + p(y) + " --run.output " + p(out))
            .code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("numeric failure exits with code 4 and writes nothing") {
  const auto bad = workdir() / "nan.ckpt";
  fs::copy_file(checkpoint(), bad, fs::copy_options::overwrite_existing);
  {
    std::fstream f(bad, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(-4, std::ios::end);
    const unsigned char nan_bits[4] = {0x00, 0x00, 0xc0, 0x7f};
    f.write(reinterpret_cast<const char*>(nan_bits), 4);
  }
  const auto y = workdir() / "nan_in.wav";
  REQUIRE(cli("degrade" + kSmall + " --run.task bwe --run.input " + p(clean_clip()) + " --run.output " +
              p(y))
              .code == 0);
  const auto out = workdir() / "nan_out.wav";
  const auto trace = workdir() / "nan_trace.csv";
  CHECK(cli("bwe" + kSmall + " --model.checkpoint " + p(bad) + " --run.input " + p(y) +
            " --run.output " + p(out) + " --guidance.trace " + p(trace))
            .code == 4);
  CHECK_FALSE(fs::exists(out));
  CHECK_FALSE(fs::exists(trace));
}

TEST_CASE("every task runs end to end through the command line") {
  const auto ck = " --model.checkpoint " + p(checkpoint());
  const auto clean2 = workdir() / "clean2.wav";
  REQUIRE(cli("gen-toy" + kSmall + " --run.seed 4 --run.output " + p(clean2)).code == 0);

  for (const std::string task : {"bwe", "declip", "vocode"}) {
    const auto y = workdir() / (task + (task == "vocode" ? "_in.pdtn" : "_in.wav"));
    REQUIRE(cli("degrade" + kSmall + " --run.task " + task + " --run.input " + p(clean_clip()) +
                " --run.output " + p(y))
                .code == 0);
    const auto out = workdir() / (task + "_out.wav");
    const auto metrics = workdir() / (task + "_metrics.jsonl");
    const auto r = cli(task + kSmall + ck + " --run.input " + p(y) + " --run.output " + p(out) +
                       " --run.eval true --run.reference " + p(clean_clip()) + " --run.metrics " +
                       p(metrics));
    CHECK_MESSAGE(r.code == 0, task);
    CHECK(fs::exists(out));
    std::ifstream m(metrics);
    std::string line;
    std::getline(m, line);
    CHECK(line.find("\"task\":\"" + task + "\"") != std::string::npos);
  }

  const auto mix = workdir() / "mix.wav";
  REQUIRE(cli("degrade" + kSmall + " --run.task separate --run.input " + p(clean_clip()) +
              " --run.input2 " + p(clean2) + " --run.output " + p(mix))
              .code == 0);
  const auto o1 = workdir() / "sep1.wav", o2 = workdir() / "sep2.wav";
  const auto r = cli("separate" + kSmall + ck + " --run.input " + p(mix) + " --run.output " + p(o1) +
                     " --run.output2 " + p(o2));
  CHECK(r.code == 0);
  CHECK(r.out.find("\"task\":\"separate\"") != std::string::npos);
  CHECK(postdiff::wav_read(o1).samples.size() == postdiff::wav_read(o2).samples.size());

  const auto s = workdir() / "draw.wav";
  CHECK(cli("sample" + kSmall + ck + " --run.count 2 --run.length 300 --run.output " + p(s)).code == 0);
  CHECK(fs::exists(workdir() / "draw_000.wav"));
  CHECK(fs::exists(workdir() / "draw_001.wav"));
}
