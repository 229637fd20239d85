#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifndef VLX_CLI_PATH
#error "VLX_CLI_PATH must point at the vlx binary"
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
    double seconds = 0.0;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& workdir) {
    const fs::path out = workdir / "stdout.txt";
    const fs::path err = workdir / "stderr.txt";
    const std::string cmd = "cd '" + workdir.string() + "' && '" + std::string(VLX_CLI_PATH) +
                            "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const auto t0 = std::chrono::steady_clock::now();
    const int status = std::system(cmd.c_str());
    const auto t1 = std::chrono::steady_clock::now();
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gen writes a corpus and is deterministic") {
    TempDir tmp("vlx_cli_gen");
    auto r1 = run_cli("gen --out c1 --n 6 --side 32 --seed 9", tmp.path);
    REQUIRE(r1.exit_code == 0);
    CHECK(fs::exists(tmp.path / "c1/corpus.json"));
    CHECK(fs::exists(tmp.path / "c1/img_5.pgm"));
    CHECK(fs::exists(tmp.path / "c1/mask_5.pgm"));
    CHECK(fs::exists(tmp.path / "c1/prompts.json"));

    auto r2 = run_cli("gen --out c2 --n 6 --side 32 --seed 9", tmp.path);
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(tmp.path / "c1/corpus.json") == slurp(tmp.path / "c2/corpus.json"));
    CHECK(slurp(tmp.path / "c1/img_3.pgm") == slurp(tmp.path / "c2/img_3.pgm"));
}

TEST_CASE("unknown method exits 2 with a machine-parsable error") {
    TempDir tmp("vlx_cli_method");
    REQUIRE(run_cli("gen --out c --n 4 --side 32 --seed 1", tmp.path).exit_code == 0);
    REQUIRE(run_cli("train --corpus c --out m.vlxm --epochs 1 --batch 2 --seed 1", tmp.path)
                .exit_code == 0);
    auto r = run_cli(
        "explain --model m.vlxm --image c/img_0.pgm --prompt circle --method deeplift "
        "--out x.json",
        tmp.path);
    CHECK(r.exit_code == 2);
    CHECK(r.err.rfind("E_METHOD: unknown method", 0) == 0);
    CHECK(r.err.find('\n') == r.err.size() - 1);  // single line
}

TEST_CASE("missing image is an io error with nonzero exit") {
    TempDir tmp("vlx_cli_io");
    REQUIRE(run_cli("gen --out c --n 4 --side 32 --seed 1", tmp.path).exit_code == 0);
    REQUIRE(run_cli("train --corpus c --out m.vlxm --epochs 1 --batch 2 --seed 1", tmp.path)
                .exit_code == 0);
    auto r = run_cli("explain --model m.vlxm --image nope.pgm --prompt circle --out x.json",
                     tmp.path);
    CHECK(r.exit_code == 2);
    CHECK(r.err.rfind("E_IO:", 0) == 0);
}

TEST_CASE("full pipeline: train, stack, fuse, explain with cache") {
    TempDir tmp("vlx_cli_pipe");
    REQUIRE(run_cli("gen --out corpus --n 24 --side 32 --seed 4", tmp.path).exit_code == 0);

    auto train = run_cli("train --corpus corpus --out model.vlxm --epochs 2 --batch 8 --seed 2",
                         tmp.path);
    REQUIRE(train.exit_code == 0);
    CHECK(fs::exists(tmp.path / "model.vlxm"));
    const std::string csv = slurp(tmp.path / "model.vlxm.loss.csv");
    CHECK(csv.rfind("epoch,loss\n", 0) == 0);
    CHECK(csv.find("\n1,") != std::string::npos);

    auto stack = run_cli(
        "stack --model model.vlxm --image corpus/img_0.pgm --method occlusion --window 2 "
        "--stride 2 --fill 0.3 --out s.vlxs",
        tmp.path);
    REQUIRE(stack.exit_code == 0);

    // fuse twice from one stack; both load it quickly
    auto f1 = run_cli(
        "fuse --stack s.vlxs --model model.vlxm --prompt \"small circle at the center\" "
        "--out m1.json --png m1.png --image corpus/img_0.pgm",
        tmp.path);
    REQUIRE(f1.exit_code == 0);
    CHECK(f1.out.find("stack: loaded") != std::string::npos);
    CHECK(fs::exists(tmp.path / "m1.png"));

    // explain builds the stack once, second prompt hits the cache and is
    // much faster (the stack sweep dominates)
    auto e1 = run_cli(
        "explain --model model.vlxm --image corpus/img_0.pgm --prompt \"small circle at the "
        "center\" --method occlusion --window 2 --stride 2 --fill 0.3 --out e1.json "
        "--cache-dir cache",
        tmp.path);
    REQUIRE(e1.exit_code == 0);
    CHECK(e1.out.find("stack: built") != std::string::npos);

    auto e2 = run_cli(
        "explain --model model.vlxm --image corpus/img_0.pgm --prompt \"large square at the "
        "lower right\" --method occlusion --window 2 --stride 2 --fill 0.3 --out e2.json "
        "--cache-dir cache",
        tmp.path);
    REQUIRE(e2.exit_code == 0);
    CHECK(e2.out.find("stack: cached") != std::string::npos);
    CHECK(e2.seconds < e1.seconds);

    // JSON output parses and has the documented fields
    auto j = nlohmann::json::parse(slurp(tmp.path / "e2.json"));
    CHECK(j.at("a").get<std::size_t>() == 32);
    CHECK(j.at("values").size() == 32 * 32);
    CHECK(j.at("method").get<std::string>() == "occlusion");

    // a stack from a different model is stale
    REQUIRE(run_cli("train --corpus corpus --out other.vlxm --epochs 1 --batch 8 --seed 77",
                    tmp.path)
                .exit_code == 0);
    auto stale = run_cli(
        "fuse --stack s.vlxs --model other.vlxm --prompt circle --out stale.json", tmp.path);
    CHECK(stale.exit_code == 2);
    CHECK(stale.err.rfind("E_STALE:", 0) == 0);
}

TEST_CASE("seeded pipeline produces bit-identical map json across runs") {
    TempDir tmp("vlx_cli_det");
    const char* script =
        "gen --out c --n 16 --side 32 --seed 11\n"
        "train --corpus c --out m.vlxm --epochs 2 --batch 8 --seed 5\n"
        "stack --model m.vlxm --image c/img_1.pgm --method saliency --out s.vlxs\n"
        "fuse --stack s.vlxs --model m.vlxm --prompt \"small triangle at the upper left\" "
        "--out map.json\n";
    for (const auto& dir : {"run1", "run2"}) {
        fs::create_directories(tmp.path / dir);
        std::istringstream lines(script);
        std::string line;
        while (std::getline(lines, line)) {
            REQUIRE(run_cli(line, tmp.path / dir).exit_code == 0);
        }
    }
    const std::string a = slurp(tmp.path / "run1/map.json");
    CHECK(!a.empty());
    CHECK(a == slurp(tmp.path / "run2/map.json"));
}

TEST_CASE("compare emits report files and metrics") {
    TempDir tmp("vlx_cli_cmp");
    REQUIRE(run_cli("gen --out c --n 12 --side 32 --seed 3", tmp.path).exit_code == 0);
    REQUIRE(run_cli("train --corpus c --out m.vlxm --epochs 1 --batch 4 --seed 1", tmp.path)
                .exit_code == 0);
    auto r = run_cli(
        "compare --model m.vlxm --image c/img_2.pgm --prompts-file c/prompts.json "
        "--methods saliency --out report --mask c/mask_2.pgm",
        tmp.path);
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(slurp(tmp.path / "report/metrics.json"));
    const auto& m = j.at("methods").at("saliency");
    CHECK(m.contains("conventional_interclass_corr"));
    CHECK(m.contains("fused_interclass_corr"));
    CHECK(m.at("per_class").size() == 4);
    for (const auto& cls : {"circle", "square", "triangle", "cross"}) {
        CHECK(fs::exists(tmp.path / ("report/conventional_saliency_" + std::string(cls) + ".png")));
        CHECK(fs::exists(tmp.path / ("report/fused_saliency_" + std::string(cls) + ".png")));
        CHECK(m.at("per_class").at(cls).contains("fused_mass"));
    }
}
