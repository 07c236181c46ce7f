// Drives the installed binary end to end through a miniature pipeline.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("crowdkd_cli_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd =
        std::string(CROWDKD_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

}  // namespace

TEST_CASE("full pipeline: synth, train-teacher, distill, wrap, evaluate") {
    TempDir tmp;
    const std::string data = (tmp.path / "data").string();

    auto synth = run_cli("synth --n 3 --n-test 2 --height 32 --width 32 --count-lo 1 --count-hi 3 --seed 1 --out " +
                             data,
                         tmp.path);
    REQUIRE(synth.exit_code == 0);
    CHECK(fs::exists(fs::path(data) / "manifest.json"));
    CHECK(fs::exists(fs::path(data) / "config.synth.resolved.json"));

    SUBCASE("a second synth run refuses to overwrite without --force") {
        auto again = run_cli("synth --n 3 --height 32 --width 32 --out " + data, tmp.path);
        CHECK(again.exit_code != 0);
        CHECK(again.err.find("error") != std::string::npos);
        auto forced = run_cli("synth --n 3 --n-test 2 --height 32 --width 32 --count-lo 1 --count-hi 3 --seed 1 "
                              "--force --out " +
                                  data,
                              tmp.path);
        CHECK(forced.exit_code == 0);
    }

    SUBCASE("training commands run and the artifacts evaluate") {
        const std::string tdir = (tmp.path / "teacher").string();
        auto teach = run_cli("train-teacher --data-root " + data + " --out " + tdir +
                                 " --profile toy --epochs 3 --seed 1",
                             tmp.path);
        REQUIRE_MESSAGE(teach.exit_code == 0, teach.err);
        const json tsum = json::parse(teach.out);
        CHECK(fs::exists(tsum.at("checkpoint").get<std::string>()));
        CHECK(fs::exists(fs::path(tdir) / "train_log.jsonl"));

        const std::string sdir = (tmp.path / "student").string();
        auto dist = run_cli("distill --data-root " + data + " --out " + sdir + " --teacher " +
                                tsum.at("checkpoint").get<std::string>() +
                                " --rounds 1 --cpr 1/4 --epochs 2 --seed 1",
                            tmp.path);
        REQUIRE_MESSAGE(dist.exit_code == 0, dist.err);
        const json dsum = json::parse(dist.out);
        const std::string student_ckpt = dsum.at("checkpoint").get<std::string>();

        auto wrap = run_cli("wrap --checkpoint " + student_ckpt + " --rounds 2 --out " +
                                (tmp.path / "wrapped.ckpt").string(),
                            tmp.path);
        REQUIRE_MESSAGE(wrap.exit_code == 0, wrap.err);

        for (const std::string ckpt : {student_ckpt, (tmp.path / "wrapped.ckpt").string()}) {
            auto eval = run_cli("evaluate --checkpoint " + ckpt + " --data-root " + data +
                                    " --split test --game-max-l 2",
                                tmp.path);
            REQUIRE_MESSAGE(eval.exit_code == 0, eval.err);
            const json r = json::parse(eval.out);
            CHECK(r.at("n").get<int>() == 2);
            CHECK(std::isfinite(r.at("mae").get<double>()));
            CHECK(std::isfinite(r.at("mse").get<double>()));
            CHECK(r.at("game").contains("2"));
        }
    }
}

TEST_CASE("usage and config errors use distinct exit codes") {
    TempDir tmp;
    auto unknown = run_cli("no-such-command", tmp.path);
    CHECK(unknown.exit_code == 2);
    auto badflag = run_cli("synth --bogus 1 --out x", tmp.path);
    CHECK(badflag.exit_code == 2);
    CHECK_FALSE(badflag.err.empty());

    // config validation failures exit with 3
    const fs::path cfg = tmp.path / "bad.json";
    std::ofstream(cfg) << "{\"no_such_key\": 1}";
    auto badcfg = run_cli("distill --config " + cfg.string() + " --data-root d --out " +
                              (tmp.path / "o").string(),
                          tmp.path);
    CHECK(badcfg.exit_code == 3);

    auto badcpr = run_cli("distill --data-root d --teacher t --cpr 2/3 --out " + (tmp.path / "o2").string(),
                          tmp.path);
    CHECK(badcpr.exit_code == 3);
}
