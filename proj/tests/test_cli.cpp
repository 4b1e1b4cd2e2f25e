#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "lingo/config.hpp"
#include "lingo/errors.hpp"
#include "lingo/experiment.hpp"
#include "testutil.hpp"

using namespace lingo;

TEST_CASE("kv config parsing") {
    const KvConfig kv = KvConfig::parse_string(
        "# comment\n"
        "seed = 7\n"
        "languages.old = alba , brin\n"
        "adapt.beta = 0.25  # trailing comment\n"
        "decode.lid_renormalize = false\n"
        "\n");
    CHECK(kv.get_u64("seed", 0) == 7);
    CHECK(kv.get_list("languages.old", {}) == std::vector<std::string>{"alba", "brin"});
    CHECK(kv.get_double("adapt.beta", 0.0) == doctest::Approx(0.25));
    CHECK(kv.get_bool("decode.lid_renormalize", true) == false);
    CHECK(kv.get_int("missing", 9) == 9);
    CHECK_THROWS_AS(KvConfig::parse_string("no equals sign"), ConfigError);
    CHECK_THROWS_AS(kv.get_int("languages.old", 0), ConfigError);
}

TEST_CASE("experiment config resolves, validates and echoes deterministically") {
    KvConfig kv;
    kv.set("seed", "11");
    kv.set("quick", "true");
    const ExperimentConfig cfg = ExperimentConfig::from_kv(kv);
    CHECK(cfg.seed == 11);
    CHECK(cfg.adapt.epochs == 2);
    CHECK(cfg.adapt.batch_size == 4);
    CHECK(cfg.decode.top_n == 2);
    CHECK(cfg.decode.min_words == 5);
    CHECK(cfg.decode.max_overlap == 3);
    CHECK(cfg.beta == doctest::Approx(0.1));
    CHECK(cfg.replay_fraction == doctest::Approx(0.1));
    const std::string echo = cfg.to_kv().dump();
    CHECK(echo == cfg.to_kv().dump());
    CHECK(echo.find("seed = 11\n") != std::string::npos);

    KvConfig bad;
    bad.set("languages.old", "only_one");
    CHECK_THROWS_AS(ExperimentConfig::from_kv(bad), ConfigError);
    KvConfig clash;
    clash.set("languages.new", "alba, x");
    CHECK_THROWS_AS(ExperimentConfig::from_kv(clash), ConfigError);
}

TEST_CASE("gen-data is idempotent: identical bytes for identical config") {
    testutil::TempDir dir_a("gen_a");
    testutil::TempDir dir_b("gen_b");
    ExperimentConfig cfg = testutil::small_config();
    cfg.sizes = SplitSizes{12, 3, 3};
    cfg.out_dir = dir_a.path();
    run_gen_data(cfg);
    run_gen_data(cfg);  // rerun into the same directory
    cfg.out_dir = dir_b.path();
    run_gen_data(cfg);

    for (const std::string lang : {"alba", "brin", "cela", "dora"}) {
        for (const std::string split : {"train", "dev", "test"}) {
            const std::string rel = "/data/" + lang + "." + split + ".jsonl";
            const std::string a = testutil::read_file(dir_a.path() + rel);
            CHECK(!a.empty());
            CHECK(a == testutil::read_file(dir_b.path() + rel));
        }
    }
    CHECK(testutil::read_file(dir_a.path() + "/vocab.txt") ==
          testutil::read_file(dir_b.path() + "/vocab.txt"));
    // every run leaves a frozen copy of the resolved configuration
    const std::string echo = testutil::read_file(dir_a.path() + "/config.resolved");
    CHECK(echo.find("data.train = 12") != std::string::npos);
}

TEST_CASE("missing upstream artifacts name the missing file") {
    testutil::TempDir dir("missing");
    ExperimentConfig cfg = testutil::small_config();
    cfg.out_dir = dir.path();
    try {
        run_pretrain(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("vocab.txt") != std::string::npos);
        CHECK(what.find("gen-data") != std::string::npos);
    }
}

#ifdef LINGO_BIN
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LINGO_BIN) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli exit codes: success, config error, invariant violation") {
    testutil::TempDir dir("cli");
    // 2: nonexistent config file
    CHECK(run_cli("gen-data --config " + dir.path() + "/absent.cfg") == 2);
    // 0: valid tiny gen-data
    const std::string cfg_path = dir.path() + "/tiny.cfg";
    {
        std::ofstream out(cfg_path);
        out << "quick = true\ndata.train = 8\ndata.dev = 2\ndata.test = 2\n";
        out << "out = " << dir.path() << "/run\n";
    }
    CHECK(run_cli("gen-data --config " + cfg_path) == 0);
    // 2: adapt before pretrain (missing checkpoint artifact)
    CHECK(run_cli("adapt --strategy er --config " + cfg_path) == 2);
    // 3: an unreachable learnability gate is an invariant violation
    {
        std::ofstream out(cfg_path, std::ios::app);
        out << "pretrain.epochs = 1\npretrain.gate_wer = 0.000001\n";
    }
    CHECK(run_cli("pretrain --config " + cfg_path) == 3);
}
#endif
