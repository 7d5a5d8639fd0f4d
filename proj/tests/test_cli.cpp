#include <gtest/gtest.h>

#include <wavemlp/phase_map.hpp>
#include <wavemlp/run_config.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
};

CliResult cli(const std::string& args) {
    const std::string cmd = std::string(WAVEMLP_CLI) + " " + args + " 2>&1";
    CliResult r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string value_of(const std::string& out, const std::string& key) {
    const std::string needle = key + "=";
    std::size_t pos = 0;
    while ((pos = out.find(needle, pos)) != std::string::npos) {
        if (pos == 0 || out[pos - 1] == '\n') {
            const std::size_t end = out.find('\n', pos);
            return out.substr(pos + needle.size(), end - pos - needle.size());
        }
        ++pos;
    }
    return {};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wavemlp_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Small enough to train in about a second.
fs::path small_run_config(const fs::path& dir) {
    const fs::path p = dir / "run.json";
    std::ofstream(p) << R"({"model":{"preset":"tiny","phase_mode":"depthwise"},
        "task":{"train_size":64,"val_size":32},
        "train":{"epochs":2,"batch_size":16,"precision":"f32"},
        "expect":{"min_train_acc":0.99,"max_steps":1}})";
    return p;
}

} // namespace

TEST(Cli, SuperposeCancellation) {
    const CliResult r = cli("superpose --a1 1 --a2 1 --t1 0 --t2 3.14159265");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_LT(std::abs(std::stod(value_of(r.out, "amplitude"))), 1e-7);
    EXPECT_EQ(value_of(r.out, "status"), "PASS");
    EXPECT_EQ(value_of(r.out, "seed"), "0");
}

TEST(Cli, SuperposeQuarterTurn) {
    const CliResult r = cli("superpose --a1 1 --a2 1 --t1 0 --t2 1.5707963267948966 --seed 5");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NEAR(std::stod(value_of(r.out, "phase")), 0.78539816339744828, 1e-12);
    EXPECT_EQ(value_of(r.out, "seed"), "5");
}

TEST(Cli, SuperposeUndefinedPhase) {
    const CliResult r = cli("superpose --a1 0 --a2 0 --t1 0.1 --t2 0.2");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(value_of(r.out, "phase"), "undefined");
}

TEST(Cli, CountMatchesTable) {
    const CliResult r = cli("count --preset T --res 224");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("params 17M±10%: PASS, flops 2.4G±10%: PASS"), std::string::npos) << r.out;
    EXPECT_EQ(value_of(r.out, "params"), "16076800");
    EXPECT_EQ(value_of(r.out, "seed"), "0");
}

TEST(Cli, CountTinyHasNoReference) {
    const CliResult r = cli("count --preset tiny --res 8");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(value_of(r.out, "params"), "29376");
    EXPECT_EQ(value_of(r.out, "flops"), "32928");
    EXPECT_EQ(value_of(r.out, "reference"), "none");
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("count --bogus").code, 2);
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("count --preset XL").code, 2);
    EXPECT_EQ(cli("superpose --a1 1").code, 2);
    EXPECT_EQ(cli("phase-map --stage 2").code, 2);
    EXPECT_EQ(cli("train --config /nonexistent.json").code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const fs::path dir = scratch("bad_config");
    std::ofstream(dir / "bad.json") << R"({"train":{"momentum":0.9}})";
    const CliResult r = cli("train --config " + (dir / "bad.json").string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("momentum"), std::string::npos);
    EXPECT_EQ(cli("ablate --seeds 0,x --epochs 1").code, 2);
    EXPECT_EQ(cli("superpose --a1 -1 --a2 1 --t1 0 --t2 0").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").code, 0); }

TEST(Cli, Selftest) {
    const CliResult r = cli("selftest");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(value_of(r.out, "status"), "PASS");
    EXPECT_EQ(value_of(r.out, "seed"), "0");
}

TEST(Cli, CheckGradsTiny) {
    const CliResult r = cli("check-grads --preset tiny --seed 3");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(value_of(r.out, "seed"), "3");
    EXPECT_EQ(value_of(r.out, "status"), "PASS");
}

TEST(Cli, TrainWritesArtifactsAndPhaseMapReadsCheckpoint) {
    const fs::path dir = scratch("train");
    const fs::path cfg = small_run_config(dir);
    const CliResult r = cli("train --config " + cfg.string() + " --seed 2 --out " + (dir / "run").string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(value_of(r.out, "seed"), "2");
    EXPECT_EQ(value_of(r.out, "steps"), "8");
    for (const char* f : {"history_steps.csv", "history_epochs.csv", "run.json", "model.bin"})
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    const wavemlp::RunConfig saved = wavemlp::load_run_config((dir / "run" / "run.json").string());
    EXPECT_EQ(saved.train.seed, 2u);
    EXPECT_EQ(saved.train.epochs, 2u);

    // The expectation in the config cannot be met in one step.
    EXPECT_EQ(cli("train --config " + cfg.string() + " --check").code, 1);

    const CliResult pm = cli("phase-map --checkpoint " + (dir / "run" / "model.bin").string() +
                       " --stage 4 --branch w --window 3 --out " + (dir / "maps").string());
    ASSERT_EQ(pm.code, 0) << pm.out;
    EXPECT_EQ(value_of(pm.out, "grid"), "2x2");
    EXPECT_EQ(value_of(pm.out, "roundtrip"), "PASS");
    const fs::path csv = dir / "maps" / "phase_map_stage4_w.csv";
    const fs::path pgm = dir / "maps" / "phase_map_stage4_w.pgm";
    ASSERT_TRUE(fs::exists(csv));
    ASSERT_TRUE(fs::exists(pgm));
    const wavemlp::PhaseMap m = wavemlp::parse_phase_map_csv(wavemlp::read_binary_file(csv.string()));
    EXPECT_EQ(m.grid_h, 2u);
    EXPECT_EQ(m.window, 3u);
    const wavemlp::GrayImage img = wavemlp::decode_pgm(wavemlp::read_binary_file(pgm.string()));
    EXPECT_EQ(img, wavemlp::phase_map_image(m));
    fs::remove_all(dir);
}

TEST(Cli, AblateSingleAxisWritesCsv) {
    const fs::path dir = scratch("ablate");
    const fs::path cfg = small_run_config(dir);
    const CliResult r = cli("ablate --config " + cfg.string() + " --axis estimator --seeds 0 --epochs 1 --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.out;
    std::ifstream in(dir / "ablation_estimator.csv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "axis,setting,label,params,flops,seeds,val_acc_mean,val_acc_sd,val_acc_seed0");
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line.substr(0, line.find(",", line.find(",", 10) + 1)));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], "estimator,none,Baseline");
    EXPECT_EQ(rows[3], "estimator,channel_fc,Channel-FC");
    fs::remove_all(dir);
}
