#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(DRF_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) out += buf;
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path workdir() {
    const auto dir = fs::temp_directory_path() / "drf_cli_test";
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(Cli, SynthTrainPredictEval) {
    const auto dir = workdir();
    const auto data = (dir / "train.csv").string();
    auto r = run("synth --task piecewise --n 200 --noise 0.2 --seed 1 --out " + data);
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("RESULT rows 200, task piecewise"), std::string::npos);

    write(dir / "config.json",
          R"({"trees": 2, "depth": 2, "output_units": 8, "hidden_layers": [8], "max_iterations": 60,
              "batches_per_leaf_update": 10})");
    const auto model = (dir / "model.json").string();
    r = run("train --config " + (dir / "config.json").string() + " --data " + data + " --out " + model);
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("RESULT train_mae"), std::string::npos);
    EXPECT_NE(r.out.find("steps 60, leaf_updates 6"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(model + ".report.json"));

    const auto pred = (dir / "pred.csv").string();
    r = run("predict --model " + model + " --data " + data + " --out " + pred);
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("RESULT rows 200, d_y 1"), std::string::npos);

    r = run("eval --pred " + pred + " --truth " + data + " --metrics " + (dir / "m.json").string());
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("RESULT MAE "), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "m.json"));
}

TEST(Cli, EvalHandExample) {
    const auto dir = workdir();
    write(dir / "p.csv", "y_pred0\n21\n24\n43\n60\n");
    write(dir / "t.csv", "x0,y0\n0,20\n0,30\n0,40\n0,50\n");
    const auto r = run("eval --pred " + (dir / "p.csv").string() + " --truth " + (dir / "t.csv").string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("RESULT MAE 5.0000, CS 50.0000"), std::string::npos) << r.out;
}

TEST(Cli, ExitCodes) {
    const auto dir = workdir();
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("--help").code, 0);
    EXPECT_EQ(run("synth --task spiral --n 10 --noise 0 --seed 1 --out " + (dir / "s.csv").string()).code, 1);

    write(dir / "bad.json", R"({"trees": 2, "output_units": 8, "hidden_layers": []})");
    write(dir / "ok.json", R"({"trees": 1, "depth": 1, "output_units": 2, "hidden_layers": []})");
    write(dir / "bad.csv", "x0,y0\n1,2\nfoo,3\n");
    write(dir / "good.csv", "x0,y0\n1,2\n2,3\n3,4\n");
    const auto out = (dir / "m.json").string();
    EXPECT_EQ(run("train --config " + (dir / "bad.json").string() + " --data " + (dir / "good.csv").string() +
                  " --out " + out).code,
              1);
    EXPECT_EQ(run("train --config " + (dir / "ok.json").string() + " --data " + (dir / "bad.csv").string() +
                  " --out " + out).code,
              2);
    EXPECT_EQ(run("predict --model " + (dir / "missing.json").string() + " --data " + (dir / "good.csv").string() +
                  " --out " + (dir / "p.csv").string()).code,
              1);
    write(dir / "p2.csv", "y_pred0\n1\n");
    EXPECT_EQ(run("eval --pred " + (dir / "p2.csv").string() + " --truth " + (dir / "good.csv").string()).code, 2);
}
