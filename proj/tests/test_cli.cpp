#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scala/cli/cli.hpp"
#include "scala/cli/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Invocation {
    int code = -1;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "scala-opt");
    std::vector<const char*> argv;
    for (const std::string& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    Invocation r;
    r.code = scala::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

const std::string kSmoke = std::string(SCALA_SOURCE_DIR) + "/configs/smoke.json";
const std::string kTheory = std::string(SCALA_SOURCE_DIR) + "/configs/theory_example.json";

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("scala_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    std::string dir(const std::string& name) const { return (root_ / name).string(); }

    std::string write_json(const std::string& name, const json& j) const {
        const fs::path p = root_ / name;
        std::ofstream(p) << j.dump();
        return p.string();
    }

    fs::path root_;
};

} // namespace

TEST(Manifest, Sha256KnownVector) {
    EXPECT_EQ(scala::cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(scala::cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_F(CliTest, TrainWritesSummaryAndManifest) {
    const Invocation r = invoke({"train", "--config", kSmoke, "--set", "mode=baseline", "--out", dir("run")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j.at("summary").at("mode"), "baseline");
    for (const char* f : {"summary.json", "metrics.csv", "metrics.jsonl", "final_model.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(root_ / "run" / f)) << f;
    const json m = scala::cli::read_manifest(root_ / "run" / "manifest.json");
    EXPECT_EQ(m.at("config").at("mode"), "baseline");
    EXPECT_EQ(m.at("artifacts").size(), 4u);
    EXPECT_NE(r.err.find("[scala-opt]"), std::string::npos);
}

TEST_F(CliTest, ClipOrderViolationIsAConfigError) {
    const Invocation r = invoke({"train", "--config", kSmoke, "--set", "optimizer.clip-hi=0.5", "--set",
                                 "optimizer.clip-lo=1.0", "--out", dir("run")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("optimizer.clip"), std::string::npos) << r.err;
    EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, UnknownKeyAndBadVerb) {
    EXPECT_EQ(invoke({"train", "--config", kSmoke, "--set", "batch.size=3", "--out", dir("x")}).code, 2);
    EXPECT_EQ(invoke({"bogus"}).code, 2);
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"train", "--config", kSmoke}).code, 2);
}

TEST_F(CliTest, SameInvocationSameArtifacts) {
    ASSERT_EQ(invoke({"train", "--config", kSmoke, "--out", dir("a")}).code, 0);
    ASSERT_EQ(invoke({"train", "--config", kSmoke, "--out", dir("b")}).code, 0);
    EXPECT_EQ(scala::cli::hash_artifacts(root_ / "a"), scala::cli::hash_artifacts(root_ / "b"));
}

TEST_F(CliTest, ManifestReproducesArtifacts) {
    ASSERT_EQ(invoke({"train", "--config", kSmoke, "--seed", "5", "--out", dir("a")}).code, 0);
    const Invocation r = invoke({"train", "--manifest", dir("a") + "/manifest.json", "--out", dir("b")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(json::parse(r.out).at("manifest_match").get<bool>());
    EXPECT_EQ(scala::cli::hash_artifacts(root_ / "a"), scala::cli::hash_artifacts(root_ / "b"));
    EXPECT_EQ(scala::cli::read_manifest(root_ / "b" / "manifest.json").at("seed"), 5);
}

TEST_F(CliTest, NumericalAbortExitsWithThree) {
    const Invocation r = invoke({"train", "--config", kSmoke, "--set", "dataset.kind=regression", "--set",
                                 "dataset.noise=1e300", "--out", dir("run")});
    EXPECT_EQ(r.code, 3);
    const json j = json::parse(r.out);
    EXPECT_TRUE(j.at("summary").at("aborted").get<bool>());
    EXPECT_EQ(j.at("summary").at("abort_step"), 0);
}

TEST_F(CliTest, PlanPrintsPrescription) {
    Invocation r = invoke({"plan", "--constants", kTheory, "--steps", "100"});
    ASSERT_EQ(r.code, 0) << r.err;
    json j = json::parse(r.out);
    EXPECT_EQ(j.at("eta").get<double>(), 0.01);
    EXPECT_DOUBLE_EQ(j.at("batch_size").get<double>(), 4.0);
    EXPECT_DOUBLE_EQ(j.at("bound").get<double>(), 0.88);

    r = invoke({"plan", "--constants", kTheory, "--steps", "1"});
    j = json::parse(r.out);
    // 2 kappa D G = 8 of 8.08.
    EXPECT_DOUBLE_EQ(j.at("bound").get<double>(), 8.08);

    const std::string wide = write_json("c.json", {{"alpha", {1.0}}, {"C", 1.0}, {"S", 2.0}});
    r = invoke({"plan", "--constants", wide, "--steps", "10"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out).at("inner_iters"), "undefined (S/C >= 2)");

    const std::string narrow =
        write_json("d.json", {{"alpha", {1.0}}, {"C", 1.0}, {"S", 1.5}, {"eps-inner", 0.08}});
    EXPECT_EQ(json::parse(invoke({"plan", "--constants", narrow, "--steps", "10"}).out).at("inner_iters"), 10);

    EXPECT_EQ(invoke({"plan", "--constants", write_json("e.json", {{"alpha", {-1.0}}}), "--steps", "10"}).code, 2);
    EXPECT_EQ(invoke({"plan", "--constants", write_json("f.json", {{"beta", 1.0}}), "--steps", "10"}).code, 2);
}

TEST_F(CliTest, CompareTabulatesEachConfig) {
    json cfg = json::parse(std::ifstream(kSmoke));
    cfg["mode"] = "baseline";
    const std::string base = write_json("base.json", cfg);
    cfg["mode"] = "scala";
    const std::string scala = write_json("scala.json", cfg);
    const Invocation r = invoke({"compare", base, scala, "--out", dir("cmp")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream lines(r.out);
    std::vector<std::string> rows;
    for (std::string line; std::getline(lines, line);)
        rows.push_back(line);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].rfind("name,mode,status,final_test_acc", 0), 0u);
    EXPECT_NE(rows[1].find(",baseline,ok,"), std::string::npos);
    EXPECT_NE(rows[2].find(",scala,ok,"), std::string::npos);
    EXPECT_TRUE(fs::exists(root_ / "cmp" / "comparison.csv"));

    EXPECT_EQ(invoke({"compare", "--out", dir("empty")}).code, 2);
}

TEST_F(CliTest, AblateRunsScalaPlusRequestedModes) {
    const Invocation r =
        invoke({"ablate", "--config", kSmoke, "--out", dir("ab"), "--modes", "no-delay", "adam", "no-pga"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream lines(r.out);
    std::vector<std::string> rows;
    for (std::string line; std::getline(lines, line);)
        rows.push_back(line);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[1].rfind("scala,scala,ok", 0), 0u);
    EXPECT_EQ(rows[2].rfind("ablation-no-delay,", 0), 0u);
    EXPECT_EQ(rows[3].rfind("ablation-adam,", 0), 0u);
    EXPECT_EQ(rows[4].rfind("ablation-no-pga,", 0), 0u);
    EXPECT_EQ(invoke({"ablate", "--config", kSmoke, "--out", dir("x"), "--modes", "sideways"}).code, 2);
}

TEST_F(CliTest, ProbesPrintJson) {
    ASSERT_EQ(invoke({"train", "--config", kSmoke, "--out", dir("run")}).code, 0);
    const std::string ckpt = dir("run") + "/final_model.json";
    Invocation r = invoke({"sharpness", "--config", kSmoke, "--checkpoint", ckpt, "--samples", "64"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(json::parse(r.out).at("top").is_number());
    r = invoke({"moreau", "--config", kSmoke, "--checkpoint", ckpt, "--samples", "64", "--alpha", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_TRUE(j.at("squared_norm").is_number());
    EXPECT_EQ(j.at("alpha").at(0), 2.0);
    EXPECT_EQ(invoke({"sharpness", "--config", kSmoke, "--set", "model.hidden=[3]", "--checkpoint", ckpt}).code, 2);
}
