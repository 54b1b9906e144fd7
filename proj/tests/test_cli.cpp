#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "config.hpp"
#include "segkit/image_io.hpp"

using namespace segkit;
using namespace segkit::cli;
namespace fs = std::filesystem;

namespace {

const char* kBin = SEGKIT_BIN;

struct RunResult {
    int code = -1;
    std::string out;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path p = fs::temp_directory_path() / "segkit_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    const fs::path log = work_dir() / "last_run.log";
    const std::string cmd = std::string(kBin) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_tiny_config(const fs::path& path, const fs::path& root, const fs::path& out) {
    std::ofstream cfg(path);
    cfg << R"({
  "data_root": ")" << root.string() << R"(",
  "output_dir": ")" << out.string() << R"(",
  "seed": 5,
  "val_fold": 0,
  "network": {"style": "unet", "base_width": 4, "depth": 2},
  "schedule": {"phases": [{"epochs": 1, "rate": 0.001}], "batch_size": 8},
  "preprocess": {"crop": 0},
  "postprocess": {"threshold": 0.3, "min_area": 50}
})";
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2, help exits 0") {
    CHECK(run("").code == 2);
    CHECK(run("--no-such-flag synth").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("--help").code == 0);
    CHECK(run("predict").code == 2); // missing required options
}

TEST_CASE("synth then split: deterministic table, printed sizes") {
    const fs::path root = work_dir() / "data";
    CHECK(run("synth --out " + root.string() + " --count 40 --size 32 --seed 3").code == 0);
    CHECK(fs::exists(root / "images" / "synth_0.png"));
    CHECK(fs::exists(root / "masks" / "synth_0.png"));

    const RunResult s1 = run("split --data-root " + root.string() + " --k 5 --seed 7");
    CHECK(s1.code == 0);
    CHECK(s1.out.find("sizes=8,8,8,8,8") != std::string::npos);
    const std::string table1 = slurp(root / "folds.csv");

    CHECK(run("split --data-root " + root.string() + " --k 5 --seed 7").code == 0);
    CHECK(slurp(root / "folds.csv") == table1); // same seed, identical bytes

    // empty directory: nonzero exit, no table written
    const fs::path empty = work_dir() / "empty";
    fs::create_directories(empty / "images");
    const RunResult bad = run("split --data-root " + empty.string() + " --k 5 --seed 7");
    CHECK(bad.code == 1);
    CHECK_FALSE(fs::exists(empty / "folds.csv"));
}

TEST_CASE("config round trip: parse, serialize, parse is identity") {
    RunConfig cfg;
    cfg.data_root = "somewhere";
    cfg.seed = 42;
    cfg.network.style = NetStyle::residual_add;
    cfg.network.base_width = 16;
    cfg.schedule.phases = {{3, 0.01}, {2, 0.001}};
    cfg.loss_variant = JaccardVariant::per_pixel;
    cfg.threshold = 0.25f;
    cfg.min_area = 123;
    cfg.augment.rotation_deg = 30.0;

    const RunConfig back = parse_config(serialize_config(cfg));
    // schedule seed follows the top-level seed on parse
    RunConfig want = cfg;
    want.schedule.seed = cfg.seed;
    CHECK(back == want);
    CHECK(serialize_config(back) == serialize_config(want));
}

TEST_CASE("config errors list every offending key, exit code 2") {
    const fs::path bad = work_dir() / "bad.json";
    {
        std::ofstream out(bad);
        out << R"({"network": {"style": "alexnet"},
                   "postprocess": {"threshold": 7.0, "connectivity": 5}})";
    }
    const RunResult r = run("--config " + bad.string() + " synth --count 1");
    CHECK(r.code == 2);
    CHECK(r.out.find("network.style") != std::string::npos);
    CHECK(r.out.find("postprocess.threshold") != std::string::npos);
    CHECK(r.out.find("postprocess.connectivity") != std::string::npos);
}

TEST_CASE("train, predict, detect, evaluate chain") {
    const fs::path root = work_dir() / "chain_data";
    const fs::path out = work_dir() / "chain_out";
    const fs::path cfg = work_dir() / "chain.json";
    write_tiny_config(cfg, root, out);

    REQUIRE(run("synth --out " + root.string() + " --count 30 --size 32 --seed 11").code == 0);
    REQUIRE(run("--config " + cfg.string() + " split --k 5").code == 0);

    // train: 1 epoch, history row count matches the schedule
    const RunResult tr = run("--config " + cfg.string() + " train");
    CHECK(tr.code == 0);
    const std::string history = slurp(out / "history.csv");
    CHECK(history.find("epoch,phase_rate,train_loss,val_iou,val_dice") == 0);
    CHECK(std::count(history.begin(), history.end(), '\n') == 2); // header + 1 epoch
    CHECK(fs::exists(out / "checkpoint_final.ckpt"));
    CHECK(fs::exists(out / "checkpoint_best.ckpt"));

    // resume with nothing left re-emits identical metrics
    const RunResult re = run("--config " + cfg.string() + " train --resume");
    CHECK(re.code == 0);
    CHECK(re.out.find("nothing to resume") != std::string::npos);
    CHECK(slurp(out / "history.csv") == history);

    // predict: one {0,255} PNG per input, bitwise idempotent
    const std::string ckpt = (out / "checkpoint_final.ckpt").string();
    REQUIRE(run("--config " + cfg.string() + " predict --checkpoint " + ckpt + " --images " +
                (root / "images").string() + " --out " + (out / "preds").string())
                .code == 0);
    std::size_t n_preds = 0;
    for (const auto& e : fs::directory_iterator(out / "preds")) {
        ++n_preds;
        const BinaryMask m = read_mask(e.path().string());
        for (std::uint8_t v : m.data) {
            CHECK((v == 0 || v == 255));
        }
    }
    CHECK(n_preds == 30);
    const std::string one = slurp(out / "preds" / "synth_0.png");
    REQUIRE(run("--config " + cfg.string() + " predict --checkpoint " + ckpt + " --images " +
                (root / "images").string() + " --out " + (out / "preds2").string())
                .code == 0);
    CHECK(slurp(out / "preds2" / "synth_0.png") == one);

    // detect from the ground-truth masks: known record shapes
    const fs::path jsonl = out / "detections.jsonl";
    REQUIRE(run("--config " + cfg.string() + " detect --masks " + (root / "masks").string() +
                " --out " + jsonl.string())
                .code == 0);
    std::ifstream det(jsonl);
    std::string line;
    std::size_t records = 0, present = 0, absent = 0;
    while (std::getline(det, line)) {
        ++records;
        CHECK(line.find("\"id\"") != std::string::npos);
        CHECK(line.find("\"present\"") != std::string::npos);
        CHECK(line.find("\"lesions\"") != std::string::npos);
        if (line.find("\"present\":true") != std::string::npos) {
            ++present;
            CHECK(line.find("\"x\"") != std::string::npos);
            CHECK(line.find("\"y\"") != std::string::npos);
            CHECK(line.find("\"area\"") != std::string::npos);
        } else {
            ++absent;
            CHECK(line.find("\"lesions\":[]") != std::string::npos);
        }
    }
    CHECK(records == 30);
    CHECK(present > 0);
    CHECK(absent > 0); // zero-lesion frames report the normal condition

    // evaluate: Table-style columns and the detection/histogram report
    const RunResult ev =
        run("--config " + cfg.string() + " evaluate --checkpoint " + ckpt + " --folds 0");
    CHECK(ev.code == 0);
    const std::string csv = slurp(out / "evaluate_report.csv");
    CHECK(csv.find("Model,IOU,Dice,Time") == 0);
    CHECK(csv.find("unet,") != std::string::npos);

    const std::string js = slurp(out / "evaluate_report.json");
    CHECK(js.find("\"timing_note\"") != std::string::npos);
    CHECK(js.find("\"precision\"") != std::string::npos);
    CHECK(js.find("\"lesions_per_image\"") != std::string::npos);

    // missing checkpoint is a runtime failure
    CHECK(run("--config " + cfg.string() + " evaluate --checkpoint missing.ckpt").code == 1);
}

TEST_CASE("train without data root fails naming the path") {
    const fs::path cfg = work_dir() / "nodata.json";
    {
        std::ofstream out(cfg);
        out << R"({"data_root": "no_such_dir_xyz", "output_dir": "o"})";
    }
    const RunResult r = run("--config " + cfg.string() + " train");
    CHECK(r.code == 1);
    CHECK(r.out.find("no_such_dir_xyz") != std::string::npos);
}

} // TEST_SUITE
