#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "segkit/errors.hpp"

using namespace segkit;
using namespace segkit::cli;

namespace {

// exit codes: 0 success, 1 runtime failure, 2 invalid usage
constexpr int kUsageError = 2;

struct Cli {
    GlobalFlags flags;
    std::string config_path;
    RunConfig cfg;

    void load() {
        if (!config_path.empty()) cfg = load_config(config_path);
        if (flags.threads == 0) flags.threads = cfg.threads;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"segkit: lesion segmentation, detection and localization toolkit"};
    app.require_subcommand(1);

    Cli cli;
    app.add_option("--config", cli.config_path, "JSON run configuration");
    app.add_flag("--quiet", cli.flags.quiet, "suppress progress output");
    app.add_option("--threads", cli.flags.threads,
                   "worker thread count (default: hardware, 1 = fully deterministic)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic blob dataset");
    std::string synth_out = "synth_data";
    std::size_t synth_count = 200, synth_size = 64, synth_lesions = 3;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output dataset root");
    synth->add_option("--count", synth_count, "number of samples");
    synth->add_option("--size", synth_size, "square image extent");
    synth->add_option("--max-lesions", synth_lesions, "maximum lesions per image");
    synth->add_option("--seed", synth_seed, "generator seed");

    // split
    auto* split = app.add_subcommand("split", "write the cross-validation fold table");
    std::string split_root, split_out;
    int split_k = 5;
    std::uint64_t split_seed = 0;
    bool split_seed_set = false, split_root_set = false;
    split->add_option("--data-root", split_root, "dataset root")
        ->each([&](const std::string&) { split_root_set = true; });
    split->add_option("--k", split_k, "fold count");
    split->add_option("--seed", split_seed, "shuffle seed")
        ->each([&](const std::string&) { split_seed_set = true; });
    split->add_option("--out", split_out, "fold table path (default <root>/folds.csv)");

    // train
    auto* train = app.add_subcommand("train", "train per the configured schedule");
    int train_val_fold = -1;
    bool train_resume = false;
    train->add_option("--val-fold", train_val_fold, "validation fold id");
    train->add_flag("--resume", train_resume, "continue from checkpoint_final.ckpt");

    // predict
    auto* predict = app.add_subcommand("predict", "write {0,255} mask PNGs");
    std::string predict_ckpt, predict_out = "predictions";
    std::vector<std::string> predict_images;
    predict->add_option("--checkpoint", predict_ckpt, "trained checkpoint")->required();
    predict->add_option("--images", predict_images, "image directory or explicit files")
        ->required();
    predict->add_option("--out", predict_out, "output directory");
    float predict_threshold = -1.0f;
    predict->add_option("--threshold", predict_threshold, "binarization threshold override");

    // detect
    auto* det = app.add_subcommand("detect", "emit JSON-lines lesion detections");
    std::string det_ckpt, det_images, det_masks, det_out = "detections.jsonl";
    det->add_option("--checkpoint", det_ckpt, "trained checkpoint (with --images)");
    det->add_option("--images", det_images, "image directory (needs --checkpoint)");
    det->add_option("--masks", det_masks, "already-binarized mask directory");
    det->add_option("--out", det_out, "output JSONL path");
    std::size_t det_min_area = std::size_t(-1);
    det->add_option("--min-area", det_min_area, "minimum component area override");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "segmentation + detection report");
    std::string eval_ckpt;
    std::vector<int> eval_folds;
    bool eval_timing = false;
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--folds", eval_folds, "fold ids to evaluate (default: all)");
    eval->add_flag("--timing", eval_timing, "median of 20 warm timing repetitions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        cli.load();
    } catch (const config_error& e) {
        std::cerr << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_out, synth_count, synth_size, synth_lesions, synth_seed,
                             cli.flags);
        if (split->parsed()) {
            const std::string root = split_root_set ? split_root : cli.cfg.data_root;
            const std::uint64_t seed = split_seed_set ? split_seed : cli.cfg.seed;
            const std::string out = split_out.empty() ? root + "/folds.csv" : split_out;
            return cmd_split(root, split_k, seed, out, cli.flags);
        }
        if (train->parsed()) {
            RunConfig cfg = cli.cfg;
            if (train_val_fold >= 0) cfg.val_fold = train_val_fold;
            return cmd_train(cfg, train_resume, cli.flags);
        }
        if (predict->parsed()) {
            RunConfig cfg = cli.cfg;
            if (predict_threshold >= 0.0f) cfg.threshold = predict_threshold;
            return cmd_predict(predict_ckpt, predict_images, predict_out, cfg, cli.flags);
        }
        if (det->parsed()) {
            if (det_masks.empty() && (det_ckpt.empty() || det_images.empty())) {
                std::cerr << "detect needs either --masks or --checkpoint with --images\n";
                return kUsageError;
            }
            RunConfig cfg = cli.cfg;
            if (det_min_area != std::size_t(-1)) cfg.min_area = det_min_area;
            return cmd_detect(det_ckpt, det_images, det_masks, det_out, cfg, cli.flags);
        }
        if (eval->parsed())
            return cmd_evaluate(eval_ckpt, eval_folds, eval_timing, cli.cfg, cli.flags);
    } catch (const config_error& e) {
        std::cerr << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return kUsageError;
}
