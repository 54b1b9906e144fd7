#pragma once

#include <string>
#include <vector>

#include "segkit/data_pipeline.hpp"
#include "segkit/loss_metrics.hpp"
#include "segkit/nets.hpp"
#include "segkit/trainer.hpp"

namespace segkit::cli {

/// Everything a run needs, loadable from one JSON file. Every constant the
/// pipeline depends on (0.3 threshold, 300 px area floor, 512 crop, the
/// 10+5 epoch schedule, standardization statistics) is a key here with that
/// value as its default.
struct RunConfig {
    std::string data_root = "data";
    std::string output_dir = "out";
    std::string folds_file; // empty -> <data_root>/folds.csv
    std::uint64_t seed = 1;
    int threads = 0; // 0 -> hardware concurrency
    int val_fold = 0;

    NetworkSpec network;                      // unet, 3ch, width 8, depth 3
    Schedule schedule;                        // 10 @ 1e-3 + 5 @ 1e-4
    JaccardVariant loss_variant = JaccardVariant::aggregate;

    std::size_t crop = 512;                   // 0 disables cropping
    std::array<float, 3> std_mean = kImagenetMean;
    std::array<float, 3> std_stdev = kImagenetStd;

    bool augment_enabled = true;
    AugmentParams augment;

    float threshold = 0.3f;
    std::size_t min_area = 300;
    int connectivity = 8;
    double match_radius = 30.0;

    std::string folds_path() const {
        return folds_file.empty() ? data_root + "/folds.csv" : folds_file;
    }

    bool operator==(const RunConfig&) const = default;
};

/// Throws config_error listing every offending key at once.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);
void save_config(const std::string& path, const RunConfig& cfg);

} // namespace segkit::cli
