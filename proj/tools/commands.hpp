#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace segkit::cli {

struct GlobalFlags {
    bool quiet = false;
    int threads = 0; // 0 -> hardware
};

int cmd_synth(const std::string& out_dir, std::size_t count, std::size_t size,
              std::size_t max_lesions, std::uint64_t seed, const GlobalFlags& g);

int cmd_split(const std::string& data_root, int k, std::uint64_t seed,
              const std::string& out_path, const GlobalFlags& g);

int cmd_train(const RunConfig& cfg, bool resume, const GlobalFlags& g);

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& images,
                const std::string& out_dir, const RunConfig& cfg, const GlobalFlags& g);

int cmd_detect(const std::string& checkpoint, const std::string& images_dir,
               const std::string& masks_dir, const std::string& out_path,
               const RunConfig& cfg, const GlobalFlags& g);

int cmd_evaluate(const std::string& checkpoint, const std::vector<int>& folds, bool timing,
                 const RunConfig& cfg, const GlobalFlags& g);

} // namespace segkit::cli
