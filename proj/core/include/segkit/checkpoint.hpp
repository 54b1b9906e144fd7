#pragma once

#include <string>

#include "segkit/nets.hpp"
#include "segkit/trainer.hpp"

namespace segkit {

/// On-disk checkpoint: a text header (format version, network spec, tensor
/// directory, training history) followed by a little-endian float32 payload
/// guarded by a CRC32. Loading is all-or-nothing: a truncated or corrupted
/// file fails the checksum and leaves nothing restored.
struct Checkpoint {
    int version = 1;
    NetworkSpec spec;
    std::size_t epochs_done = 0;
    History history;
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> state; // batch-norm running stats
    bool has_opt = false;
    long adam_t = 0;
    std::vector<Tensor> opt_m, opt_v;
};

void checkpoint_save(const std::string& path, Network& net, const OptState* opt = nullptr,
                     std::size_t epochs_done = 0, const History& history = {});

/// Parses and checksum-verifies a checkpoint file.
Checkpoint checkpoint_read(const std::string& path);

/// Copies parameters, batch-norm state and (when present) optimizer moments
/// into a network built with an identical spec; a different spec is an error.
void checkpoint_restore(Network& net, const Checkpoint& ckpt, OptState* opt = nullptr);

/// Builds the network from the embedded spec and restores it.
Network checkpoint_load(const std::string& path, OptState* opt = nullptr,
                        std::size_t* epochs_done = nullptr, History* history = nullptr);

} // namespace segkit
