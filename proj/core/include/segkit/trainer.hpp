#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "segkit/data_pipeline.hpp"
#include "segkit/loss_metrics.hpp"
#include "segkit/nets.hpp"

namespace segkit {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment accumulators, aligned with the graph's parameter
/// order; t counts completed steps.
template <typename T>
struct OptStateT {
    std::vector<TensorT<T>> m, v;
    long t = 0;
};

using OptState = OptStateT<float>;

/// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected mhat/vhat;
/// p <- p - rate * mhat / (sqrt(vhat) + eps). Initializes zero moments on
/// first use. Throws numeric_error naming the parameter on non-finite
/// gradients.
template <typename T>
void adam_step(std::vector<typename GraphT<T>::ParamRef>& params, OptStateT<T>& state,
               double rate, const AdamConfig& cfg = {});

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

struct Phase {
    std::size_t epochs = 0;
    double rate = 0.0;

    bool operator==(const Phase&) const = default;
};

/// Default: 10 epochs at 1e-3, then 5 at 1e-4.
struct Schedule {
    std::vector<Phase> phases{{10, 1e-3}, {5, 1e-4}};
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t total_epochs() const;
    double rate_for_epoch(std::size_t epoch) const; // 1-based

    bool operator==(const Schedule&) const = default;
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0; // 1-based
    double rate = 0.0;
    double train_loss = 0.0;
    double val_iou = 0.0;
    double val_dice = 0.0;
    double train_jaccard = 0.0; // mean per-batch aggregate soft J
};

using History = std::vector<EpochStats>;

struct TrainOptions {
    JaccardVariant loss_variant = JaccardVariant::aggregate;
    bool augment = true;
    AugmentParams augment_params;
    std::array<float, 3> std_mean = kImagenetMean;
    std::array<float, 3> std_stdev = kImagenetStd;
    float threshold = 0.3f; // validation binarization, same as inference
    int threads = 1;
    std::size_t start_epoch = 0; // resume: epochs already completed
    std::function<void(const EpochStats&)> on_epoch;
};

/// Runs the schedule: each epoch shuffles (seeded per epoch, so a resumed run
/// continues bit-exactly), augments, batches, then forward / loss / backward /
/// adam_step. History gains one row per epoch with validation IoU and Dice of
/// the thresholded predictions. Aborts with numeric_error (naming epoch and
/// batch) if the loss goes non-finite.
History train(Network& net, const std::vector<Sample>& samples, int val_fold,
              const Schedule& schedule, OptState& opt, const TrainOptions& opts = {});

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct ImageEval {
    std::string id;
    double iou = 0.0;
    double dice = 0.0;
    double ms = 0.0; // forward + postprocess wall time
};

struct EvalReport {
    std::vector<ImageEval> per_image;
    double mean_iou = 0.0;
    double mean_dice = 0.0;
    double mean_ms = 0.0;
};

struct EvalOptions {
    float threshold = 0.3f;
    bool timing = false;
    int threads = 1;
    bool standardized_input = false; // true when samples are already standardized
    std::array<float, 3> std_mean = kImagenetMean;
    std::array<float, 3> std_stdev = kImagenetStd;
};

/// Hard IoU/Dice of the binarized prediction against each sample's mask;
/// aggregate values are plain means of the per-image rows. Samples need
/// masks. With threads > 1 the network is cloned per worker.
EvalReport evaluate(const Network& net, const std::vector<Sample>& samples,
                    const EvalOptions& opts = {});

/// CSV with the columns epoch,phase_rate,train_loss,val_iou,val_dice.
void write_history_csv(const std::string& path, const History& history);

} // namespace segkit
