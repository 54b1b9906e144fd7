#include "segkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "segkit/errors.hpp"
#include "segkit/postprocess.hpp"
#include "segkit/threading.hpp"

namespace segkit {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
void adam_step(std::vector<typename GraphT<T>::ParamRef>& params, OptStateT<T>& state,
               double rate, const AdamConfig& cfg) {
    if (rate <= 0.0) throw config_error("adam_step: rate must be > 0");

    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto& p : params) {
            state.m.emplace_back(p.value->shape());
            state.v.emplace_back(p.value->shape());
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw state_error("adam_step: optimizer state does not match parameter list");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
    const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.grad->size() != p.value->size())
            throw state_error("adam_step: no gradient for parameter '" + p.name +
                              "' (run backward first)");
        TensorT<T>& m = state.m[i];
        TensorT<T>& v = state.v[i];
        for (std::size_t j = 0; j < p.value->size(); ++j) {
            const T g = (*p.grad)[j];
            if (!std::isfinite(double(g)))
                throw numeric_error("non-finite gradient in parameter '" + p.name + "'");
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            v[j] = b2 * v[j] + (T(1) - b2) * g * g;
            const double mhat = double(m[j]) / bc1;
            const double vhat = double(v[j]) / bc2;
            (*p.value)[j] = T(double((*p.value)[j]) - rate * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

template void adam_step<float>(std::vector<GraphT<float>::ParamRef>&, OptStateT<float>&,
                               double, const AdamConfig&);
template void adam_step<double>(std::vector<GraphT<double>::ParamRef>&, OptStateT<double>&,
                                double, const AdamConfig&);

// ---------------------------------------------------------------------------
// schedule
// ---------------------------------------------------------------------------

void Schedule::validate() const {
    if (phases.empty()) throw config_error("schedule has no phases");
    for (const Phase& p : phases) {
        if (p.epochs < 1) throw config_error("schedule phase with zero epochs rejected");
        if (p.rate <= 0.0) throw config_error("schedule learning rate must be > 0");
    }
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
}

std::size_t Schedule::total_epochs() const {
    std::size_t n = 0;
    for (const Phase& p : phases) n += p.epochs;
    return n;
}

double Schedule::rate_for_epoch(std::size_t epoch) const {
    std::size_t upto = 0;
    for (const Phase& p : phases) {
        upto += p.epochs;
        if (epoch <= upto) return p.rate;
    }
    return phases.back().rate;
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xBF58476D1CE4E5B9ULL);
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

Tensor plane_of(const Tensor& batch, std::size_t n) {
    const std::size_t H = batch.dim(2), W = batch.dim(3);
    Tensor out({H, W});
    std::memcpy(out.data(), batch.data() + n * batch.dim(1) * H * W, H * W * sizeof(float));
    return out;
}

struct PerImageResult {
    double iou = 0.0, dice = 0.0, ms = 0.0;
};

PerImageResult eval_one(Network& net, const Sample& raw, const EvalOptions& opts) {
    Sample s = opts.standardized_input ? raw : standardize(raw, opts.std_mean, opts.std_stdev);
    const std::size_t H = s.image.dim(1), W = s.image.dim(2);
    Tensor batch({1, 3, H, W});
    std::memcpy(batch.data(), s.image.data(), s.image.size() * sizeof(float));

    const auto t0 = std::chrono::steady_clock::now();
    const Tensor probs = forward_segment(net, std::move(batch));
    const BinaryMask pred = binarize(plane_of(probs, 0), opts.threshold);
    filter_components(connected_components_with_stats(pred, 8), 0); // full postprocess cost
    const auto t1 = std::chrono::steady_clock::now();

    PerImageResult r;
    const BinaryMask truth = mask_from_labels(*raw.mask);
    r.iou = iou_binary(pred, truth);
    r.dice = dice(pred, truth);
    r.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return r;
}

EvalReport evaluate_ptrs(const Network& net, const std::vector<const Sample*>& samples,
                         const EvalOptions& opts) {
    for (const Sample* s : samples)
        if (!s->mask) throw state_error("evaluate: sample '" + s->source_id + "' has no mask");

    EvalReport rep;
    rep.per_image.resize(samples.size());
    const std::size_t n = samples.size();
    if (n == 0) throw config_error("evaluate: fold is empty");

    const std::size_t workers = std::min<std::size_t>(std::max(opts.threads, 1), n);
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;

    auto run_chunk = [&](std::size_t lo, std::size_t hi) {
        try {
            Network local = net; // clones the graph; safe per-thread evaluation
            local.graph.set_training(false);
            for (std::size_t i = lo; i < hi; ++i) {
                const PerImageResult r = eval_one(local, *samples[i], opts);
                rep.per_image[i] = ImageEval{samples[i]->source_id, r.iou, r.dice, r.ms};
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mu);
            if (!error) error = std::current_exception();
        }
    };

    if (workers <= 1) {
        run_chunk(0, n);
    } else {
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * n / workers, hi = (w + 1) * n / workers;
            pool.emplace_back(run_chunk, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);

    for (const ImageEval& e : rep.per_image) {
        rep.mean_iou += e.iou;
        rep.mean_dice += e.dice;
        rep.mean_ms += e.ms;
    }
    rep.mean_iou /= double(n);
    rep.mean_dice /= double(n);
    rep.mean_ms /= double(n);
    return rep;
}

} // namespace

EvalReport evaluate(const Network& net, const std::vector<Sample>& samples,
                    const EvalOptions& opts) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(samples.size());
    for (const Sample& s : samples) ptrs.push_back(&s);
    return evaluate_ptrs(net, ptrs, opts);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

History train(Network& net, const std::vector<Sample>& samples, int val_fold,
              const Schedule& schedule, OptState& opt, const TrainOptions& opts) {
    schedule.validate();

    std::vector<const Sample*> train_set, val_set;
    for (const Sample& s : samples)
        (s.fold == val_fold ? val_set : train_set).push_back(&s);
    if (train_set.empty())
        throw config_error("train: no training samples outside fold " +
                           std::to_string(val_fold));
    if (val_set.empty())
        throw config_error("train: validation fold " + std::to_string(val_fold) + " is empty");
    for (const Sample* s : train_set)
        if (!s->mask) throw state_error("train: sample '" + s->source_id + "' has no mask");

    const std::size_t H = train_set[0]->image.dim(1);
    const std::size_t W = train_set[0]->image.dim(2);
    for (const Sample* s : train_set)
        if (s->image.dim(1) != H || s->image.dim(2) != W)
            throw shape_error("train: sample '" + s->source_id + "' extent differs from " +
                              std::to_string(H) + "x" + std::to_string(W));

    // attach (or reuse, when resuming) the combined loss subgraph
    int loss_node = net.graph.find_node("loss.total");
    int labels_node, jacc_node;
    if (loss_node < 0) {
        const LossNodes ln = attach_combined_loss(net.graph, net.output, opts.loss_variant);
        loss_node = ln.loss;
        labels_node = ln.labels;
        jacc_node = ln.jaccard;
    } else {
        labels_node = net.graph.find_node("labels");
        jacc_node = net.graph.find_node("loss.jaccard");
    }

    auto params = net.graph.parameters();
    const std::size_t n = train_set.size();
    const std::size_t total = schedule.total_epochs();

    EvalOptions eval_opts;
    eval_opts.threshold = opts.threshold;
    eval_opts.threads = opts.threads;
    eval_opts.std_mean = opts.std_mean;
    eval_opts.std_stdev = opts.std_stdev;

    History history;
    for (std::size_t epoch = opts.start_epoch + 1; epoch <= total; ++epoch) {
        const double rate = schedule.rate_for_epoch(epoch);

        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::mt19937_64 shuffle_rng(mix_seed(schedule.seed, epoch, 0x5eed));
        std::shuffle(perm.begin(), perm.end(), shuffle_rng);

        net.graph.set_training(true);
        double loss_sum = 0.0, jacc_sum = 0.0;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < n; start += schedule.batch_size) {
            const std::size_t bn = std::min(schedule.batch_size, n - start);
            Tensor images({bn, 3, H, W});
            Tensor labels({bn, 1, H, W});

            parallel_for(bn, opts.threads, [&](std::size_t i) {
                const std::size_t idx = perm[start + i];
                Sample a = *train_set[idx];
                if (opts.augment) {
                    // per-sample generator: reproducible across thread counts
                    std::mt19937_64 rng(mix_seed(schedule.seed, epoch, idx));
                    a = augment_affine(a, opts.augment_params, rng);
                    a.image = augment_hsv(a.image, opts.augment_params, rng);
                }
                a = standardize(a, opts.std_mean, opts.std_stdev);
                std::memcpy(images.data() + i * 3 * H * W, a.image.data(),
                            3 * H * W * sizeof(float));
                std::memcpy(labels.data() + i * H * W, a.mask->data(),
                            H * W * sizeof(float));
            });

            net.graph.feed(net.input, std::move(images));
            net.graph.feed(labels_node, std::move(labels));
            const double loss = double(net.graph.forward(loss_node)[0]);
            if (!std::isfinite(loss))
                throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batches));
            loss_sum += loss;
            jacc_sum += double(net.graph.value(jacc_node)[0]);
            ++batches;

            net.graph.backward(loss_node);
            adam_step(params, opt, rate);
        }

        const EvalReport val = evaluate_ptrs(net, val_set, eval_opts);
        net.graph.set_training(true);

        EpochStats stats;
        stats.epoch = epoch;
        stats.rate = rate;
        stats.train_loss = loss_sum / double(batches);
        stats.val_iou = val.mean_iou;
        stats.val_dice = val.mean_dice;
        stats.train_jaccard = jacc_sum / double(batches);
        history.push_back(stats);
        if (opts.on_epoch) opts.on_epoch(stats);
    }
    return history;
}

void write_history_csv(const std::string& path, const History& history) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write history CSV: " + path);
    out << "epoch,phase_rate,train_loss,val_iou,val_dice\n";
    char buf[160];
    for (const EpochStats& e : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.rate,
                      e.train_loss, e.val_iou, e.val_dice);
        out << buf;
    }
    if (!out) throw io_error("failed writing history CSV: " + path);
}

} // namespace segkit
