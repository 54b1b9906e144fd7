#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "segkit/checkpoint.hpp"
#include "segkit/ops.hpp"
#include "segkit/trainer.hpp"
#include "oracles.hpp"

using namespace segkit;
namespace fs = std::filesystem;

namespace {

// scalar parameter p with loss = p * g_value, so dL/dp == g_value
template <typename T>
struct ScalarRig {
    GraphT<T> g;
    int p, x, loss;

    explicit ScalarRig(T init) {
        p = g.add_parameter("p", TensorT<T>({1}, {init}));
        x = g.add_input("x");
        const int prod = g.add_op("prod", make_mul_op<T>(), {p, x});
        loss = g.add_op("loss", make_sum_op<T>(), {prod});
    }

    void step_grad(T grad_value) {
        g.feed(x, TensorT<T>({1}, {grad_value}));
        g.forward(loss);
        g.backward(loss);
    }
};

std::vector<Sample> toy_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
    auto samples = synth_blobs(seed, count, size, 2, SynthOptions{4.0, 7.0});
    const FoldSplit split = [&] {
        std::vector<std::string> ids;
        for (const Sample& s : samples) ids.push_back(s.source_id);
        return split_folds(ids, 5, seed);
    }();
    for (Sample& s : samples) s.fold = split.fold_of(s.source_id);
    return samples;
}

NetworkSpec tiny_spec() {
    NetworkSpec spec;
    spec.style = NetStyle::unet;
    spec.base_width = 4;
    spec.depth = 2;
    return spec;
}

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "segkit_trainer_test";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam: zero gradient with zero state leaves parameters unchanged") {
    ScalarRig<float> rig(1.25f);
    rig.step_grad(0.0f);
    auto params = rig.g.parameters();
    OptState opt;
    adam_step(params, opt, 0.001);
    CHECK(rig.g.parameter_value("p")[0] == 1.25f);
    CHECK(opt.t == 1);
}

TEST_CASE("adam: one hand-computed step") {
    // p=1, g=0.5, defaults: m=0.05, v=2.5e-4, mhat=0.5, vhat=0.25,
    // p' = 1 - rate * 0.5 / (0.5 + 1e-8)
    ScalarRig<double> rig(1.0);
    rig.step_grad(0.5);
    auto params = rig.g.parameters();
    OptStateT<double> opt;
    adam_step(params, opt, 0.001);
    const double expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
    CHECK(rig.g.parameter_value("p")[0] == doctest::Approx(expected).epsilon(1e-15));

    // float path agrees to float precision
    ScalarRig<float> rf(1.0f);
    rf.step_grad(0.5f);
    auto pf = rf.g.parameters();
    OptState optf;
    adam_step(pf, optf, 0.001);
    CHECK(rf.g.parameter_value("p")[0] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("adam: identical calls on copied state produce identical results") {
    ScalarRig<float> a(2.0f), b(2.0f);
    a.step_grad(0.7f);
    b.step_grad(0.7f);
    auto pa = a.g.parameters(), pb = b.g.parameters();
    OptState oa, ob;
    for (int i = 0; i < 5; ++i) {
        adam_step(pa, oa, 0.01);
        adam_step(pb, ob, 0.01);
    }
    CHECK(a.g.parameter_value("p")[0] == b.g.parameter_value("p")[0]);
}

TEST_CASE("adam: update direction is invariant to gradient scale") {
    // with eps ~ 0, scaling gradients by c > 0 cancels in mhat / sqrt(vhat)
    AdamConfig cfg;
    cfg.eps = 1e-12;
    for (double c : {0.01, 1.0, 250.0}) {
        ScalarRig<double> base(1.0), scaled(1.0);
        OptStateT<double> ob, os;
        for (int step = 0; step < 3; ++step) {
            const double g = 0.3 + 0.1 * step;
            base.step_grad(g);
            scaled.step_grad(c * g);
            auto pb = base.g.parameters(), ps = scaled.g.parameters();
            adam_step(pb, ob, 0.01, cfg);
            adam_step(ps, os, 0.01, cfg);
        }
        CHECK(std::fabs(base.g.parameter_value("p")[0] -
                        scaled.g.parameter_value("p")[0]) <= 1e-6);
    }
}

TEST_CASE("adam: non-finite gradients abort with the parameter name") {
    ScalarRig<float> rig(1.0f);
    rig.step_grad(std::numeric_limits<float>::quiet_NaN());
    auto params = rig.g.parameters();
    OptState opt;
    CHECK_THROWS_WITH_AS(adam_step(params, opt, 0.01),
                         doctest::Contains("'p'"), numeric_error);
}

TEST_CASE("schedule validation and the default shape") {
    Schedule s;
    CHECK(s.total_epochs() == 15);
    for (std::size_t e = 1; e <= 10; ++e) CHECK(s.rate_for_epoch(e) == 0.001);
    for (std::size_t e = 11; e <= 15; ++e) CHECK(s.rate_for_epoch(e) == 0.0001);

    Schedule zero;
    zero.phases = {{0, 1e-3}};
    CHECK_THROWS_AS(zero.validate(), config_error);
    Schedule negative;
    negative.phases = {{3, -1.0}};
    CHECK_THROWS_AS(negative.validate(), config_error);
    Schedule empty;
    empty.phases.clear();
    CHECK_THROWS_AS(empty.validate(), config_error);
}

TEST_CASE("loss on a fixed batch decreases over 50 steps") {
    auto samples = synth_blobs(3, 8, 32, 2, SynthOptions{4.0, 7.0});
    Network net = build<float>(tiny_spec(), 21);
    const LossNodes ln = attach_combined_loss(net.graph, net.output,
                                              JaccardVariant::aggregate);
    Tensor images({8, 3, 32, 32}), labels({8, 1, 32, 32});
    for (std::size_t i = 0; i < 8; ++i) {
        const Sample st = standardize(samples[i]);
        std::memcpy(images.data() + i * 3 * 32 * 32, st.image.data(),
                    3 * 32 * 32 * sizeof(float));
        std::memcpy(labels.data() + i * 32 * 32, st.mask->data(),
                    32 * 32 * sizeof(float));
    }
    net.graph.feed(net.input, images);
    net.graph.feed(ln.labels, labels);

    auto params = net.graph.parameters();
    OptState opt;
    const double first = double(net.graph.forward(ln.loss)[0]);
    const double first_j = double(net.graph.value(ln.jaccard)[0]);
    double last = first;
    for (int step = 0; step < 50; ++step) {
        net.graph.forward(ln.loss);
        net.graph.backward(ln.loss);
        adam_step(params, opt, 0.001);
        last = double(net.graph.value(ln.loss)[0]);
    }
    CHECK(last < first);
    // descending the loss drives the aggregate overlap up on the toy batch
    CHECK(double(net.graph.value(ln.jaccard)[0]) > first_j);
}

TEST_CASE("train: epoch structure, history and determinism") {
    const auto samples = toy_dataset(30, 32, 5);
    Schedule sched;
    sched.phases = {{2, 1e-3}, {1, 1e-4}};
    sched.batch_size = 8;
    sched.seed = 9;

    TrainOptions opts;
    opts.threads = 1;

    Network a = build<float>(tiny_spec(), 31);
    OptState oa;
    const History ha = train(a, samples, 0, sched, oa, opts);
    REQUIRE(ha.size() == 3);
    CHECK(ha[0].epoch == 1);
    CHECK(ha[0].rate == 1e-3);
    CHECK(ha[2].rate == 1e-4);
    for (const EpochStats& e : ha) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.val_iou >= 0.0);
        CHECK(e.val_iou <= 1.0);
        CHECK(e.val_dice >= 0.0);
        CHECK(e.val_dice <= 1.0);
    }

    // identical seeds give identical history and identical parameters
    Network b = build<float>(tiny_spec(), 31);
    OptState ob;
    const History hb = train(b, samples, 0, sched, ob, opts);
    REQUIRE(hb.size() == ha.size());
    for (std::size_t i = 0; i < ha.size(); ++i) {
        CHECK(ha[i].train_loss == hb[i].train_loss);
        CHECK(ha[i].val_iou == hb[i].val_iou);
        CHECK(ha[i].val_dice == hb[i].val_dice);
    }
    auto pa = a.graph.parameters(), pb = b.graph.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i].value->data(), pb[i].value->data(),
                          pa[i].value->size() * sizeof(float)) == 0);
}

TEST_CASE("train: a resumed run continues bit-exactly") {
    const auto samples = toy_dataset(30, 32, 6);
    Schedule sched;
    sched.phases = {{3, 1e-3}};
    sched.batch_size = 8;
    sched.seed = 4;
    TrainOptions opts;
    opts.threads = 1;

    Network straight = build<float>(tiny_spec(), 8);
    OptState os;
    train(straight, samples, 0, sched, os, opts);

    Network resumed = build<float>(tiny_spec(), 8);
    OptState orr;
    TrainOptions part = opts;
    Schedule first_two = sched;
    first_two.phases = {{2, 1e-3}};
    train(resumed, samples, 0, first_two, orr, part);
    part.start_epoch = 2;
    train(resumed, samples, 0, sched, orr, part);

    auto ps = straight.graph.parameters(), pr = resumed.graph.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i)
        CHECK(std::memcmp(ps[i].value->data(), pr[i].value->data(),
                          ps[i].value->size() * sizeof(float)) == 0);
}

TEST_CASE("train: validation fold and mask requirements") {
    auto samples = toy_dataset(10, 32, 7);
    Schedule sched;
    sched.phases = {{1, 1e-3}};
    sched.batch_size = 4;
    Network net = build<float>(tiny_spec(), 3);
    OptState opt;
    CHECK_THROWS_AS(train(net, samples, 99, sched, opt), config_error);

    Schedule bad = sched;
    bad.phases = {{0, 1e-3}};
    CHECK_THROWS_AS(train(net, samples, 0, bad, opt), config_error);
}

TEST_CASE("train: non-finite loss aborts with epoch and batch") {
    auto samples = toy_dataset(10, 32, 8);
    Network net = build<float>(tiny_spec(), 3);
    net.graph.parameter_value("head.b")[0] = std::numeric_limits<float>::quiet_NaN();
    Schedule sched;
    sched.phases = {{1, 1e-3}};
    sched.batch_size = 4;
    OptState opt;
    CHECK_THROWS_WITH_AS(train(net, samples, 0, sched, opt),
                         doctest::Contains("epoch 1"), numeric_error);
}

TEST_CASE("evaluate: empty-vs-empty convention and aggregate mean identity") {
    // force an all-background predictor: a hard negative head bias
    Network net = build<float>(tiny_spec(), 11);
    net.graph.parameter_value("head.b")[0] = -30.0f;

    std::vector<Sample> samples;
    for (int i = 0; i < 6; ++i) {
        Sample s;
        s.image = Tensor({3, 32, 32});
        std::mt19937_64 rng(100 + i);
        std::uniform_real_distribution<float> unit(0.0f, 1.0f);
        for (std::size_t j = 0; j < s.image.size(); ++j) s.image[j] = unit(rng);
        s.mask = Tensor({32, 32}); // pathology-free frame
        s.source_id = "empty" + std::to_string(i);
        samples.push_back(std::move(s));
    }

    EvalOptions opts;
    opts.timing = true;
    const EvalReport rep = evaluate(net, samples, opts);
    REQUIRE(rep.per_image.size() == 6);
    for (const ImageEval& e : rep.per_image) {
        CHECK(e.iou == 1.0); // all-background vs empty mask
        CHECK(e.dice == 1.0);
        CHECK(e.ms >= 0.0);
    }
    CHECK(rep.mean_iou == 1.0);
    CHECK(rep.mean_dice == 1.0);

    // the aggregate is exactly the mean of the reported per-image values
    double mean = 0.0;
    for (const ImageEval& e : rep.per_image) mean += e.iou;
    mean /= double(rep.per_image.size());
    CHECK(std::fabs(rep.mean_iou - mean) <= 1e-9);

    // multithreaded evaluation returns the same metrics
    EvalOptions par = opts;
    par.threads = 4;
    const EvalReport rep4 = evaluate(net, samples, par);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(rep4.per_image[i].iou == rep.per_image[i].iou);
        CHECK(rep4.per_image[i].dice == rep.per_image[i].dice);
    }
}

TEST_CASE("checkpoint: bitwise round trip with optimizer state") {
    const auto samples = toy_dataset(10, 32, 9);
    Network net = build<float>(tiny_spec(), 13);
    OptState opt;
    Schedule sched;
    sched.phases = {{1, 1e-3}};
    sched.batch_size = 4;
    TrainOptions topts;
    const History hist = train(net, samples, 0, sched, opt, topts);

    const fs::path path = temp_file("roundtrip.ckpt");
    checkpoint_save(path.string(), net, &opt, 1, hist);

    OptState opt2;
    std::size_t done = 0;
    History hist2;
    Network back = checkpoint_load(path.string(), &opt2, &done, &hist2);
    CHECK(done == 1);
    REQUIRE(hist2.size() == hist.size());
    CHECK(hist2[0].train_loss == hist[0].train_loss); // hexfloat exact
    CHECK(hist2[0].val_iou == hist[0].val_iou);
    CHECK(hist2[0].train_jaccard == hist[0].train_jaccard);

    auto pa = net.graph.parameters(), pb = back.graph.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::memcmp(pa[i].value->data(), pb[i].value->data(),
                          pa[i].value->size() * sizeof(float)) == 0);
    CHECK(opt2.t == opt.t);
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
        CHECK(std::memcmp(opt.m[i].data(), opt2.m[i].data(),
                          opt.m[i].size() * sizeof(float)) == 0);
        CHECK(std::memcmp(opt.v[i].data(), opt2.v[i].data(),
                          opt.v[i].size() * sizeof(float)) == 0);
    }

    // forward outputs agree bitwise on a fixed input
    std::mt19937_64 rng(15);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor probe({1, 3, 32, 32});
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = float(dist(rng));
    net.graph.set_training(false);
    back.graph.set_training(false);
    const Tensor ya = forward_segment(net, probe);
    const Tensor yb = forward_segment(back, probe);
    CHECK(std::memcmp(ya.data(), yb.data(), ya.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint: truncation fails the checksum, nothing restored") {
    Network net = build<float>(tiny_spec(), 17);
    const fs::path path = temp_file("trunc.ckpt");
    checkpoint_save(path.string(), net);

    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 64);
    CHECK_THROWS_AS(checkpoint_read(path.string()), io_error);

    // flipped payload byte: caught by the crc
    checkpoint_save(path.string(), net);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(std::streamoff(size - 10));
        char b = 0x5a;
        f.write(&b, 1);
    }
    CHECK_THROWS_WITH_AS(checkpoint_read(path.string()),
                         doctest::Contains("checksum"), io_error);
}

TEST_CASE("checkpoint: spec mismatch is an explicit error") {
    Network net = build<float>(tiny_spec(), 19);
    const fs::path path = temp_file("spec.ckpt");
    checkpoint_save(path.string(), net);
    const Checkpoint ck = checkpoint_read(path.string());

    NetworkSpec other = tiny_spec();
    other.base_width = 8;
    Network wider = build<float>(other, 19);
    CHECK_THROWS_WITH_AS(checkpoint_restore(wider, ck), doctest::Contains("spec mismatch"),
                         state_error);
}

TEST_CASE("history csv format") {
    History h;
    h.push_back(EpochStats{1, 1e-3, 0.5, 0.25, 0.4, 0.1});
    h.push_back(EpochStats{2, 1e-4, 0.25, 0.5, 0.66, 0.2});
    const fs::path path = temp_file("history.csv");
    write_history_csv(path.string(), h);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,phase_rate,train_loss,val_iou,val_dice");
    std::getline(in, line);
    CHECK(line == "1,0.001,0.5,0.25,0.4");
    std::getline(in, line);
    CHECK(line == "2,0.0001,0.25,0.5,0.66");
}

} // TEST_SUITE
