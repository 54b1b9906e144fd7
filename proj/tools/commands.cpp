#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "segkit/checkpoint.hpp"
#include "segkit/errors.hpp"
#include "segkit/image_io.hpp"
#include "segkit/postprocess.hpp"
#include "segkit/threading.hpp"

namespace segkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const GlobalFlags& g, const std::string& line) {
    if (!g.quiet) std::cout << line << "\n";
}

int effective_threads(const GlobalFlags& g) {
    return g.threads > 0 ? g.threads : hardware_threads();
}

bool is_image_file(const fs::path& p) {
    const std::string ext = p.extension().string();
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string find_mask_for(const fs::path& masks_dir, const std::string& stem) {
    for (const char* ext : {".png", ".jpg", ".jpeg"}) {
        const fs::path p = masks_dir / (stem + ext);
        if (fs::exists(p)) return p.string();
    }
    return {};
}

struct DatasetEntry {
    std::string id;
    std::string image_path;
    std::string mask_path; // empty when unannotated
};

/// <root>/images/*.png paired with <root>/masks/<stem>.{png,jpg} by stem.
std::vector<DatasetEntry> scan_dataset(const std::string& data_root, bool require_mask) {
    const fs::path images = fs::path(data_root) / "images";
    const fs::path masks = fs::path(data_root) / "masks";
    if (!fs::is_directory(images))
        throw io_error("dataset layout invalid: missing directory " + images.string());

    std::vector<DatasetEntry> out;
    for (const fs::path& img : list_images(images)) {
        DatasetEntry e;
        e.id = img.stem().string();
        e.image_path = img.string();
        if (fs::is_directory(masks)) e.mask_path = find_mask_for(masks, e.id);
        if (require_mask && e.mask_path.empty()) continue;
        out.push_back(std::move(e));
    }
    if (out.empty())
        throw io_error("no " + std::string(require_mask ? "annotated " : "") +
                       "images found under " + data_root);
    return out;
}

Sample preprocess_geometry(Sample s, const RunConfig& cfg) {
    if (cfg.crop > 0 && (s.image.dim(1) > cfg.crop || s.image.dim(2) > cfg.crop))
        s = center_crop(s, cfg.crop);
    return s;
}

/// Loads every annotated sample named in the fold table.
std::vector<Sample> load_fold_samples(const RunConfig& cfg, const FoldSplit& split,
                                      const GlobalFlags& g) {
    const auto entries = scan_dataset(cfg.data_root, true);
    std::map<std::string, const DatasetEntry*> by_id;
    for (const auto& e : entries) by_id[e.id] = &e;

    std::vector<const DatasetEntry*> wanted;
    for (const auto& [id, fold] : split.assignment) {
        const auto it = by_id.find(id);
        if (it == by_id.end())
            throw io_error("fold table names '" + id + "' but no annotated image exists");
        wanted.push_back(it->second);
    }

    std::vector<Sample> samples(wanted.size());
    parallel_for(wanted.size(), effective_threads(g), [&](std::size_t i) {
        Sample s = load_sample(wanted[i]->image_path, wanted[i]->mask_path);
        s.source_id = wanted[i]->id;
        s = preprocess_geometry(std::move(s), cfg);
        s.fold = split.fold_of(wanted[i]->id);
        samples[i] = std::move(s);
    });
    return samples;
}

Tensor prob_plane(const Tensor& probs) {
    const std::size_t H = probs.dim(2), W = probs.dim(3);
    Tensor out({H, W});
    std::memcpy(out.data(), probs.data(), H * W * sizeof(float));
    return out;
}

Tensor forward_one(Network& net, const Sample& raw, const RunConfig& cfg) {
    const Sample st = standardize(raw, cfg.std_mean, cfg.std_stdev);
    Tensor batch({1, 3, st.image.dim(1), st.image.dim(2)});
    std::memcpy(batch.data(), st.image.data(), st.image.size() * sizeof(float));
    return forward_segment(net, std::move(batch));
}

json detection_record(const std::string& id, const std::vector<Component>& lesions) {
    json rec;
    rec["id"] = id;
    rec["present"] = !lesions.empty();
    json arr = json::array();
    for (const Component& c : lesions)
        arr.push_back({{"x", c.centroid_col}, {"y", c.centroid_row}, {"area", c.area}});
    rec["lesions"] = arr;
    return rec;
}

} // namespace

int cmd_synth(const std::string& out_dir, std::size_t count, std::size_t size,
              std::size_t max_lesions, std::uint64_t seed, const GlobalFlags& g) {
    const auto samples = synth_blobs(seed, count, size, max_lesions);
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");
    for (const Sample& s : samples) {
        write_image_rgb_png((fs::path(out_dir) / "images" / (s.source_id + ".png")).string(),
                            s.image);
        write_mask_png((fs::path(out_dir) / "masks" / (s.source_id + ".png")).string(),
                       mask_from_labels(*s.mask));
    }
    say(g, "synth count=" + std::to_string(count) + " size=" + std::to_string(size) +
               " out=" + out_dir);
    return 0;
}

int cmd_split(const std::string& data_root, int k, std::uint64_t seed,
              const std::string& out_path, const GlobalFlags& g) {
    const auto entries = scan_dataset(data_root, true);
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.id);

    const FoldSplit split = split_folds(ids, k, seed);
    save_fold_table(out_path, split);

    std::string sizes;
    for (std::size_t s : split.fold_sizes()) {
        if (!sizes.empty()) sizes += ",";
        sizes += std::to_string(s);
    }
    say(g, "split k=" + std::to_string(k) + " n=" + std::to_string(ids.size()) +
               " sizes=" + sizes + " table=" + out_path);
    return 0;
}

int cmd_train(const RunConfig& cfg, bool resume, const GlobalFlags& g) {
    cfg.schedule.validate();
    const FoldSplit split = load_fold_table(cfg.folds_path());
    const std::vector<Sample> samples = load_fold_samples(cfg, split, g);

    fs::create_directories(cfg.output_dir);
    const std::string final_path = (fs::path(cfg.output_dir) / "checkpoint_final.ckpt").string();
    const std::string best_path = (fs::path(cfg.output_dir) / "checkpoint_best.ckpt").string();
    const std::string history_path = (fs::path(cfg.output_dir) / "history.csv").string();

    Network net = build<float>(cfg.network, cfg.seed);
    OptState opt;
    History history;
    std::size_t done = 0;

    if (resume && fs::exists(final_path)) {
        const Checkpoint ck = checkpoint_read(final_path);
        checkpoint_restore(net, ck, &opt);
        history = ck.history;
        done = ck.epochs_done;
        say(g, "resume checkpoint=" + final_path + " epochs_done=" + std::to_string(done));
    }

    const std::size_t total = cfg.schedule.total_epochs();
    if (done >= total) {
        // nothing left to train; re-emit the recorded metrics
        write_history_csv(history_path, history);
        for (const EpochStats& e : history)
            say(g, "epoch=" + std::to_string(e.epoch) + " rate=" + std::to_string(e.rate) +
                       " train_loss=" + std::to_string(e.train_loss) +
                       " val_iou=" + std::to_string(e.val_iou) +
                       " val_dice=" + std::to_string(e.val_dice));
        say(g, "train complete epochs=" + std::to_string(done) + " (nothing to resume)");
        return 0;
    }

    TrainOptions topts;
    topts.loss_variant = cfg.loss_variant;
    topts.augment = cfg.augment_enabled;
    topts.augment_params = cfg.augment;
    topts.std_mean = cfg.std_mean;
    topts.std_stdev = cfg.std_stdev;
    topts.threshold = cfg.threshold;
    topts.threads = effective_threads(g);
    topts.start_epoch = done;

    double best_iou = -1.0;
    for (const EpochStats& e : history) best_iou = std::max(best_iou, e.val_iou);

    topts.on_epoch = [&](const EpochStats& e) {
        history.push_back(e);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "epoch=%zu rate=%.6g train_loss=%.6f val_iou=%.4f val_dice=%.4f",
                      e.epoch, e.rate, e.train_loss, e.val_iou, e.val_dice);
        say(g, buf);
        if (e.val_iou > best_iou) {
            best_iou = e.val_iou;
            checkpoint_save(best_path, net, &opt, e.epoch, history);
        }
    };

    Schedule schedule = cfg.schedule;
    schedule.seed = cfg.seed;
    train(net, samples, cfg.val_fold, schedule, opt, topts);

    write_history_csv(history_path, history);
    checkpoint_save(final_path, net, &opt, total, history);
    say(g, "train complete epochs=" + std::to_string(total) + " checkpoint=" + final_path);
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& images,
                const std::string& out_dir, const RunConfig& cfg, const GlobalFlags& g) {
    Network net = checkpoint_load(checkpoint);
    net.graph.set_training(false);

    std::vector<fs::path> files;
    if (images.size() == 1 && fs::is_directory(images[0])) {
        files = list_images(images[0]);
    } else {
        for (const auto& f : images) files.emplace_back(f);
    }
    if (files.empty()) throw io_error("no input images");

    fs::create_directories(out_dir);
    int failed = 0;
    for (const fs::path& f : files) {
        try {
            Sample s = preprocess_geometry(load_sample(f.string()), cfg);
            const Tensor probs = forward_one(net, s, cfg);
            const BinaryMask mask = binarize(prob_plane(probs), cfg.threshold);
            const fs::path out = fs::path(out_dir) / (f.stem().string() + ".png");
            write_mask_png(out.string(), mask);
            say(g, "predict id=" + f.stem().string() + " out=" + out.string());
        } catch (const std::exception& e) {
            std::cerr << "predict failed for " << f.string() << ": " << e.what() << "\n";
            ++failed;
        }
    }
    return failed > 0 ? 1 : 0;
}

int cmd_detect(const std::string& checkpoint, const std::string& images_dir,
               const std::string& masks_dir, const std::string& out_path,
               const RunConfig& cfg, const GlobalFlags& g) {
    std::ofstream out(out_path);
    if (!out) throw io_error("cannot write detections: " + out_path);

    int failed = 0;
    if (!masks_dir.empty()) {
        for (const fs::path& f : list_images(masks_dir)) {
            try {
                const BinaryMask m = read_mask(f.string());
                const auto lesions = filter_components(
                    connected_components_with_stats(m, cfg.connectivity), cfg.min_area);
                out << detection_record(f.stem().string(), lesions).dump() << "\n";
            } catch (const std::exception& e) {
                std::cerr << "detect failed for " << f.string() << ": " << e.what() << "\n";
                ++failed;
            }
        }
    } else {
        Network net = checkpoint_load(checkpoint);
        net.graph.set_training(false);
        for (const fs::path& f : list_images(images_dir)) {
            try {
                Sample s = preprocess_geometry(load_sample(f.string()), cfg);
                const Tensor probs = forward_one(net, s, cfg);
                const Detection d = detect(prob_plane(probs), cfg.threshold,
                                           cfg.connectivity, cfg.min_area);
                out << detection_record(f.stem().string(), d.lesions).dump() << "\n";
            } catch (const std::exception& e) {
                std::cerr << "detect failed for " << f.string() << ": " << e.what() << "\n";
                ++failed;
            }
        }
    }
    say(g, "detect out=" + out_path);
    return failed > 0 ? 1 : 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::vector<int>& folds, bool timing,
                 const RunConfig& cfg, const GlobalFlags& g) {
    Network net = checkpoint_load(checkpoint);
    const FoldSplit split = load_fold_table(cfg.folds_path());
    std::vector<Sample> all = load_fold_samples(cfg, split, g);

    std::vector<Sample> samples;
    for (Sample& s : all)
        if (folds.empty() || std::find(folds.begin(), folds.end(), s.fold) != folds.end())
            samples.push_back(std::move(s));
    if (samples.empty()) throw config_error("evaluate: selected folds are empty");

    EvalOptions eopts;
    eopts.threshold = cfg.threshold;
    eopts.threads = effective_threads(g);
    eopts.std_mean = cfg.std_mean;
    eopts.std_stdev = cfg.std_stdev;
    const EvalReport rep = evaluate(net, samples, eopts);

    // Table-style timing: median of >= 20 warm repetitions when requested
    double time_ms = rep.mean_ms;
    if (timing) {
        std::vector<double> reps;
        evaluate(net, samples, eopts); // warm-up
        for (int r = 0; r < 20; ++r) reps.push_back(evaluate(net, samples, eopts).mean_ms);
        std::sort(reps.begin(), reps.end());
        time_ms = (reps[9] + reps[10]) / 2.0;
    }

    // lesion-level detection quality plus the dataset-shape histograms
    Network eval_net = net;
    eval_net.graph.set_training(false);
    int tp = 0, fp = 0, fn = 0;
    std::map<std::size_t, std::size_t> lesions_per_image;
    std::map<std::size_t, std::size_t> area_bins;
    constexpr std::size_t kAreaBin = 250;
    for (const Sample& s : samples) {
        const Tensor probs = forward_one(eval_net, s, cfg);
        const Detection det =
            detect(prob_plane(probs), cfg.threshold, cfg.connectivity, cfg.min_area);
        std::vector<std::pair<double, double>> centroids;
        for (const Component& c : det.lesions)
            centroids.emplace_back(c.centroid_row, c.centroid_col);
        const BinaryMask truth = mask_from_labels(*s.mask);
        const MatchResult mr =
            match_lesions(centroids, truth, cfg.match_radius, cfg.connectivity);
        tp += mr.tp;
        fp += mr.fp;
        fn += mr.fn;

        const auto truth_comps = connected_components_with_stats(truth, cfg.connectivity);
        lesions_per_image[truth_comps.size()] += 1;
        for (const Component& c : truth_comps) area_bins[c.area / kAreaBin * kAreaBin] += 1;
    }
    const double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 1.0;
    const double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 1.0;
    const double f1 =
        precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;

    fs::create_directories(cfg.output_dir);
    const std::string csv_path = (fs::path(cfg.output_dir) / "evaluate_report.csv").string();
    {
        std::ofstream csv(csv_path);
        if (!csv) throw io_error("cannot write report: " + csv_path);
        char buf[160];
        csv << "Model,IOU,Dice,Time\n";
        std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.3f\n",
                      to_string(cfg.network.style).c_str(), 100.0 * rep.mean_iou,
                      100.0 * rep.mean_dice, time_ms);
        csv << buf;
    }

    json report;
    report["model"] = to_string(cfg.network.style);
    report["iou_pct"] = 100.0 * rep.mean_iou;
    report["dice_pct"] = 100.0 * rep.mean_dice;
    report["time_ms"] = time_ms;
    report["timing_note"] = "environment-specific; not comparable across hardware";
    report["images"] = samples.size();
    report["detection"] = {{"tp", tp},           {"fp", fp},
                           {"fn", fn},           {"precision", precision},
                           {"recall", recall},   {"f1", f1},
                           {"rule", "stand-in centroid matching (inside component or within "
                                    "match_radius px, greedy one-to-one)"}};
    json lpi = json::object();
    std::size_t total_images = 0, total_lesions = 0;
    for (const auto& [count, images] : lesions_per_image) {
        lpi[std::to_string(count)] = images;
        total_images += images;
        total_lesions += count * images;
    }
    json areas = json::object();
    for (const auto& [bin, n] : area_bins) areas[std::to_string(bin)] = n;
    report["histograms"] = {{"lesions_per_image", lpi},
                            {"lesion_area_bin_px", kAreaBin},
                            {"lesion_areas", areas},
                            {"total_images", total_images},
                            {"total_lesions", total_lesions}};
    json per_image = json::array();
    for (const ImageEval& e : rep.per_image)
        per_image.push_back(
            {{"id", e.id}, {"iou", e.iou}, {"dice", e.dice}, {"ms", e.ms}});
    report["per_image"] = per_image;

    const std::string json_path = (fs::path(cfg.output_dir) / "evaluate_report.json").string();
    std::ofstream jout(json_path);
    if (!jout) throw io_error("cannot write report: " + json_path);
    jout << report.dump(2) << "\n";

    char line[200];
    std::snprintf(line, sizeof(line),
                  "evaluate model=%s images=%zu iou_pct=%.2f dice_pct=%.2f time_ms=%.3f "
                  "precision=%.3f recall=%.3f f1=%.3f",
                  to_string(cfg.network.style).c_str(), samples.size(), 100.0 * rep.mean_iou,
                  100.0 * rep.mean_dice, time_ms, precision, recall, f1);
    say(g, line);
    say(g, "evaluate report_csv=" + csv_path + " report_json=" + json_path);
    return 0;
}

} // namespace segkit::cli
