#include "config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "segkit/errors.hpp"

namespace segkit::cli {

using nlohmann::json;

namespace {

/// Collects complaints so a bad config reports every offending key at once.
struct KeyErrors {
    std::vector<std::string> items;

    void add(const std::string& key, const std::string& why) {
        items.push_back(key + ": " + why);
    }

    void raise_if_any() const {
        if (items.empty()) return;
        std::string msg = "config errors:";
        for (const auto& e : items) msg += "\n  " + e;
        throw config_error(msg);
    }
};

template <typename T>
void read(const json& j, const char* key, T& out, KeyErrors& errs) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        errs.add(key, e.what());
    }
}

void read_pair(const json& j, const char* key, double& lo, double& hi, KeyErrors& errs) {
    if (!j.contains(key)) return;
    try {
        const auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != 2) throw config_error("expected [lo, hi]");
        lo = v[0];
        hi = v[1];
    } catch (const std::exception& e) {
        errs.add(key, e.what());
    }
}

void read_triplet(const json& j, const char* key, std::array<float, 3>& out, KeyErrors& errs) {
    if (!j.contains(key)) return;
    try {
        const auto v = j.at(key).get<std::vector<float>>();
        if (v.size() != 3) throw config_error("expected three values");
        out = {v[0], v[1], v[2]};
    } catch (const std::exception& e) {
        errs.add(key, e.what());
    }
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    KeyErrors errs;

    read(j, "data_root", cfg.data_root, errs);
    read(j, "output_dir", cfg.output_dir, errs);
    read(j, "folds_file", cfg.folds_file, errs);
    read(j, "seed", cfg.seed, errs);
    read(j, "threads", cfg.threads, errs);
    read(j, "val_fold", cfg.val_fold, errs);

    if (j.contains("network")) {
        const json& n = j.at("network");
        std::string style = to_string(cfg.network.style);
        read(n, "style", style, errs);
        try {
            cfg.network.style = net_style_from_string(style);
        } catch (const config_error& e) {
            errs.add("network.style", e.what());
        }
        read(n, "input_channels", cfg.network.input_channels, errs);
        read(n, "base_width", cfg.network.base_width, errs);
        read(n, "depth", cfg.network.depth, errs);
        read(n, "output_classes", cfg.network.output_classes, errs);
    }

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        if (s.contains("phases")) {
            try {
                cfg.schedule.phases.clear();
                for (const json& p : s.at("phases"))
                    cfg.schedule.phases.push_back(
                        Phase{p.at("epochs").get<std::size_t>(), p.at("rate").get<double>()});
            } catch (const json::exception& e) {
                errs.add("schedule.phases", e.what());
            }
        }
        read(s, "batch_size", cfg.schedule.batch_size, errs);
    }
    cfg.schedule.seed = cfg.seed;

    if (j.contains("loss")) {
        std::string variant = "aggregate";
        read(j.at("loss"), "variant", variant, errs);
        if (variant == "aggregate") cfg.loss_variant = JaccardVariant::aggregate;
        else if (variant == "per_pixel") cfg.loss_variant = JaccardVariant::per_pixel;
        else errs.add("loss.variant", "expected 'aggregate' or 'per_pixel', got '" + variant + "'");
    }

    if (j.contains("preprocess")) {
        const json& p = j.at("preprocess");
        read(p, "crop", cfg.crop, errs);
        read_triplet(p, "mean", cfg.std_mean, errs);
        read_triplet(p, "std", cfg.std_stdev, errs);
        for (float s : cfg.std_stdev)
            if (s <= 0.0f) errs.add("preprocess.std", "components must be > 0");
    }

    if (j.contains("augment")) {
        const json& a = j.at("augment");
        read(a, "enabled", cfg.augment_enabled, errs);
        read(a, "rotation_deg", cfg.augment.rotation_deg, errs);
        read_pair(a, "scale", cfg.augment.scale_lo, cfg.augment.scale_hi, errs);
        read(a, "shift_frac", cfg.augment.shift_frac, errs);
        read(a, "shear_deg", cfg.augment.shear_deg, errs);
        read(a, "hflip_p", cfg.augment.hflip_p, errs);
        read(a, "vflip_p", cfg.augment.vflip_p, errs);
        read(a, "hue_deg", cfg.augment.hue_deg, errs);
        read_pair(a, "sat", cfg.augment.sat_lo, cfg.augment.sat_hi, errs);
        read_pair(a, "val", cfg.augment.val_lo, cfg.augment.val_hi, errs);
        try {
            cfg.augment.validate();
        } catch (const config_error& e) {
            errs.add("augment", e.what());
        }
    }

    if (j.contains("postprocess")) {
        const json& p = j.at("postprocess");
        read(p, "threshold", cfg.threshold, errs);
        read(p, "min_area", cfg.min_area, errs);
        read(p, "connectivity", cfg.connectivity, errs);
        read(p, "match_radius", cfg.match_radius, errs);
        if (cfg.threshold < 0.0f || cfg.threshold > 1.0f)
            errs.add("postprocess.threshold", "must be in [0,1]");
        if (cfg.connectivity != 4 && cfg.connectivity != 8)
            errs.add("postprocess.connectivity", "must be 4 or 8");
        if (cfg.match_radius < 0.0) errs.add("postprocess.match_radius", "must be >= 0");
    }

    errs.raise_if_any();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json j;
    j["data_root"] = cfg.data_root;
    j["output_dir"] = cfg.output_dir;
    j["folds_file"] = cfg.folds_file;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["val_fold"] = cfg.val_fold;
    j["network"] = {{"style", to_string(cfg.network.style)},
                    {"input_channels", cfg.network.input_channels},
                    {"base_width", cfg.network.base_width},
                    {"depth", cfg.network.depth},
                    {"output_classes", cfg.network.output_classes}};
    json phases = json::array();
    for (const Phase& p : cfg.schedule.phases)
        phases.push_back({{"epochs", p.epochs}, {"rate", p.rate}});
    j["schedule"] = {{"phases", phases}, {"batch_size", cfg.schedule.batch_size}};
    j["loss"] = {{"variant", cfg.loss_variant == JaccardVariant::aggregate ? "aggregate"
                                                                           : "per_pixel"}};
    j["preprocess"] = {{"crop", cfg.crop},
                       {"mean", {cfg.std_mean[0], cfg.std_mean[1], cfg.std_mean[2]}},
                       {"std", {cfg.std_stdev[0], cfg.std_stdev[1], cfg.std_stdev[2]}}};
    j["augment"] = {{"enabled", cfg.augment_enabled},
                    {"rotation_deg", cfg.augment.rotation_deg},
                    {"scale", {cfg.augment.scale_lo, cfg.augment.scale_hi}},
                    {"shift_frac", cfg.augment.shift_frac},
                    {"shear_deg", cfg.augment.shear_deg},
                    {"hflip_p", cfg.augment.hflip_p},
                    {"vflip_p", cfg.augment.vflip_p},
                    {"hue_deg", cfg.augment.hue_deg},
                    {"sat", {cfg.augment.sat_lo, cfg.augment.sat_hi}},
                    {"val", {cfg.augment.val_lo, cfg.augment.val_hi}}};
    j["postprocess"] = {{"threshold", cfg.threshold},
                        {"min_area", cfg.min_area},
                        {"connectivity", cfg.connectivity},
                        {"match_radius", cfg.match_radius}};
    return j.dump(2) + "\n";
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write config: " + path);
    out << serialize_config(cfg);
}

} // namespace segkit::cli
