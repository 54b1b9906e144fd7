#include "segkit/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segkit/errors.hpp"

namespace segkit {

BinaryMask binarize(const Tensor& prob, float threshold) {
    if (threshold < 0.0f || threshold > 1.0f)
        throw config_error("binarize: threshold " + std::to_string(threshold) +
                           " outside [0,1]");
    const auto& s = prob.shape();
    if (s.size() < 2) throw shape_error("binarize: need at least H x W");
    BinaryMask m(s[s.size() - 2], s[s.size() - 1]);
    if (m.size() != prob.size())
        throw shape_error("binarize: leading extents must be 1, got " + shape_str(prob));
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = prob[i] > threshold ? 255 : 0;
    return m;
}

namespace {

class UnionFind {
public:
    std::int32_t make() {
        parent_.push_back(std::int32_t(parent_.size()));
        return parent_.back();
    }

    std::int32_t find(std::int32_t x) {
        std::int32_t root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) { // path compression
            const std::int32_t next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a > b) std::swap(a, b); // keep the smaller provisional id as root
        parent_[b] = a;
    }

private:
    std::vector<std::int32_t> parent_;
};

} // namespace

LabelImage label_components(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw config_error("label_components: connectivity must be 4 or 8");

    LabelImage out;
    out.rows = mask.rows;
    out.cols = mask.cols;
    out.labels.assign(mask.rows * mask.cols, 0);
    if (mask.size() == 0) return out;

    const std::size_t R = mask.rows, C = mask.cols;
    std::vector<std::int32_t> prov(R * C, -1);
    UnionFind uf;

    // first pass: provisional labels from already-scanned neighbors
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            if (!mask.data[i]) continue;

            std::int32_t neighbors[4];
            int n = 0;
            if (c > 0 && prov[i - 1] >= 0) neighbors[n++] = prov[i - 1];
            if (r > 0) {
                const std::size_t up = i - C;
                if (prov[up] >= 0) neighbors[n++] = prov[up];
                if (connectivity == 8) {
                    if (c > 0 && prov[up - 1] >= 0) neighbors[n++] = prov[up - 1];
                    if (c + 1 < C && prov[up + 1] >= 0) neighbors[n++] = prov[up + 1];
                }
            }

            if (n == 0) {
                prov[i] = uf.make();
                continue;
            }
            std::int32_t m = neighbors[0];
            for (int k = 1; k < n; ++k) m = std::min(m, neighbors[k]);
            prov[i] = m;
            for (int k = 0; k < n; ++k) uf.unite(m, neighbors[k]);
        }
    }

    // second pass: resolve roots, number final labels by first encounter
    std::vector<std::int32_t> final_of_root;
    for (std::size_t i = 0; i < R * C; ++i) {
        if (prov[i] < 0) continue;
        const std::int32_t root = uf.find(prov[i]);
        if (std::size_t(root) >= final_of_root.size())
            final_of_root.resize(root + 1, 0);
        if (final_of_root[root] == 0) final_of_root[root] = ++out.count;
        out.labels[i] = final_of_root[root];
    }
    return out;
}

std::vector<Component> connected_components_with_stats(const BinaryMask& mask,
                                                       int connectivity) {
    const LabelImage li = label_components(mask, connectivity);
    std::vector<Component> comps(li.count);
    std::vector<double> sum_r(li.count, 0.0), sum_c(li.count, 0.0);
    std::vector<std::size_t> min_r(li.count, mask.rows), max_r(li.count, 0);
    std::vector<std::size_t> min_c(li.count, mask.cols), max_c(li.count, 0);

    for (std::size_t r = 0; r < mask.rows; ++r)
        for (std::size_t c = 0; c < mask.cols; ++c) {
            const std::int32_t l = li.at(r, c);
            if (l == 0) continue;
            Component& comp = comps[l - 1];
            comp.area += 1;
            sum_r[l - 1] += double(r);
            sum_c[l - 1] += double(c);
            min_r[l - 1] = std::min(min_r[l - 1], r);
            max_r[l - 1] = std::max(max_r[l - 1], r);
            min_c[l - 1] = std::min(min_c[l - 1], c);
            max_c[l - 1] = std::max(max_c[l - 1], c);
        }

    for (int l = 0; l < li.count; ++l) {
        Component& comp = comps[l];
        comp.label = l + 1;
        comp.centroid_row = sum_r[l] / double(comp.area);
        comp.centroid_col = sum_c[l] / double(comp.area);
        comp.top = min_r[l];
        comp.left = min_c[l];
        comp.height = max_r[l] - min_r[l] + 1;
        comp.width = max_c[l] - min_c[l] + 1;
    }
    return comps;
}

std::vector<Component> filter_components(std::vector<Component> components,
                                         std::size_t min_area) {
    std::erase_if(components, [min_area](const Component& c) { return c.area < min_area; });
    return components;
}

Detection detect(const Tensor& prob, float threshold, int connectivity, std::size_t min_area) {
    const BinaryMask mask = binarize(prob, threshold);
    Detection d;
    d.lesions = filter_components(connected_components_with_stats(mask, connectivity), min_area);
    d.present = !d.lesions.empty();
    return d;
}

MatchResult match_lesions(const std::vector<std::pair<double, double>>& predicted,
                          const BinaryMask& truth, double radius, int connectivity) {
    if (radius < 0.0) throw config_error("match_lesions: radius must be >= 0");

    const LabelImage li = label_components(truth, connectivity);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> pixels(li.count);
    for (std::size_t r = 0; r < truth.rows; ++r)
        for (std::size_t c = 0; c < truth.cols; ++c) {
            const std::int32_t l = li.at(r, c);
            if (l > 0) pixels[l - 1].emplace_back(r, c);
        }

    struct Candidate {
        double dist;
        int pred;
        int comp; // 0-based
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < predicted.size(); ++p) {
        const auto [pr, pc] = predicted[p];
        // inside the component counts: the nearest member pixel is < 1 px away
        for (int comp = 0; comp < li.count; ++comp) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [r, c] : pixels[comp]) {
                const double d = std::hypot(pr - double(r), pc - double(c));
                if (d < best) best = d;
            }
            if (best <= radius || best < 1.0)
                candidates.push_back({best, int(p), comp});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.comp < b.comp;
    });

    MatchResult res;
    std::vector<char> pred_used(predicted.size(), 0), comp_used(li.count, 0);
    for (const Candidate& cand : candidates) {
        if (pred_used[cand.pred] || comp_used[cand.comp]) continue;
        pred_used[cand.pred] = 1;
        comp_used[cand.comp] = 1;
        res.pairs.emplace_back(cand.pred, cand.comp + 1);
        ++res.tp;
    }
    res.fp = int(predicted.size()) - res.tp;
    res.fn = li.count - res.tp;
    return res;
}

} // namespace segkit
