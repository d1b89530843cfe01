#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/nn.hpp"
#include "radfuse/tensor.hpp"

namespace radfuse {

// Dynamic object classes of the 17-class occupancy benchmark.
inline constexpr std::array<std::string_view, 8> kDynamicClassNames = {
    "bicycle", "bus", "car", "construction_vehicle", "motorcycle", "pedestrian", "trailer", "truck"};

inline std::vector<int> dynamic_ids_from_names(const std::vector<std::string>& names) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (std::find(kDynamicClassNames.begin(), kDynamicClassNames.end(), names[i]) != kDynamicClassNames.end())
            ids.push_back(static_cast<int>(i));
    return ids;
}

/// Z x H x W voxel labels. Ids 0..K-1 are semantic classes, K is free.
struct OccupancyVolume {
    std::size_t depth = 0, height = 0, width = 0;
    int num_classes = 0; // K
    std::vector<std::int32_t> labels;
    std::vector<std::string> class_names; // size K (may be empty: names default to ids)
    std::vector<int> dynamic_ids;

    OccupancyVolume() = default;
    OccupancyVolume(std::size_t z, std::size_t h, std::size_t w, int k)
        : depth(z), height(h), width(w), num_classes(k), labels(z * h * w, k) {
        require(k >= 1, "occupancy volume: need at least one semantic class");
    }

    int free_id() const noexcept { return num_classes; }
    std::size_t voxels() const noexcept { return labels.size(); }
    std::int32_t& at(std::size_t z, std::size_t i, std::size_t j) { return labels[(z * height + i) * width + j]; }
    std::int32_t at(std::size_t z, std::size_t i, std::size_t j) const { return labels[(z * height + i) * width + j]; }

    std::string name(int id) const {
        if (id == free_id()) return "free";
        if (static_cast<std::size_t>(id) < class_names.size()) return class_names[static_cast<std::size_t>(id)];
        return "class" + std::to_string(id);
    }

    void validate() const {
        require(labels.size() == depth * height * width, "occupancy volume: label count mismatch");
        for (auto l : labels)
            require(l >= 0 && l <= num_classes, "occupancy volume: label " + std::to_string(l) + " out of range");
        require(class_names.empty() || class_names.size() == static_cast<std::size_t>(num_classes),
                "occupancy volume: class name table size mismatch");
        for (int id : dynamic_ids)
            require(id >= 0 && id < num_classes, "occupancy volume: dynamic class id out of range");
    }

    bool same_dims(const OccupancyVolume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
};

/// Shared per-voxel linear map, C -> K+1 logits.
template <typename T>
Volume<T> occupancy_head(const Volume<T>& feats, const LinearLayer<T>& head) {
    require(feats.channels() == head.in_dim(), "occupancy_head: features have " + std::to_string(feats.channels()) +
                                                   " channels, head expects " + std::to_string(head.in_dim()));
    const std::size_t n = feats.depth() * feats.plane();
    const std::size_t cin = feats.channels(), cout = head.out_dim();
    Matrix<T> x(n, cin);
    for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t v = 0; v < n; ++v) x(v, c) = feats.data()[c * n + v];
    const Matrix<T> y = linear_forward(head, x);
    Volume<T> logits(cout, feats.depth(), feats.height(), feats.width());
    for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t v = 0; v < n; ++v) logits.data()[c * n + v] = y(v, c);
    return logits;
}

template <typename T>
Volume<T> occupancy_head_backward(LinearLayer<T>& head, const Volume<T>& feats, const Volume<T>& grad_logits) {
    const std::size_t n = feats.depth() * feats.plane();
    const std::size_t cin = feats.channels(), cout = head.out_dim();
    require(grad_logits.channels() == cout && grad_logits.depth() * grad_logits.plane() == n,
            "occupancy_head_backward: shape mismatch");
    Volume<T> grad(cin, feats.depth(), feats.height(), feats.width());
    std::vector<T> x(cin), g(cout), gx(cin);
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t c = 0; c < cin; ++c) x[c] = feats.data()[c * n + v];
        for (std::size_t c = 0; c < cout; ++c) g[c] = grad_logits.data()[c * n + v];
        std::fill(gx.begin(), gx.end(), T(0));
        head.apply_backward(x, g, gx);
        for (std::size_t c = 0; c < cin; ++c) grad.data()[c * n + v] = gx[c];
    }
    return grad;
}

/// Per-voxel argmax over K+1 logit channels; ties go to the smaller id.
template <typename T>
OccupancyVolume predict(const Volume<T>& logits) {
    require(logits.channels() >= 2, "predict: need at least two logit channels");
    OccupancyVolume out(logits.depth(), logits.height(), logits.width(), static_cast<int>(logits.channels()) - 1);
    const std::size_t n = out.voxels();
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t best = 0;
        T best_val = logits.data()[v];
        for (std::size_t c = 1; c < logits.channels(); ++c) {
            const T val = logits.data()[c * n + v];
            if (val > best_val) {
                best_val = val;
                best = c;
            }
        }
        out.labels[v] = static_cast<std::int32_t>(best);
    }
    return out;
}

/// Mean cross-entropy over all voxels (free class included unless ignored).
template <typename T>
LossResult<T> voxel_cross_entropy(const Volume<T>& logits, const OccupancyVolume& gt, int ignore_label = kNoIgnore) {
    require(logits.depth() == gt.depth && logits.height() == gt.height && logits.width() == gt.width,
            "voxel_cross_entropy: logits " + logits.shape_string() + " vs labels " + std::to_string(gt.depth) + "x" +
                std::to_string(gt.height) + "x" + std::to_string(gt.width));
    const std::size_t n = gt.voxels(), k = logits.channels();
    Matrix<T> rows(n, k);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t v = 0; v < n; ++v) rows(v, c) = logits.data()[c * n + v];
    std::vector<int> labels(gt.labels.begin(), gt.labels.end());
    auto res = cross_entropy_loss(rows, labels, ignore_label);
    Matrix<T> grad(k, n);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t c = 0; c < k; ++c) grad(c, v) = res.grad(v, c);
    res.grad = std::move(grad); // now channel-major, matching the logits volume layout
    return res;
}

/// Per-class intersection and union counts; summing counts across scenes
/// gives dataset-level IoU.
struct ConfusionCounts {
    std::vector<std::int64_t> intersection;
    std::vector<std::int64_t> union_;

    explicit ConfusionCounts(int num_classes = 0)
        : intersection(static_cast<std::size_t>(num_classes), 0), union_(static_cast<std::size_t>(num_classes), 0) {}

    void add(const OccupancyVolume& pred, const OccupancyVolume& gt) {
        require(pred.same_dims(gt), "miou: prediction and ground truth dims differ");
        require(pred.num_classes == gt.num_classes, "miou: class count mismatch");
        require(intersection.size() == static_cast<std::size_t>(gt.num_classes), "miou: counts sized for another K");
        const int K = gt.num_classes;
        for (std::size_t v = 0; v < gt.voxels(); ++v) {
            const int p = pred.labels[v], g = gt.labels[v];
            if (p == g) {
                if (p < K) {
                    ++intersection[static_cast<std::size_t>(p)];
                    ++union_[static_cast<std::size_t>(p)];
                }
            } else {
                if (p < K) ++union_[static_cast<std::size_t>(p)];
                if (g < K) ++union_[static_cast<std::size_t>(g)];
            }
        }
    }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        require(o.intersection.size() == intersection.size(), "confusion counts: class count mismatch");
        for (std::size_t c = 0; c < intersection.size(); ++c) {
            intersection[c] += o.intersection[c];
            union_[c] += o.union_[c];
        }
        return *this;
    }
};

struct ClassIoU {
    int id = 0;
    std::string name;
    std::int64_t intersection = 0;
    std::int64_t union_ = 0;
    std::optional<double> iou; // absent when the class has zero union
};

struct MetricsReport {
    std::vector<ClassIoU> per_class;
    double miou = std::numeric_limits<double>::quiet_NaN();
    double miou_dynamic = std::numeric_limits<double>::quiet_NaN();
    std::size_t evaluated = 0;
    std::size_t evaluated_dynamic = 0;
};

/// IoU per class in `classes`, means over classes with nonzero union. The
/// dynamic mean uses the same rule over `dynamic_ids`.
inline MetricsReport metrics_from_counts(const ConfusionCounts& counts, const std::vector<int>& classes,
                                         const std::vector<int>& dynamic_ids, const std::vector<std::string>& names) {
    MetricsReport rep;
    double sum = 0.0, sum_d = 0.0;
    const std::set<int> dyn(dynamic_ids.begin(), dynamic_ids.end());
    for (int c : classes) {
        require(c >= 0 && static_cast<std::size_t>(c) < counts.intersection.size(),
                "miou: class id " + std::to_string(c) + " out of range");
        ClassIoU ci;
        ci.id = c;
        ci.name = static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)] : "class" + std::to_string(c);
        ci.intersection = counts.intersection[static_cast<std::size_t>(c)];
        ci.union_ = counts.union_[static_cast<std::size_t>(c)];
        if (ci.union_ > 0) {
            ci.iou = static_cast<double>(ci.intersection) / static_cast<double>(ci.union_);
            sum += *ci.iou;
            ++rep.evaluated;
            if (dyn.contains(c)) {
                sum_d += *ci.iou;
                ++rep.evaluated_dynamic;
            }
        }
        rep.per_class.push_back(std::move(ci));
    }
    if (rep.evaluated) rep.miou = sum / static_cast<double>(rep.evaluated);
    if (rep.evaluated_dynamic) rep.miou_dynamic = sum_d / static_cast<double>(rep.evaluated_dynamic);
    return rep;
}

inline std::vector<int> semantic_classes(int num_classes) {
    std::vector<int> ids(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) ids[static_cast<std::size_t>(c)] = c;
    return ids;
}

inline MetricsReport miou(const OccupancyVolume& pred, const OccupancyVolume& gt, const std::vector<int>& classes) {
    ConfusionCounts counts(gt.num_classes);
    counts.add(pred, gt);
    return metrics_from_counts(counts, classes, gt.dynamic_ids, gt.class_names);
}

// Free class excluded; dynamic subset taken from the ground truth.
inline MetricsReport miou(const OccupancyVolume& pred, const OccupancyVolume& gt) {
    return miou(pred, gt, semantic_classes(gt.num_classes));
}

struct Gain {
    double absolute = 0;
    double percent = 0;
};

inline Gain relative_gain(double baseline, double fused) {
    require(std::isfinite(baseline) && std::isfinite(fused), "relative_gain: non-finite input");
    require(baseline > 0, "relative_gain: baseline must be > 0");
    const double delta = fused - baseline;
    return {delta, 100.0 * delta / baseline};
}

} // namespace radfuse
