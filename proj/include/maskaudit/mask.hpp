#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "maskaudit/error.hpp"

namespace maskaudit {

struct Pixel {
    int x = 0;
    int y = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Row-major binary raster. Value semantics; all algebra is closed over
/// masks of identical dimensions.
class BinaryMask {
public:
    BinaryMask(int width, int height, bool fill = false)
        : width_(width),
          height_(height),
          bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                fill ? 1 : 0) {
        if (width < 1 || height < 1) {
            throw std::invalid_argument("BinaryMask dimensions must be >= 1");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    bool at(int x, int y) const {
        return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
    }

    void set(int x, int y, bool v) {
        bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
    }

    int area() const {
        int n = 0;
        for (std::uint8_t b : bits_) n += b;
        return n;
    }

    bool empty() const {
        return std::all_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b == 0; });
    }

    bool same_size(const BinaryMask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    std::vector<Pixel> foreground() const {
        std::vector<Pixel> out;
        for (int y = 0; y < height_; ++y) {
            for (int x = 0; x < width_; ++x) {
                if (at(x, y)) out.push_back({x, y});
            }
        }
        return out;
    }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> bits_;
};

inline void require_same_size(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_size(b)) {
        throw DimensionMismatch("mask dimensions differ: " + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                                "x" + std::to_string(b.height()));
    }
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) || b.at(x, y));
    return out;
}

inline BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) && b.at(x, y));
    return out;
}

inline BinaryMask mask_difference(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            out.set(x, y, a.at(x, y) && !b.at(x, y));
    return out;
}

inline bool is_subset(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (a.at(x, y) && !b.at(x, y)) return false;
    return true;
}

inline bool is_disjoint(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x)
            if (a.at(x, y) && b.at(x, y)) return false;
    return true;
}

/// |a ∩ b| / |a ∪ b|. Throws BothEmpty when the ratio is undefined.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    long long inter = 0;
    long long uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            const bool pa = a.at(x, y);
            const bool pb = b.at(x, y);
            inter += (pa && pb) ? 1 : 0;
            uni += (pa || pb) ? 1 : 0;
        }
    }
    if (uni == 0) {
        throw BothEmpty("IoU undefined: both masks empty");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

enum class ElementShape { rectangle, ellipse };

/// Symmetric structuring element. Size (0,0) is the identity for both
/// shapes; the ellipse membership test inflates each axis by half a pixel
/// so the degenerate empty ellipse cannot occur.
struct StructuringElement {
    ElementShape shape = ElementShape::rectangle;
    int half_width = 0;
    int half_height = 0;

    bool contains(int dx, int dy) const {
        if (shape == ElementShape::rectangle) {
            return std::abs(dx) <= half_width && std::abs(dy) <= half_height;
        }
        // (dx / (hw + 1/2))^2 + (dy / (hh + 1/2))^2 <= 1, in exact integers.
        const long long ax = 2LL * half_width + 1;
        const long long ay = 2LL * half_height + 1;
        const long long ex = 2LL * dx;
        const long long ey = 2LL * dy;
        return ex * ex * ay * ay + ey * ey * ax * ax <= ax * ax * ay * ay;
    }

    std::vector<Pixel> offsets() const {
        std::vector<Pixel> out;
        for (int dy = -half_height; dy <= half_height; ++dy) {
            for (int dx = -half_width; dx <= half_width; ++dx) {
                if (contains(dx, dy)) out.push_back({dx, dy});
            }
        }
        return out;
    }

    friend bool operator==(const StructuringElement&, const StructuringElement&) = default;
};

/// Dilation clips at the image border: pixels pushed off the canvas are
/// discarded. Result is always a superset of the input.
inline BinaryMask dilate(const BinaryMask& m, const StructuringElement& s) {
    const auto offs = s.offsets();
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            for (const Pixel& o : offs) {
                const int px = x + o.x;
                const int py = y + o.y;
                if (out.in_bounds(px, py)) out.set(px, py, true);
            }
        }
    }
    return out;
}

/// Erosion treats off-image positions as background, so foreground touching
/// the border erodes away. Result is always a subset of the input.
inline BinaryMask erode(const BinaryMask& m, const StructuringElement& s) {
    const auto offs = s.offsets();
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            bool keep = true;
            for (const Pixel& o : offs) {
                const int px = x + o.x;
                const int py = y + o.y;
                if (!m.in_bounds(px, py) || !m.at(px, py)) {
                    keep = false;
                    break;
                }
            }
            if (keep) out.set(x, y, true);
        }
    }
    return out;
}

/// Foreground pixels with at least one 4-neighbor that is background or
/// off-image.
inline BinaryMask boundary(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    static constexpr int kDx[4] = {1, -1, 0, 0};
    static constexpr int kDy[4] = {0, 0, 1, -1};
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            for (int k = 0; k < 4; ++k) {
                const int px = x + kDx[k];
                const int py = y + kDy[k];
                if (!m.in_bounds(px, py) || !m.at(px, py)) {
                    out.set(x, y, true);
                    break;
                }
            }
        }
    }
    return out;
}

/// Inclusive pixel-coordinate box.
struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    long long area() const {
        return static_cast<long long>(x_max - x_min + 1) * (y_max - y_min + 1);
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox bbox(const BinaryMask& m) {
    BoundingBox b{m.width(), m.height(), -1, -1};
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (!m.at(x, y)) continue;
            b.x_min = std::min(b.x_min, x);
            b.y_min = std::min(b.y_min, y);
            b.x_max = std::max(b.x_max, x);
            b.y_max = std::max(b.y_max, y);
        }
    }
    if (b.x_max < 0) {
        throw EmptyMask("bbox of an empty mask");
    }
    return b;
}

inline double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
    const int ix_min = std::max(a.x_min, b.x_min);
    const int iy_min = std::max(a.y_min, b.y_min);
    const int ix_max = std::min(a.x_max, b.x_max);
    const int iy_max = std::min(a.y_max, b.y_max);
    long long inter = 0;
    if (ix_min <= ix_max && iy_min <= iy_max) {
        inter = static_cast<long long>(ix_max - ix_min + 1) * (iy_max - iy_min + 1);
    }
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// DAVIS-style contour tolerance: ceil(0.8% of the image diagonal), at
/// least one pixel.
inline int default_boundary_tolerance(int width, int height) {
    const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
    return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

struct JFScore {
    double j = 0.0;
    double f = 0.0;
};

/// Region Jaccard plus tolerance-matched contour F-measure. A boundary
/// pixel matches when it falls within `tolerance` (square dilation) of the
/// other mask's boundary. Empty-vs-empty scores (1, 1); exactly one empty
/// scores (0, 0).
inline JFScore jaccard_and_boundary_f(const BinaryMask& pred, const BinaryMask& gt,
                                      int tolerance) {
    require_same_size(pred, gt);
    const bool pred_empty = pred.empty();
    const bool gt_empty = gt.empty();
    if (pred_empty && gt_empty) return {1.0, 1.0};
    if (pred_empty || gt_empty) return {0.0, 0.0};

    const double j = mask_iou(pred, gt);

    const BinaryMask bp = boundary(pred);
    const BinaryMask bg = boundary(gt);
    if (bp.empty() && bg.empty()) return {j, 1.0};
    if (bp.empty() || bg.empty()) return {j, 0.0};

    const StructuringElement tol{ElementShape::rectangle, tolerance, tolerance};
    const BinaryMask bg_zone = dilate(bg, tol);
    const BinaryMask bp_zone = dilate(bp, tol);

    const int matched_pred = mask_intersection(bp, bg_zone).area();
    const int matched_gt = mask_intersection(bg, bp_zone).area();
    const double precision = static_cast<double>(matched_pred) / bp.area();
    const double recall = static_cast<double>(matched_gt) / bg.area();
    const double f =
        (precision + recall > 0.0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return {j, f};
}

inline JFScore jaccard_and_boundary_f(const BinaryMask& pred, const BinaryMask& gt) {
    return jaccard_and_boundary_f(pred, gt, default_boundary_tolerance(gt.width(), gt.height()));
}

} // namespace maskaudit
