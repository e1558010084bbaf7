// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/image.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "ornatry/errors.hpp"

namespace ornatry {

float Image::sample_bilinear(float x, float y, int ch) const {
    x = std::clamp(x, 0.f, static_cast<float>(w - 1));
    y = std::clamp(y, 0.f, static_cast<float>(h - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, w - 1);
    int y1 = std::min(y0 + 1, h - 1);
    float fx = x - x0, fy = y - y0;
    float v00 = at(x0, y0, ch), v10 = at(x1, y0, ch);
    float v01 = at(x0, y1, ch), v11 = at(x1, y1, ch);
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

size_t Mask::count() const {
    size_t n = 0;
    for (uint8_t v : px) n += v ? 1 : 0;
    return n;
}

Image mask_to_image(const Mask& m) {
    Image img(m.w, m.h, 1);
    for (size_t i = 0; i < m.px.size(); ++i) img.px[i] = m.px[i] ? 1.f : 0.f;
    return img;
}

Mask image_to_mask(const Image& img, float threshold, int channel) {
    Mask m(img.w, img.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) m.at(x, y) = img.at(x, y, channel) >= threshold ? 1 : 0;
    return m;
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw ParamError("resize_bilinear: non-positive output size");
    Image dst(out_w, out_h, src.c);
    // align_corners mapping: out i -> src i*(sw-1)/(ow-1)
    float sx = out_w > 1 ? static_cast<float>(src.w - 1) / (out_w - 1) : 0.f;
    float sy = out_h > 1 ? static_cast<float>(src.h - 1) / (out_h - 1) : 0.f;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            for (int ch = 0; ch < src.c; ++ch)
                dst.at(x, y, ch) = src.sample_bilinear(x * sx, y * sy, ch);
        }
    }
    return dst;
}

Image resize_nearest(const Image& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw ParamError("resize_nearest: non-positive output size");
    Image dst(out_w, out_h, src.c);
    // pixel-center mapping: an enlargement followed by the matching shrink
    // lands every sample back in its own cell, so the pair is exactly inverse
    for (int y = 0; y < out_h; ++y) {
        int sy = std::min(static_cast<int>((2 * y + 1) * static_cast<int64_t>(src.h) / (2 * out_h)),
                          src.h - 1);
        for (int x = 0; x < out_w; ++x) {
            int sx = std::min(
                static_cast<int>((2 * x + 1) * static_cast<int64_t>(src.w) / (2 * out_w)),
                src.w - 1);
            for (int ch = 0; ch < src.c; ++ch) dst.at(x, y, ch) = src.at(sx, sy, ch);
        }
    }
    return dst;
}

Image downsample_area(const Image& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw ParamError("downsample_area: non-positive output size");
    Image dst(out_w, out_h, src.c);
    double rx = static_cast<double>(src.w) / out_w;
    double ry = static_cast<double>(src.h) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double y0 = oy * ry, y1 = (oy + 1) * ry;
        for (int ox = 0; ox < out_w; ++ox) {
            double x0 = ox * rx, x1 = (ox + 1) * rx;
            for (int ch = 0; ch < src.c; ++ch) {
                double acc = 0, area = 0;
                for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)); ++y) {
                    double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                    for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)); ++x) {
                        double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                        acc += wx * wy * src.at(std::min(x, src.w - 1), std::min(y, src.h - 1), ch);
                        area += wx * wy;
                    }
                }
                dst.at(ox, oy, ch) = static_cast<float>(acc / area);
            }
        }
    }
    return dst;
}

std::vector<int> label_components(const Mask& m, int& n_components) {
    std::vector<int> labels(m.px.size(), 0);
    n_components = 0;
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            if (!m.at(x, y) || labels[y * m.w + x]) continue;
            ++n_components;
            labels[y * m.w + x] = n_components;
            queue.emplace_back(x, y);
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= m.w || ny >= m.h) continue;
                        if (!m.at(nx, ny) || labels[ny * m.w + nx]) continue;
                        labels[ny * m.w + nx] = n_components;
                        queue.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    return labels;
}

int count_components(const Mask& m, int min_area) {
    int n = 0;
    std::vector<int> labels = label_components(m, n);
    if (min_area <= 1) return n;
    std::vector<int> areas(n + 1, 0);
    for (int l : labels) ++areas[l];
    int kept = 0;
    for (int i = 1; i <= n; ++i)
        if (areas[i] >= min_area) ++kept;
    return kept;
}

Box bounding_box(const Mask& m) {
    int x0 = m.w, y0 = m.h, x1 = -1, y1 = -1;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

namespace {

double cross(const std::array<float, 2>& o, const std::array<float, 2>& a,
             const std::array<float, 2>& b) {
    return (a[0] - o[0]) * static_cast<double>(b[1] - o[1]) -
           (a[1] - o[1]) * static_cast<double>(b[0] - o[0]);
}

bool point_in_convex(const std::vector<std::array<float, 2>>& poly, float x, float y,
                     float eps = 1e-4f) {
    size_t n = poly.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % n];
        double c = (q[0] - p[0]) * static_cast<double>(y - p[1]) -
                   (q[1] - p[1]) * static_cast<double>(x - p[0]);
        if (c < -eps) return false;
    }
    return true;
}

}  // namespace

std::vector<std::array<float, 2>> convex_hull_points(const Mask& m) {
    std::vector<std::array<float, 2>> pts;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(x, y)) pts.push_back({static_cast<float>(x), static_cast<float>(y)});
    if (pts.empty()) throw ParamError("convex hull of empty mask");
    std::sort(pts.begin(), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<std::array<float, 2>> hull(2 * pts.size());
    size_t k = 0;
    for (const auto& p : pts) {  // lower
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {  // upper
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;  // counter-clockwise in (x right, y down) raster sense
}

Mask fill_convex_hull(const Mask& m) {
    auto hull = convex_hull_points(m);
    Mask out(m.w, m.h);
    if (hull.size() < 3) {
        out = m;
        return out;
    }
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (point_in_convex(hull, static_cast<float>(x), static_cast<float>(y)))
                out.at(x, y) = 1;
    for (size_t i = 0; i < m.px.size(); ++i)  // superset guarantee
        if (m.px[i]) out.px[i] = 1;
    return out;
}

Mask fill_min_area_rect(const Mask& m) {
    auto hull = convex_hull_points(m);
    Mask out(m.w, m.h);
    if (hull.size() < 3) {
        Box b = bounding_box(m);
        for (int y = b.y; y < b.y + b.h; ++y)
            for (int x = b.x; x < b.x + b.w; ++x) out.at(x, y) = 1;
        return out;
    }
    double best_area = -1;
    std::array<std::array<float, 2>, 4> best{};
    size_t n = hull.size();
    for (size_t i = 0; i < n; ++i) {
        const auto& p = hull[i];
        const auto& q = hull[(i + 1) % n];
        double ex = q[0] - p[0], ey = q[1] - p[1];
        double len = std::hypot(ex, ey);
        if (len < 1e-9) continue;
        ex /= len;
        ey /= len;
        // project hull onto edge frame
        double min_u = 1e30, max_u = -1e30, min_v = 1e30, max_v = -1e30;
        for (const auto& r : hull) {
            double u = (r[0] - p[0]) * ex + (r[1] - p[1]) * ey;
            double v = -(r[0] - p[0]) * ey + (r[1] - p[1]) * ex;
            min_u = std::min(min_u, u);
            max_u = std::max(max_u, u);
            min_v = std::min(min_v, v);
            max_v = std::max(max_v, v);
        }
        double area = (max_u - min_u) * (max_v - min_v);
        if (best_area < 0 || area < best_area) {
            best_area = area;
            auto corner = [&](double u, double v) -> std::array<float, 2> {
                return {static_cast<float>(p[0] + u * ex - v * ey),
                        static_cast<float>(p[1] + u * ey + v * ex)};
            };
            best = {corner(min_u, min_v), corner(max_u, min_v), corner(max_u, max_v),
                    corner(min_u, max_v)};
        }
    }
    std::vector<std::array<float, 2>> poly(best.begin(), best.end());
    // orientation of the rect polygon may be either way; normalize by testing center
    double cx = 0, cy = 0;
    for (auto& p : poly) {
        cx += p[0];
        cy += p[1];
    }
    cx /= 4;
    cy /= 4;
    if (!point_in_convex(poly, static_cast<float>(cx), static_cast<float>(cy)))
        std::reverse(poly.begin(), poly.end());
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (point_in_convex(poly, static_cast<float>(x), static_cast<float>(y), 0.51f))
                out.at(x, y) = 1;
    for (size_t i = 0; i < m.px.size(); ++i)
        if (m.px[i]) out.px[i] = 1;
    return out;
}

Mask dilate(const Mask& m, int radius) {
    if (radius <= 0) return m;
    Mask out(m.w, m.h);
    int r2 = radius * radius;
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            if (!m.at(x, y)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dx * dx + dy * dy > r2) continue;
                    int nx = x + dx, ny = y + dy;
                    if (nx >= 0 && ny >= 0 && nx < m.w && ny < m.h) out.at(nx, ny) = 1;
                }
            }
        }
    }
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (a.w != b.w || a.h != b.h) throw ParamError("mask_iou: size mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        bool pa = a.px[i] != 0, pb = b.px[i] != 0;
        inter += (pa && pb) ? 1 : 0;
        uni += (pa || pb) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_iou_soft(const Image& pred, const Mask& gt, float threshold) {
    return mask_iou(image_to_mask(pred, threshold), gt);
}

Affine Affine::rotation_scale_about(float cx_src, float cy_src, float deg, float scale,
                                    float cx_dst, float cy_dst) {
    float rad = deg * 3.14159265358979323846f / 180.f;
    float ca = std::cos(rad) * scale, sa = std::sin(rad) * scale;
    Affine t;
    t.a = ca;
    t.b = -sa;
    t.c = sa;
    t.d = ca;
    t.tx = cx_dst - (ca * cx_src - sa * cy_src);
    t.ty = cy_dst - (sa * cx_src + ca * cy_src);
    return t;
}

Affine Affine::inverse() const {
    float det = a * d - b * c;
    if (std::fabs(det) < 1e-12f) throw ParamError("affine not invertible");
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

void Affine::apply(float x, float y, float& ox, float& oy) const {
    ox = a * x + b * y + tx;
    oy = c * x + d * y + ty;
}

void warp_composite(Image& dst, const Image& sprite, const Mask& sprite_mask, const Affine& fwd,
                    Image& out_alpha) {
    Affine inv = fwd.inverse();
    out_alpha = Image(dst.w, dst.h, 1, 0.f);
    Image soft = mask_to_image(sprite_mask);
    for (int y = 0; y < dst.h; ++y) {
        for (int x = 0; x < dst.w; ++x) {
            float sx, sy;
            inv.apply(static_cast<float>(x), static_cast<float>(y), sx, sy);
            if (sx < -1 || sy < -1 || sx > sprite.w || sy > sprite.h) continue;
            float a = soft.sample_bilinear(sx, sy, 0);
            if (a <= 0.f) continue;
            out_alpha.at(x, y, 0) = a;
            for (int ch = 0; ch < dst.c; ++ch) {
                float v = sprite.sample_bilinear(sx, sy, ch);
                dst.at(x, y, ch) = dst.at(x, y, ch) * (1 - a) + v * a;
            }
        }
    }
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
    h = h - std::floor(h);
    float i = std::floor(h * 6.f);
    float f = h * 6.f - i;
    float p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

}  // namespace ornatry
