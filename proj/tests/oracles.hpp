// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace ornatry::testing {

// Independent reference for the mask-guided attention transform, straight
// from the definition: double loops in double precision. Deliberately kept
// free of any ornatry tensor machinery so it can pin the vectorized path.
inline std::vector<double> oracle_transform(const std::vector<double>& attn, int d_i,
                                            const std::vector<double>& mask_full, int d0) {
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d_i))));
    // area-average downsample of the d0 x d0 mask to side x side
    std::vector<double> reduced(d_i, 0.0);
    double ratio = static_cast<double>(d0) / side;
    for (int gy = 0; gy < side; ++gy) {
        for (int gx = 0; gx < side; ++gx) {
            double acc = 0.0, area = 0.0;
            double y0 = gy * ratio, y1 = (gy + 1) * ratio;
            double x0 = gx * ratio, x1 = (gx + 1) * ratio;
            for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)); ++y) {
                double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)); ++x) {
                    double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    acc += wx * wy * mask_full[y * d0 + x];
                    area += wx * wy;
                }
            }
            reduced[gy * side + gx] = acc / area;
        }
    }
    // mask the columns, sum per row
    std::vector<double> per_query(d_i, 0.0);
    for (int r = 0; r < d_i; ++r)
        for (int c = 0; c < d_i; ++c) per_query[r] += attn[r * d_i + c] * reduced[c];
    // bilinear upsample (align_corners) of the side x side grid to d0 x d0
    std::vector<double> out(static_cast<size_t>(d0) * d0, 0.0);
    double sy = d0 > 1 ? static_cast<double>(side - 1) / (d0 - 1) : 0.0;
    for (int oy = 0; oy < d0; ++oy) {
        double fy = oy * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, side - 1);
        double wy = fy - y0;
        for (int ox = 0; ox < d0; ++ox) {
            double fx = ox * sy;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, side - 1);
            double wx = fx - x0;
            out[static_cast<size_t>(oy) * d0 + ox] =
                (per_query[y0 * side + x0] * (1 - wx) + per_query[y0 * side + x1] * wx) * (1 - wy) +
                (per_query[y1 * side + x0] * (1 - wx) + per_query[y1 * side + x1] * wx) * wy;
        }
    }
    return out;
}

}  // namespace ornatry::testing
