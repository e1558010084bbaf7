// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "ornatry/image.hpp"

namespace ornatry {

/// Write 8-bit PNG. c=1 -> grayscale, c=3 -> RGB. Values clamped to [0,1].
void write_png(const std::string& path, const Image& img);
void write_png(const std::string& path, const Mask& mask);

/// Read an 8-bit PNG (gray / gray+alpha / RGB / RGBA / palette, no interlace)
/// into a float image; alpha is dropped. Throws IoError on malformed input.
Image read_png(const std::string& path);

/// Read a mask PNG: single channel thresholded at 128.
Mask read_png_mask(const std::string& path);

}  // namespace ornatry
