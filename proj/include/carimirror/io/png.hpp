// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/image.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace carimirror::io {

enum class Transfer { Linear, Srgb };

/// Reads an 8/16-bit gray/RGB/RGBA PNG into [0,1] channels. With Transfer::Srgb the colour
/// channels are decoded to linear light; alpha is never transformed.
Image read_png(const std::filesystem::path& path, Transfer transfer = Transfer::Srgb);

/// Writes 1, 3 or 4 channels, clamped to [0,1]. bitDepth is 8 or 16.
void write_png(const std::filesystem::path& path, const Image& image, Transfer transfer = Transfer::Srgb, int bitDepth = 8);

/// Indexed (palette) PNG. Palette entries beyond the data are ignored by readers.
void write_indexed_png(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette);
std::vector<std::uint8_t> read_indexed_png(const std::filesystem::path& path, int& width, int& height);

double srgb_to_linear(double c);
double linear_to_srgb(double c);

} // namespace carimirror::io
