// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <vector>

namespace carimirror {

/// Row-major multi-channel image of doubles. Pixel (x, y) sits at continuous coordinate (x, y).
class Image
{
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0);

    int width() const { return m_width; }
    int height() const { return m_height; }
    int channels() const { return m_channels; }
    bool empty() const { return m_data.empty(); }

    double& at(int x, int y, int c = 0) { return m_data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return m_data[index(x, y, c)]; }
    const std::vector<double>& data() const { return m_data; }
    std::vector<double>& data() { return m_data; }

    bool contains(double x, double y) const { return x >= 0.0 && y >= 0.0 && x <= m_width - 1 && y <= m_height - 1; }

    /// Bilinear sample of channel c; coordinates are clamped to the image.
    double sample(double x, double y, int c = 0) const;
    /// Bilinear sample with its spatial gradient (d/dx, d/dy).
    double sample(double x, double y, int c, double& dx, double& dy) const;
    /// Mean over channels, one channel output.
    Image to_gray() const;

private:
    size_t index(int x, int y, int c) const
    {
        return (static_cast<size_t>(y) * static_cast<size_t>(m_width) + static_cast<size_t>(x)) * static_cast<size_t>(m_channels) + static_cast<size_t>(c);
    }

    int m_width = 0;
    int m_height = 0;
    int m_channels = 0;
    std::vector<double> m_data;
};

} // namespace carimirror
