// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/image.hpp>

#include <algorithm>
#include <cmath>

namespace carimirror {

Image::Image(int width, int height, int channels, double fill)
    : m_width(width)
    , m_height(height)
    , m_channels(channels)
    , m_data(static_cast<size_t>(width) * static_cast<size_t>(height) * static_cast<size_t>(channels), fill)
{
    if (width <= 0 || height <= 0 || channels <= 0) throw InvalidInput("image dimensions must be positive");
}

double Image::sample(double x, double y, int c) const
{
    double dx = 0.0;
    double dy = 0.0;
    return sample(x, y, c, dx, dy);
}

double Image::sample(double x, double y, int c, double& dx, double& dy) const
{
    const double cx = std::clamp(x, 0.0, static_cast<double>(m_width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(m_height - 1));
    int x0 = static_cast<int>(std::floor(cx));
    int y0 = static_cast<int>(std::floor(cy));
    x0 = std::min(x0, m_width - 2 < 0 ? 0 : m_width - 2);
    y0 = std::min(y0, m_height - 2 < 0 ? 0 : m_height - 2);
    const int x1 = std::min(x0 + 1, m_width - 1);
    const int y1 = std::min(y0 + 1, m_height - 1);
    const double fx = cx - x0;
    const double fy = cy - y0;
    const double v00 = at(x0, y0, c);
    const double v10 = at(x1, y0, c);
    const double v01 = at(x0, y1, c);
    const double v11 = at(x1, y1, c);
    const double top = v00 + fx * (v10 - v00);
    const double bottom = v01 + fx * (v11 - v01);
    // Clamped directions carry no gradient.
    dx = (x == cx) ? (1.0 - fy) * (v10 - v00) + fy * (v11 - v01) : 0.0;
    dy = (y == cy) ? bottom - top : 0.0;
    return top + fy * (bottom - top);
}

Image Image::to_gray() const
{
    Image out(m_width, m_height, 1);
    for (int y = 0; y < m_height; ++y) {
        for (int x = 0; x < m_width; ++x) {
            double s = 0.0;
            for (int c = 0; c < m_channels; ++c) s += at(x, y, c);
            out.at(x, y) = s / m_channels;
        }
    }
    return out;
}

} // namespace carimirror
