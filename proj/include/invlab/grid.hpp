// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace invlab {

struct GridShape {
    int h = 0;
    int w = 0;
    int c = 0;

    int size() const { return h * w * c; }
    bool operator==(const GridShape&) const = default;

    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

/// Real-valued H x W x C grid. Row-major, channels innermost.
struct Latent {
    GridShape shape;
    std::vector<double> data;

    Latent() = default;
    explicit Latent(GridShape s) : shape(s), data(static_cast<std::size_t>(s.size()), 0.0) {
        if (s.h <= 0 || s.w <= 0 || s.c <= 0)
            throw std::invalid_argument("Latent: shape must be positive, got " + s.str());
    }

    int size() const { return shape.size(); }

    double& at(int r, int col, int ch) { return data[index(r, col, ch)]; }
    double at(int r, int col, int ch) const { return data[index(r, col, ch)]; }

    std::size_t index(int r, int col, int ch) const {
        return static_cast<std::size_t>((r * shape.w + col) * shape.c + ch);
    }

    bool operator==(const Latent&) const = default;
};

inline bool all_finite(const Latent& x) {
    for (double v : x.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void require_finite(const Latent& x, const char* what) {
    if (!all_finite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

inline void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (!(a.shape == b.shape))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape.str() +
                                    " vs " + b.shape.str());
}

inline double linf_norm(const Latent& x) {
    double m = 0.0;
    for (double v : x.data) m = std::max(m, std::abs(v));
    return m;
}

inline double l2_norm(const Latent& x) {
    double s = 0.0;
    for (double v : x.data) s += v * v;
    return std::sqrt(s);
}

inline double linf_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "linf_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double l2_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "l2_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double mean_abs_diff(const Latent& a, const Latent& b) {
    require_same_shape(a, b, "mean_abs_diff");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

inline Latent constant_grid(GridShape shape, double value) {
    Latent out(shape);
    for (double& v : out.data) v = value;
    return out;
}

}  // namespace invlab
