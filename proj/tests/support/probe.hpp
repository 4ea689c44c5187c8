#pragma once

// Color-shortcut probe: a multinomial logistic regression on per-image
// channel means. Its training accuracy measures how much label information
// the global tint carries, independently of the CNN stack: near-perfect when
// the tint always matches the class, near-chance when the tint is drawn
// uniformly. Deterministic (zero init, fixed iteration count, no RNG).

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "padain/data.hpp"

namespace testsupport {

inline std::vector<std::array<double, 3>> channel_mean_features(
    const padain::data::Dataset& d) {
    const std::size_t plane =
        static_cast<std::size_t>(d.image_size) * d.image_size;
    std::vector<std::array<double, 3>> feats(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const float* img = d.images.data() + i * d.image_floats();
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
                s += img[static_cast<std::size_t>(c) * plane + p];
            }
            feats[i][static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
        }
    }
    return feats;
}

// Returns training accuracy of the fitted probe on the given split. Features
// are channel-mean DIRECTIONS (unit L2 norm): glyph ink area and brightness
// scale all channels alike, so normalizing leaves only the tint. Without it
// the probe also reads per-class ink coverage and over-reports color signal.
inline double color_probe_accuracy(const padain::data::Dataset& d, int iters = 800,
                                   double lr = 2.0) {
    auto feats = channel_mean_features(d);
    for (auto& f : feats) {
        const double norm = std::max(
            std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]), 1e-12);
        for (int c = 0; c < 3; ++c) f[static_cast<std::size_t>(c)] /= norm;
    }
    const std::size_t N = feats.size();
    const int K = d.num_classes;

    // Standardize features so a fixed learning rate is well conditioned.
    std::array<double, 3> mu{}, sd{};
    for (const auto& f : feats) {
        for (int c = 0; c < 3; ++c) mu[static_cast<std::size_t>(c)] += f[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < 3; ++c) mu[static_cast<std::size_t>(c)] /= static_cast<double>(N);
    for (const auto& f : feats) {
        for (int c = 0; c < 3; ++c) {
            const double dv = f[static_cast<std::size_t>(c)] - mu[static_cast<std::size_t>(c)];
            sd[static_cast<std::size_t>(c)] += dv * dv;
        }
    }
    for (int c = 0; c < 3; ++c) {
        sd[static_cast<std::size_t>(c)] =
            std::max(std::sqrt(sd[static_cast<std::size_t>(c)] / static_cast<double>(N)), 1e-9);
    }
    std::vector<std::array<double, 4>> x(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (int c = 0; c < 3; ++c) {
            x[i][static_cast<std::size_t>(c)] =
                (feats[i][static_cast<std::size_t>(c)] - mu[static_cast<std::size_t>(c)]) /
                sd[static_cast<std::size_t>(c)];
        }
        x[i][3] = 1.0;
    }

    std::vector<std::array<double, 4>> w(static_cast<std::size_t>(K), {0, 0, 0, 0});
    std::vector<double> logits(static_cast<std::size_t>(K));
    std::vector<std::array<double, 4>> grad(static_cast<std::size_t>(K));
    for (int it = 0; it < iters; ++it) {
        for (auto& g : grad) g = {0, 0, 0, 0};
        for (std::size_t i = 0; i < N; ++i) {
            double m = -1e300;
            for (int k = 0; k < K; ++k) {
                double z = 0.0;
                for (int j = 0; j < 4; ++j) {
                    z += w[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] *
                         x[i][static_cast<std::size_t>(j)];
                }
                logits[static_cast<std::size_t>(k)] = z;
                m = std::max(m, z);
            }
            double denom = 0.0;
            for (int k = 0; k < K; ++k) {
                denom += std::exp(logits[static_cast<std::size_t>(k)] - m);
            }
            for (int k = 0; k < K; ++k) {
                const double p = std::exp(logits[static_cast<std::size_t>(k)] - m) / denom;
                const double err = p - (d.labels[i] == k ? 1.0 : 0.0);
                for (int j = 0; j < 4; ++j) {
                    grad[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] +=
                        err * x[i][static_cast<std::size_t>(j)];
                }
            }
        }
        for (int k = 0; k < K; ++k) {
            for (int j = 0; j < 4; ++j) {
                w[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] -=
                    lr * grad[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] /
                    static_cast<double>(N);
            }
        }
    }

    std::size_t hits = 0;
    for (std::size_t i = 0; i < N; ++i) {
        int best = 0;
        double bz = -1e300;
        for (int k = 0; k < K; ++k) {
            double z = 0.0;
            for (int j = 0; j < 4; ++j) {
                z += w[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] *
                     x[i][static_cast<std::size_t>(j)];
            }
            if (z > bz) {
                bz = z;
                best = k;
            }
        }
        if (best == d.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(N);
}

}  // namespace testsupport
