// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "trainscan/detectors.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace trainscan::detect {

/// Standardized logistic model: p = sigmoid(w . (x - mean) / scale + b).
struct ClassifierModel {
    std::array<double, kFeatureCount> weights{};
    double bias = 0.0;
    std::array<double, kFeatureCount> mean{};
    std::array<double, kFeatureCount> scale{1, 1, 1, 1, 1, 1, 1, 1};

    struct Training {
        std::uint64_t seed = 0;
        int iterations = 0;
        double step = 0.0;
        std::size_t n_signal = 0;
        std::size_t n_noise = 0;

        friend bool operator==(const Training&, const Training&) = default;
    } training;

    std::string to_json() const;
    static ClassifierModel from_json(const std::string& text);
    /// FNV-1a of the canonical JSON; goes into the run config hash.
    std::string digest() const;

    friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

struct TrainingOptions {
    int iterations = 500;
    double step = 0.1;
};

/// Full-batch gradient descent on the mean logistic loss from zero weights.
/// `is_signal[i]` labels `features[i]`. Needs at least two exemplars per class
/// and finite features.
ClassifierModel train_classifier(std::span<const FeatureVector> features, std::span<const bool> is_signal,
                                 std::uint64_t seed, TrainingOptions options = {});

std::array<double, kFeatureCount> standardize(const ClassifierModel& model, const FeatureVector& fv);

double predict(const ClassifierModel& model, const FeatureVector& fv);

struct Classification {
    double p_signal = 0.0;
    bool accepted = false;
};

Classification classify(const ClassifierModel& model, const FeatureVector& fv, double accept_p = 0.5);
/// Raw-vector overload; throws on a length other than kFeatureCount.
Classification classify(const ClassifierModel& model, std::span<const double> features, double accept_p = 0.5);

/// Mean logistic loss in the standardized parameter space.
double training_loss(const ClassifierModel& model, std::span<const FeatureVector> features,
                     std::span<const bool> is_signal);

/// Gradient of training_loss with respect to (weights..., bias).
std::array<double, kFeatureCount + 1> training_gradient(const ClassifierModel& model,
                                                        std::span<const FeatureVector> features,
                                                        std::span<const bool> is_signal);

} // namespace trainscan::detect
