// SPDX-License-Identifier: Apache-2.0
#include "trainscan/classifier.hpp"

#include "trainscan/error.hpp"
#include "trainscan/hash.hpp"

#include <json.hpp>

#include <cmath>

namespace trainscan::detect {

using nlohmann::json;

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z)
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double linear(const ClassifierModel& m, const std::array<double, kFeatureCount>& x) {
    double z = m.bias;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        z += m.weights[i] * x[i];
    }
    return z;
}

void check_inputs(std::span<const FeatureVector> features, std::span<const bool> is_signal) {
    if (features.size() != is_signal.size()) {
        throw Error(ErrorCode::invalid_argument, "training: feature and label counts differ");
    }
}

} // namespace

std::array<double, kFeatureCount> standardize(const ClassifierModel& model, const FeatureVector& fv) {
    std::array<double, kFeatureCount> x{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        x[i] = (fv.values[i] - model.mean[i]) / model.scale[i];
    }
    return x;
}

double predict(const ClassifierModel& model, const FeatureVector& fv) {
    return sigmoid(linear(model, standardize(model, fv)));
}

Classification classify(const ClassifierModel& model, const FeatureVector& fv, double accept_p) {
    const double p = predict(model, fv);
    return {p, p >= accept_p};
}

Classification classify(const ClassifierModel& model, std::span<const double> features, double accept_p) {
    if (features.size() != kFeatureCount) {
        throw Error(ErrorCode::invalid_argument, "classify: expected " + std::to_string(kFeatureCount) +
                                                     " features, got " + std::to_string(features.size()));
    }
    FeatureVector fv;
    std::copy(features.begin(), features.end(), fv.values.begin());
    return classify(model, fv, accept_p);
}

double training_loss(const ClassifierModel& model, std::span<const FeatureVector> features,
                     std::span<const bool> is_signal) {
    check_inputs(features, is_signal);
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double z = linear(model, standardize(model, features[i]));
        loss += softplus(z) - (is_signal[i] ? z : 0.0);
    }
    return loss / static_cast<double>(features.size());
}

std::array<double, kFeatureCount + 1> training_gradient(const ClassifierModel& model,
                                                        std::span<const FeatureVector> features,
                                                        std::span<const bool> is_signal) {
    check_inputs(features, is_signal);
    std::array<double, kFeatureCount + 1> g{};
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto x = standardize(model, features[i]);
        const double r = sigmoid(linear(model, x)) - (is_signal[i] ? 1.0 : 0.0);
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            g[k] += r * x[k];
        }
        g[kFeatureCount] += r;
    }
    for (auto& v : g) {
        v /= static_cast<double>(features.size());
    }
    return g;
}

ClassifierModel train_classifier(std::span<const FeatureVector> features, std::span<const bool> is_signal,
                                 std::uint64_t seed, TrainingOptions options) {
    check_inputs(features, is_signal);
    std::size_t n_signal = 0;
    for (bool s : is_signal) {
        n_signal += s ? 1 : 0;
    }
    const std::size_t n_noise = is_signal.size() - n_signal;
    if (n_signal < 2 || n_noise < 2) {
        throw Error(ErrorCode::invalid_argument, "training needs at least two exemplars of each class (signal " +
                                                     std::to_string(n_signal) + ", noise " +
                                                     std::to_string(n_noise) + ")");
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        for (double v : features[i].values) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::invalid_argument, "training: exemplar " + std::to_string(i) +
                                                             " has a non-finite feature");
            }
        }
    }
    ClassifierModel model;
    const double n = static_cast<double>(features.size());
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        double mean = 0.0;
        for (const auto& fv : features) {
            mean += fv.values[k];
        }
        mean /= n;
        double ss = 0.0;
        for (const auto& fv : features) {
            ss += (fv.values[k] - mean) * (fv.values[k] - mean);
        }
        const double sd = std::sqrt(ss / n);
        model.mean[k] = mean;
        model.scale[k] = sd > 0.0 ? sd : 1.0;
    }
    for (int it = 0; it < options.iterations; ++it) {
        const auto g = training_gradient(model, features, is_signal);
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            model.weights[k] -= options.step * g[k];
        }
        model.bias -= options.step * g[kFeatureCount];
    }
    model.training = {seed, options.iterations, options.step, n_signal, n_noise};
    return model;
}

std::string ClassifierModel::to_json() const {
    json j;
    j["format"] = "trainscan.classifier";
    j["version"] = 1;
    j["feature_order"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
    j["weights"] = weights;
    j["bias"] = bias;
    j["standardization"] = {{"mean", mean}, {"scale", scale}};
    j["training"] = {{"seed", training.seed},
                     {"iterations", training.iterations},
                     {"step", training.step},
                     {"n_signal", training.n_signal},
                     {"n_noise", training.n_noise}};
    return j.dump(2) + "\n";
}

ClassifierModel ClassifierModel::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != "trainscan.classifier" || j.at("version").get<int>() != 1) {
            throw Error(ErrorCode::format, "classifier: unsupported format or version");
        }
        const auto order = j.at("feature_order").get<std::vector<std::string>>();
        if (order != std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end())) {
            throw Error(ErrorCode::format, "classifier: feature order does not match this build");
        }
        ClassifierModel m;
        m.weights = j.at("weights").get<std::array<double, kFeatureCount>>();
        m.bias = j.at("bias").get<double>();
        m.mean = j.at("standardization").at("mean").get<std::array<double, kFeatureCount>>();
        m.scale = j.at("standardization").at("scale").get<std::array<double, kFeatureCount>>();
        for (double s : m.scale) {
            if (!(s > 0.0)) {
                throw Error(ErrorCode::format, "classifier: standardization scales must be positive");
            }
        }
        const auto& t = j.at("training");
        m.training = {t.at("seed").get<std::uint64_t>(), t.at("iterations").get<int>(), t.at("step").get<double>(),
                      t.at("n_signal").get<std::size_t>(), t.at("n_noise").get<std::size_t>()};
        return m;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("classifier: ") + ex.what());
    }
}

std::string ClassifierModel::digest() const { return fnv1a_hex(to_json()); }

} // namespace trainscan::detect
