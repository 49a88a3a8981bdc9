#pragma once

#include <span>
#include <string>
#include <vector>

#include "bayescal/common.hpp"
#include "bayescal/rng.hpp"

namespace bayescal {

/// Fully connected ReLU network with a softmax output. Zero hidden layers is
/// multinomial logistic regression.
struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::size_t hidden_layers = 0;
    std::size_t hidden_units = 0;
    std::size_t output_dim = 0;

    std::size_t layer_count() const { return hidden_layers + 1; }
    std::size_t parameter_count() const;
    void validate() const;

    /// "AxB" = A hidden layers of B units; "0" or "0x0" = no hidden layer.
    static MlpArchitecture parse(const std::string& hidden, std::size_t input_dim, std::size_t output_dim);
    std::string hidden_spec() const;

    bool operator==(const MlpArchitecture&) const = default;
};

/// Where one dense layer lives in a flat parameter vector. The weight block is
/// row-major in x out so that a layer computes H * W + b.
struct LayerSlice {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

std::vector<LayerSlice> layer_layout(const MlpArchitecture& arch);

/// A concrete set of network weights, flattened layer by layer (W0, b0, W1, ...).
struct PointWeights {
    MlpArchitecture arch;
    std::vector<double> params;

    void validate() const;
    bool operator==(const PointWeights&) const = default;
};

/// One realization drawn from a variational posterior or an HMC chain.
using WeightSample = PointWeights;

/// Gaussian weights with variance 2/fan_in, zero biases.
PointWeights init_weights(const MlpArchitecture& arch, Rng& rng);

/// Output logits for every row of `inputs`.
Matrix mlp_logits(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs);

/// Softmax of mlp_logits.
Matrix mlp_probs(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs);

/// Returns sum_i log p(label_i | row_i, params). Adds its gradient w.r.t.
/// params into `grad` (same size as params). When `input_grad` is non-null it
/// is resized to inputs' shape and receives the gradient w.r.t. the inputs.
double mlp_loglik_grad(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs,
                       std::span<const int> labels, std::span<double> grad, Matrix* input_grad = nullptr);

double mlp_loglik(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs,
                  std::span<const int> labels);

}  // namespace bayescal
