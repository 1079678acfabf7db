#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vmclass/tensor.hpp"

namespace vmclass::nn {

struct ConvParams {
    ConvParams() = default;
    // Zero-initialized weight (out, in, kernel) and bias (out).
    ConvParams(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding);

    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }
    std::size_t kernel() const { return weight.dim(2); }
    std::size_t output_length(std::size_t input_length) const;

    Tensor weight;
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct ConvGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

// Length of a strided, padded convolution output; 0 when the padded input is
// shorter than the kernel.
std::size_t conv_output_length(std::size_t input_length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

// input (N, C_in, L_in) -> (N, C_out, L_out)
Tensor conv1d_forward(const Tensor& input, const ConvParams& params);
ConvGrads conv1d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out);

struct BatchNormParams {
    BatchNormParams() = default;
    // gamma = 1, beta = 0, running mean 0, running var 1.
    explicit BatchNormParams(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);

    std::size_t channels() const { return gamma.size(); }

    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
};

// Per-channel quantities kept from a training-mode forward pass.
struct BatchNormCache {
    Tensor normalized;               // x_hat, same shape as the input
    std::vector<double> inv_std;     // 1 / sqrt(var + eps) per channel
};

struct BatchNormGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

// Training mode normalizes with the batch statistics over the N and L axes
// (biased variance) and folds them into the running estimates. Throws
// ShapeError when N * L == 1.
Tensor batchnorm_forward_train(const Tensor& input, BatchNormParams& params,
                               BatchNormCache* cache = nullptr);
// Eval mode: fixed per-channel affine map built from the running estimates.
Tensor batchnorm_forward_eval(const Tensor& input, const BatchNormParams& params);
Tensor batchnorm_forward(const Tensor& input, BatchNormParams& params, bool training);
BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormParams& params,
                                  const BatchNormCache& cache);

Tensor relu_forward(const Tensor& input);
// Subgradient 0 at exactly 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct LinearParams {
    LinearParams() = default;
    LinearParams(std::size_t in_features, std::size_t out_features);

    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }

    Tensor weight;  // (out, in)
    Tensor bias;    // (out)
};

struct LinearGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

// input (N, F) -> input * weight^T + bias
Tensor linear_forward(const Tensor& input, const LinearParams& params);
LinearGrads linear_backward(const Tensor& input, const LinearParams& params, const Tensor& grad_out);

// Row-wise softmax with max subtraction. NaN logits propagate to NaN rows.
Tensor softmax(const Tensor& logits);

struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
};

// Mean over the batch of -log softmax(logits)[label]; grad = (softmax - onehot) / N.
LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

}  // namespace vmclass::nn
