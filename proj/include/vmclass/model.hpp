#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vmclass/layers.hpp"
#include "vmclass/spectral.hpp"
#include "vmclass/tensor.hpp"

namespace vmclass::model {

enum class Variant { DeepConv, DeepFFT };

std::string_view variant_name(Variant variant);
Variant parse_variant(std::string_view text);

// max(log2(W) - 1, 2). Throws ShapeError unless W is a power of two >= 4.
std::size_t block_count(std::size_t window);

// 32 channels for the first block, doubling per block, capped at 128.
std::vector<std::size_t> default_channel_plan(std::size_t blocks);

struct ModelSpec {
    std::size_t window = 32;
    std::size_t metrics = 16;
    std::size_t classes = 2;
    std::size_t kernel = 3;
    std::size_t stride = 2;
    std::size_t padding = 1;
    Variant variant = Variant::DeepConv;
    std::vector<std::size_t> channel_plan;

    std::size_t blocks() const { return channel_plan.size(); }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

ModelSpec make_spec(std::size_t window, Variant variant, std::size_t metrics = 16, std::size_t classes = 2);

// W followed by the sequence length after each block.
std::vector<std::size_t> sequence_lengths(const ModelSpec& spec);

// Throws ShapeError when the spec breaks an invariant or is infeasible.
void validate(const ModelSpec& spec);

struct Block {
    nn::ConvParams conv;
    nn::BatchNormParams norm;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor = nullptr;
};

struct ConstNamedTensor {
    std::string name;
    const Tensor* tensor = nullptr;
};

// (N, W, M) -> (N, M, W) and back.
Tensor to_channels_first(const Tensor& batch);
Tensor to_time_major(const Tensor& batch);

// FC o B_1 o ... o B_Nb, each block conv1d -> batchnorm -> ReLU, optionally
// preceded by the FFT magnitude front end. Inputs are (N, W, M).
class Network {
public:
    Network() = default;

    // Fan-in uniform initialization, bound 1/sqrt(fan_in), for conv and FC
    // weights and biases; deterministic in (spec, seed) and independent of
    // the variant.
    static Network build(const ModelSpec& spec, std::uint64_t seed);

    const ModelSpec& spec() const noexcept { return spec_; }
    std::vector<Block>& blocks() noexcept { return blocks_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    nn::LinearParams& head() noexcept { return head_; }
    const nn::LinearParams& head() const noexcept { return head_; }
    const std::optional<spectral::SpectralFrontEnd>& frontend() const noexcept { return frontend_; }

    // Training mode uses batch statistics, updates running statistics and
    // keeps the activations needed by backward(). Eval mode is infer().
    Tensor forward(const Tensor& batch, bool training);
    // Eval-mode forward; does not touch the network.
    Tensor infer(const Tensor& batch) const;

    // Mean cross-entropy of the last training-mode forward against `labels`;
    // accumulates parameter gradients. Throws if gradients from a previous
    // backward have not been cleared with zero_grad().
    double backward(std::span<const int> labels);
    void zero_grad();
    void clear_cache() noexcept;

    // Trainable tensors in a fixed order.
    std::vector<Tensor*> parameters();
    // Every stored tensor (trainable and running statistics) with its name.
    std::vector<NamedTensor> named_tensors();
    std::vector<ConstNamedTensor> named_tensors() const;
    std::size_t parameter_count() const;

private:
    Tensor preprocess(const Tensor& batch) const;

    struct BlockCache {
        Tensor input;
        nn::BatchNormCache norm;
        Tensor pre_activation;
    };
    struct Cache {
        std::vector<BlockCache> blocks;
        Tensor flat;
        Tensor logits;
    };

    ModelSpec spec_;
    std::vector<Block> blocks_;
    nn::LinearParams head_;
    std::optional<spectral::SpectralFrontEnd> frontend_;
    std::optional<Cache> cache_;
    bool grads_pending_ = false;
};

}  // namespace vmclass::model
