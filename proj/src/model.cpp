#include "vmclass/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "vmclass/error.hpp"
#include "vmclass/random.hpp"

namespace vmclass::model {

std::string_view variant_name(Variant variant) {
    return variant == Variant::DeepConv ? "deepconv" : "deepfft";
}

Variant parse_variant(std::string_view text) {
    std::string key(text);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (key == "deepconv") return Variant::DeepConv;
    if (key == "deepfft") return Variant::DeepFFT;
    throw ConfigError("unknown model variant '" + std::string(text) + "' (expected deepconv or deepfft)");
}

std::size_t block_count(std::size_t window) {
    if (window < 4) throw ShapeError("window must be at least 4, got " + std::to_string(window));
    if (!std::has_single_bit(window)) {
        throw ShapeError("window must be a power of two, got " + std::to_string(window));
    }
    const auto log2w = static_cast<std::size_t>(std::bit_width(window) - 1);
    return std::max<std::size_t>(log2w - 1, 2);
}

std::vector<std::size_t> default_channel_plan(std::size_t blocks) {
    std::vector<std::size_t> plan;
    std::size_t channels = 32;
    for (std::size_t i = 0; i < blocks; ++i) {
        plan.push_back(channels);
        channels = std::min<std::size_t>(channels * 2, 128);
    }
    return plan;
}

ModelSpec make_spec(std::size_t window, Variant variant, std::size_t metrics, std::size_t classes) {
    ModelSpec spec;
    spec.window = window;
    spec.metrics = metrics;
    spec.classes = classes;
    spec.variant = variant;
    spec.channel_plan = default_channel_plan(block_count(window));
    validate(spec);
    return spec;
}

std::vector<std::size_t> sequence_lengths(const ModelSpec& spec) {
    std::vector<std::size_t> lengths{spec.window};
    for (std::size_t b = 0; b < spec.blocks(); ++b) {
        lengths.push_back(nn::conv_output_length(lengths.back(), spec.kernel, spec.stride, spec.padding));
    }
    return lengths;
}

void validate(const ModelSpec& spec) {
    const std::size_t expected_blocks = block_count(spec.window);
    if (spec.metrics == 0) throw ShapeError("model spec: metrics must be positive");
    if (spec.classes < 2) throw ShapeError("model spec: at least 2 classes required");
    if (spec.kernel == 0 || spec.stride == 0) throw ShapeError("model spec: kernel and stride must be positive");
    if (spec.channel_plan.size() != expected_blocks) {
        throw ShapeError("model spec: channel plan has " + std::to_string(spec.channel_plan.size()) +
                         " entries, window " + std::to_string(spec.window) + " needs " +
                         std::to_string(expected_blocks) + " blocks");
    }
    if (std::any_of(spec.channel_plan.begin(), spec.channel_plan.end(),
                    [](std::size_t c) { return c == 0; })) {
        throw ShapeError("model spec: channel counts must be positive");
    }
    const auto lengths = sequence_lengths(spec);
    for (std::size_t b = 1; b < lengths.size(); ++b) {
        if (lengths[b] == 0) {
            throw ShapeError("model spec: sequence length collapses before block " + std::to_string(b));
        }
    }
}

Tensor to_channels_first(const Tensor& batch) {
    require_rank(batch, 3, "network input");
    const std::size_t n = batch.dim(0), w = batch.dim(1), m = batch.dim(2);
    Tensor out({n, m, w});
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = batch.data().data() + i * w * m;
        double* dst = out.data().data() + i * m * w;
        for (std::size_t t = 0; t < w; ++t) {
            for (std::size_t c = 0; c < m; ++c) dst[c * w + t] = src[t * m + c];
        }
    }
    return out;
}

Tensor to_time_major(const Tensor& batch) {
    require_rank(batch, 3, "channels-first batch");
    const std::size_t n = batch.dim(0), m = batch.dim(1), w = batch.dim(2);
    Tensor out({n, w, m});
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = batch.data().data() + i * m * w;
        double* dst = out.data().data() + i * w * m;
        for (std::size_t c = 0; c < m; ++c) {
            for (std::size_t t = 0; t < w; ++t) dst[t * m + c] = src[c * w + t];
        }
    }
    return out;
}

namespace {

void fill_uniform(Tensor& t, double bound, Rng& rng) {
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace

Network Network::build(const ModelSpec& spec, std::uint64_t seed) {
    validate(spec);
    Network net;
    net.spec_ = spec;
    Rng rng(seed);

    std::size_t in_channels = spec.metrics;
    for (std::size_t out_channels : spec.channel_plan) {
        Block block{nn::ConvParams(in_channels, out_channels, spec.kernel, spec.stride, spec.padding),
                    nn::BatchNormParams(out_channels)};
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * spec.kernel));
        fill_uniform(block.conv.weight, bound, rng);
        fill_uniform(block.conv.bias, bound, rng);
        net.blocks_.push_back(std::move(block));
        in_channels = out_channels;
    }

    const std::size_t features = spec.channel_plan.back() * sequence_lengths(spec).back();
    net.head_ = nn::LinearParams(features, spec.classes);
    const double bound = 1.0 / std::sqrt(static_cast<double>(features));
    fill_uniform(net.head_.weight, bound, rng);
    fill_uniform(net.head_.bias, bound, rng);

    if (spec.variant == Variant::DeepFFT) net.frontend_.emplace(spec.window);
    for (Tensor* p : net.parameters()) p->enable_grad();
    return net;
}

Tensor Network::preprocess(const Tensor& batch) const {
    require_rank(batch, 3, "network input");
    if (batch.dim(1) != spec_.window || batch.dim(2) != spec_.metrics) {
        throw ShapeError("network input: expected (N, " + std::to_string(spec_.window) + ", " +
                         std::to_string(spec_.metrics) + "), got " + shape_to_string(batch.shape()));
    }
    Tensor x = to_channels_first(batch);
    if (frontend_) x = frontend_->apply(x);
    return x;
}

Tensor Network::forward(const Tensor& batch, bool training) {
    if (!training) return infer(batch);
    Tensor x = preprocess(batch);
    Cache cache;
    cache.blocks.reserve(blocks_.size());
    for (auto& block : blocks_) {
        BlockCache bc;
        Tensor conv_out = nn::conv1d_forward(x, block.conv);
        bc.input = std::move(x);
        bc.pre_activation = nn::batchnorm_forward_train(conv_out, block.norm, &bc.norm);
        x = nn::relu_forward(bc.pre_activation);
        cache.blocks.push_back(std::move(bc));
    }
    const std::size_t n = x.dim(0);
    cache.flat = x.reshaped({n, x.size() / n});
    cache.logits = nn::linear_forward(cache.flat, head_);
    Tensor logits = cache.logits;
    cache_ = std::move(cache);
    return logits;
}

Tensor Network::infer(const Tensor& batch) const {
    Tensor x = preprocess(batch);
    for (const auto& block : blocks_) {
        x = nn::relu_forward(nn::batchnorm_forward_eval(nn::conv1d_forward(x, block.conv), block.norm));
    }
    const std::size_t n = x.dim(0);
    return nn::linear_forward(x.reshaped({n, x.size() / n}), head_);
}

double Network::backward(std::span<const int> labels) {
    if (!cache_) throw Error("backward: no training-mode forward pass to differentiate");
    if (grads_pending_) {
        throw Error("backward: gradients from the previous call were not cleared; call zero_grad()");
    }
    auto loss = nn::cross_entropy_loss(cache_->logits, labels);
    if (!std::isfinite(loss.loss)) throw DivergenceError("backward: non-finite loss");

    auto head_grads = nn::linear_backward(cache_->flat, head_, loss.grad_logits);
    auto accumulate = [](Tensor& param, const Tensor& grad) {
        auto g = param.grad();
        auto src = grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
    };
    accumulate(head_.weight, head_grads.weight);
    accumulate(head_.bias, head_grads.bias);

    const Tensor& last_input = cache_->blocks.back().pre_activation;
    Tensor grad = head_grads.input.reshaped(last_input.shape());
    for (std::size_t b = blocks_.size(); b-- > 0;) {
        auto& block = blocks_[b];
        auto& bc = cache_->blocks[b];
        grad = nn::relu_backward(bc.pre_activation, grad);
        auto norm_grads = nn::batchnorm_backward(grad, block.norm, bc.norm);
        accumulate(block.norm.gamma, norm_grads.gamma);
        accumulate(block.norm.beta, norm_grads.beta);
        auto conv_grads = nn::conv1d_backward(bc.input, block.conv, norm_grads.input);
        accumulate(block.conv.weight, conv_grads.weight);
        accumulate(block.conv.bias, conv_grads.bias);
        grad = std::move(conv_grads.input);
    }
    grads_pending_ = true;
    return loss.loss;
}

void Network::zero_grad() {
    for (Tensor* p : parameters()) {
        p->enable_grad();
        p->zero_grad();
    }
    grads_pending_ = false;
}

void Network::clear_cache() noexcept { cache_.reset(); }

std::vector<Tensor*> Network::parameters() {
    std::vector<Tensor*> params;
    for (auto& block : blocks_) {
        params.push_back(&block.conv.weight);
        params.push_back(&block.conv.bias);
        params.push_back(&block.norm.gamma);
        params.push_back(&block.norm.beta);
    }
    params.push_back(&head_.weight);
    params.push_back(&head_.bias);
    return params;
}

std::vector<NamedTensor> Network::named_tensors() {
    std::vector<NamedTensor> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string prefix = "blocks." + std::to_string(b) + ".";
        auto& block = blocks_[b];
        out.push_back({prefix + "conv.weight", &block.conv.weight});
        out.push_back({prefix + "conv.bias", &block.conv.bias});
        out.push_back({prefix + "norm.gamma", &block.norm.gamma});
        out.push_back({prefix + "norm.beta", &block.norm.beta});
        out.push_back({prefix + "norm.running_mean", &block.norm.running_mean});
        out.push_back({prefix + "norm.running_var", &block.norm.running_var});
    }
    out.push_back({"head.weight", &head_.weight});
    out.push_back({"head.bias", &head_.bias});
    return out;
}

std::vector<ConstNamedTensor> Network::named_tensors() const {
    std::vector<ConstNamedTensor> out;
    for (auto& [name, tensor] : const_cast<Network*>(this)->named_tensors()) {
        out.push_back({std::move(name), tensor});
    }
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t count = 0;
    for (const auto& block : blocks_) {
        count += block.conv.weight.size() + block.conv.bias.size() + block.norm.gamma.size() +
                 block.norm.beta.size();
    }
    return count + head_.weight.size() + head_.bias.size();
}

}  // namespace vmclass::model
