#include "vmclass/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "vmclass/error.hpp"

namespace vmclass::nn {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajor = Eigen::Map<const RowMajorMatrix>;

// Output positions t for which t * stride + tap - padding lands inside [0, length).
struct TapRange {
    std::size_t first = 0;
    std::size_t last = 0;  // exclusive
};

TapRange tap_range(std::size_t tap, std::size_t stride, std::size_t padding, std::size_t length,
                   std::size_t out_length) {
    const long offset = static_cast<long>(tap) - static_cast<long>(padding);
    const long s = static_cast<long>(stride);
    long first = 0;
    if (offset < 0) first = (-offset + s - 1) / s;
    const long hi = static_cast<long>(length) - 1 - offset;  // t * s <= hi
    long last = hi < 0 ? 0 : hi / s + 1;
    last = std::min<long>(last, static_cast<long>(out_length));
    if (last < first) last = first;
    return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

void check_conv_input(const Tensor& input, const ConvParams& params) {
    require_rank(input, 3, "conv1d input");
    if (input.dim(1) != params.in_channels()) {
        throw ShapeError("conv1d: input has " + std::to_string(input.dim(1)) +
                         " channels, layer expects " + std::to_string(params.in_channels()));
    }
    if (input.dim(2) + 2 * params.padding < params.kernel()) {
        throw ShapeError("conv1d: input length " + std::to_string(input.dim(2)) +
                         " with padding " + std::to_string(params.padding) +
                         " is shorter than kernel " + std::to_string(params.kernel()));
    }
}

}  // namespace

std::size_t conv_output_length(std::size_t input_length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
    if (stride == 0) throw ShapeError("conv1d: stride must be positive");
    if (input_length + 2 * padding < kernel) return 0;
    return (input_length + 2 * padding - kernel) / stride + 1;
}

ConvParams::ConvParams(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       std::size_t stride_, std::size_t padding_)
    : weight({out_channels, in_channels, kernel}), bias({out_channels}), stride(stride_),
      padding(padding_) {
    if (stride == 0) throw ShapeError("conv1d: stride must be positive");
}

std::size_t ConvParams::output_length(std::size_t input_length) const {
    return conv_output_length(input_length, kernel(), stride, padding);
}

namespace {

// Patch matrix with one row per (sample, output position) and one column per
// (input channel, tap); padded taps are 0.
std::vector<double> im2row(const Tensor& input, const ConvParams& params, std::size_t l_out) {
    const std::size_t n_batch = input.dim(0);
    const std::size_t c_in = params.in_channels();
    const std::size_t k_size = params.kernel();
    const std::size_t l_in = input.dim(2);
    const std::size_t cols = c_in * k_size;
    std::vector<double> rows(n_batch * l_out * cols, 0.0);
    const double* x = input.data().data();
    for (std::size_t q = 0; q < k_size; ++q) {
        const TapRange range = tap_range(q, params.stride, params.padding, l_in, l_out);
        const long offset = static_cast<long>(q) - static_cast<long>(params.padding);
        for (std::size_t i = 0; i < n_batch; ++i) {
            for (std::size_t k = 0; k < c_in; ++k) {
                const double* x_row = x + (i * c_in + k) * l_in;
                for (std::size_t t = range.first; t < range.last; ++t) {
                    rows[(i * l_out + t) * cols + k * k_size + q] =
                        x_row[static_cast<long>(t * params.stride) + offset];
                }
            }
        }
    }
    return rows;
}

}  // namespace

Tensor conv1d_forward(const Tensor& input, const ConvParams& params) {
    check_conv_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t c_out = params.out_channels();
    const std::size_t cols = params.in_channels() * params.kernel();
    const std::size_t l_out = params.output_length(input.dim(2));
    const std::size_t rows = n_batch * l_out;

    const auto patches = im2row(input, params, l_out);
    const ConstRowMajor patch_mat(patches.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const ConstRowMajor weight_mat(params.weight.data().data(), static_cast<Eigen::Index>(c_out),
                                   static_cast<Eigen::Index>(cols));
    const RowMajorMatrix products = patch_mat * weight_mat.transpose();  // (rows, C_out)

    Tensor out({n_batch, c_out, l_out});
    double* y = out.data().data();
    const double* b = params.bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r / l_out;
        const std::size_t t = r % l_out;
        for (std::size_t j = 0; j < c_out; ++j) {
            y[(i * c_out + j) * l_out + t] = products(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) + b[j];
        }
    }
    return out;
}

ConvGrads conv1d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out) {
    check_conv_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t c_in = params.in_channels();
    const std::size_t c_out = params.out_channels();
    const std::size_t k_size = params.kernel();
    const std::size_t l_in = input.dim(2);
    const std::size_t l_out = params.output_length(l_in);
    const std::size_t cols = c_in * k_size;
    const std::size_t rows = n_batch * l_out;
    require_shape(grad_out, {n_batch, c_out, l_out}, "conv1d grad_out");

    ConvGrads grads{Tensor(input.shape()), Tensor(params.weight.shape()),
                    Tensor(params.bias.shape())};

    // grad_out rearranged to (rows, C_out), matching the patch rows
    RowMajorMatrix gy_rows(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c_out));
    const double* gy = grad_out.data().data();
    double* gb = grads.bias.data().data();
    for (std::size_t i = 0; i < n_batch; ++i) {
        for (std::size_t j = 0; j < c_out; ++j) {
            const double* gy_row = gy + (i * c_out + j) * l_out;
            for (std::size_t t = 0; t < l_out; ++t) {
                gy_rows(static_cast<Eigen::Index>(i * l_out + t), static_cast<Eigen::Index>(j)) = gy_row[t];
                gb[j] += gy_row[t];
            }
        }
    }

    const auto patches = im2row(input, params, l_out);
    const ConstRowMajor patch_mat(patches.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const ConstRowMajor weight_mat(params.weight.data().data(), static_cast<Eigen::Index>(c_out),
                                   static_cast<Eigen::Index>(cols));
    RowMajorMap grad_weight(grads.weight.data().data(), static_cast<Eigen::Index>(c_out),
                            static_cast<Eigen::Index>(cols));
    grad_weight.noalias() = gy_rows.transpose() * patch_mat;
    const RowMajorMatrix patch_grads = gy_rows * weight_mat;  // (rows, C_in * K)

    double* gx = grads.input.data().data();
    for (std::size_t q = 0; q < k_size; ++q) {
        const TapRange range = tap_range(q, params.stride, params.padding, l_in, l_out);
        const long offset = static_cast<long>(q) - static_cast<long>(params.padding);
        for (std::size_t i = 0; i < n_batch; ++i) {
            for (std::size_t k = 0; k < c_in; ++k) {
                double* gx_row = gx + (i * c_in + k) * l_in;
                for (std::size_t t = range.first; t < range.last; ++t) {
                    gx_row[static_cast<long>(t * params.stride) + offset] +=
                        patch_grads(static_cast<Eigen::Index>(i * l_out + t), static_cast<Eigen::Index>(k * k_size + q));
                }
            }
        }
    }
    return grads;
}

BatchNormParams::BatchNormParams(std::size_t channels, double momentum_, double epsilon_)
    : gamma({channels}, 1.0), beta({channels}, 0.0), running_mean({channels}, 0.0),
      running_var({channels}, 1.0), momentum(momentum_), epsilon(epsilon_) {
    if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batchnorm momentum must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
}

namespace {

void check_bn_input(const Tensor& input, const BatchNormParams& params) {
    require_rank(input, 3, "batchnorm input");
    if (input.dim(1) != params.channels()) {
        throw ShapeError("batchnorm: input has " + std::to_string(input.dim(1)) +
                         " channels, layer normalizes " + std::to_string(params.channels()));
    }
}

}  // namespace

Tensor batchnorm_forward_train(const Tensor& input, BatchNormParams& params, BatchNormCache* cache) {
    check_bn_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    const std::size_t length = input.dim(2);
    const std::size_t count = n_batch * length;
    if (count < 2) {
        throw ShapeError("batchnorm: training mode needs N * L >= 2 values per channel");
    }

    Tensor out(input.shape());
    Tensor normalized(input.shape());
    std::vector<double> inv_std(channels);
    const double* x = input.data().data();
    double* y = out.data().data();
    double* xh = normalized.data().data();

    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_batch; ++i) {
            const double* row = x + (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) sum += row[t];
        }
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t i = 0; i < n_batch; ++i) {
            const double* row = x + (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
                const double d = row[t] - mean;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(count);
        const double istd = 1.0 / std::sqrt(var + params.epsilon);
        inv_std[c] = istd;
        const double g = params.gamma[c];
        const double b = params.beta[c];
        for (std::size_t i = 0; i < n_batch; ++i) {
            const std::size_t base = (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
                const double h = (x[base + t] - mean) * istd;
                xh[base + t] = h;
                y[base + t] = g * h + b;
            }
        }
        const double m = params.momentum;
        params.running_mean[c] = (1.0 - m) * params.running_mean[c] + m * mean;
        params.running_var[c] = (1.0 - m) * params.running_var[c] + m * var;
    }

    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Tensor batchnorm_forward_eval(const Tensor& input, const BatchNormParams& params) {
    check_bn_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    const std::size_t length = input.dim(2);
    Tensor out(input.shape());
    const double* x = input.data().data();
    double* y = out.data().data();
    for (std::size_t c = 0; c < channels; ++c) {
        const double scale = params.gamma[c] / std::sqrt(params.running_var[c] + params.epsilon);
        const double shift = params.beta[c] - params.running_mean[c] * scale;
        for (std::size_t i = 0; i < n_batch; ++i) {
            const std::size_t base = (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) y[base + t] = x[base + t] * scale + shift;
        }
    }
    return out;
}

Tensor batchnorm_forward(const Tensor& input, BatchNormParams& params, bool training) {
    return training ? batchnorm_forward_train(input, params) : batchnorm_forward_eval(input, params);
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormParams& params,
                                  const BatchNormCache& cache) {
    require_shape(grad_out, cache.normalized.shape(), "batchnorm grad_out");
    if (grad_out.dim(1) != params.channels() || cache.inv_std.size() != params.channels()) {
        throw ShapeError("batchnorm backward: channel count mismatch");
    }
    const std::size_t n_batch = grad_out.dim(0);
    const std::size_t channels = grad_out.dim(1);
    const std::size_t length = grad_out.dim(2);
    const double count = static_cast<double>(n_batch * length);

    BatchNormGrads grads{Tensor(grad_out.shape()), Tensor({channels}), Tensor({channels})};
    const double* gy = grad_out.data().data();
    const double* xh = cache.normalized.data().data();
    double* gx = grads.input.data().data();

    for (std::size_t c = 0; c < channels; ++c) {
        double sum_gy = 0.0;
        double sum_gy_xh = 0.0;
        for (std::size_t i = 0; i < n_batch; ++i) {
            const std::size_t base = (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
                sum_gy += gy[base + t];
                sum_gy_xh += gy[base + t] * xh[base + t];
            }
        }
        grads.beta[c] = sum_gy;
        grads.gamma[c] = sum_gy_xh;
        const double k = params.gamma[c] * cache.inv_std[c] / count;
        for (std::size_t i = 0; i < n_batch; ++i) {
            const std::size_t base = (i * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
                gx[base + t] = k * (count * gy[base + t] - sum_gy - xh[base + t] * sum_gy_xh);
            }
        }
    }
    return grads;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] < 0.0 ? 0.0 : x[i];  // NaN passes through
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require_shape(grad_out, input.shape(), "relu grad_out");
    Tensor out(input.shape());
    auto x = input.data();
    auto gy = grad_out.data();
    auto gx = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
    return out;
}

LinearParams::LinearParams(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

namespace {

void check_linear_input(const Tensor& input, const LinearParams& params) {
    require_rank(input, 2, "linear input");
    if (input.dim(1) != params.in_features()) {
        throw ShapeError("linear: input has " + std::to_string(input.dim(1)) +
                         " features, layer expects " + std::to_string(params.in_features()));
    }
}

}  // namespace

Tensor linear_forward(const Tensor& input, const LinearParams& params) {
    check_linear_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t f_in = params.in_features();
    const std::size_t f_out = params.out_features();
    Tensor out({n_batch, f_out});
    const double* x = input.data().data();
    const double* w = params.weight.data().data();
    for (std::size_t i = 0; i < n_batch; ++i) {
        for (std::size_t o = 0; o < f_out; ++o) {
            double acc = params.bias[o];
            const double* w_row = w + o * f_in;
            const double* x_row = x + i * f_in;
            for (std::size_t f = 0; f < f_in; ++f) acc += w_row[f] * x_row[f];
            out[i * f_out + o] = acc;
        }
    }
    return out;
}

LinearGrads linear_backward(const Tensor& input, const LinearParams& params, const Tensor& grad_out) {
    check_linear_input(input, params);
    const std::size_t n_batch = input.dim(0);
    const std::size_t f_in = params.in_features();
    const std::size_t f_out = params.out_features();
    require_shape(grad_out, {n_batch, f_out}, "linear grad_out");

    LinearGrads grads{Tensor(input.shape()), Tensor(params.weight.shape()),
                      Tensor(params.bias.shape())};
    const double* x = input.data().data();
    const double* w = params.weight.data().data();
    const double* gy = grad_out.data().data();
    double* gx = grads.input.data().data();
    double* gw = grads.weight.data().data();
    for (std::size_t i = 0; i < n_batch; ++i) {
        for (std::size_t o = 0; o < f_out; ++o) {
            const double g = gy[i * f_out + o];
            grads.bias[o] += g;
            const double* w_row = w + o * f_in;
            double* gw_row = gw + o * f_in;
            const double* x_row = x + i * f_in;
            double* gx_row = gx + i * f_in;
            for (std::size_t f = 0; f < f_in; ++f) {
                gw_row[f] += g * x_row[f];
                gx_row[f] += g * w_row[f];
            }
        }
    }
    return grads;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax logits");
    const std::size_t rows = logits.dim(0);
    const std::size_t cols = logits.dim(1);
    if (cols < 2) throw ShapeError("softmax: needs at least 2 classes");
    Tensor out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data().data() + r * cols;
        double* p = out.data().data() + r * cols;
        const double peak = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            p[c] = std::exp(z[c] - peak);
            total += p[c];
        }
        for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
    }
    return out;
}

LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "cross_entropy logits");
    const std::size_t rows = logits.dim(0);
    const std::size_t cols = logits.dim(1);
    if (labels.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= cols) {
            throw DataError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(cols) + ")");
        }
    }
    LossResult result{0.0, softmax(logits)};
    const double inv_n = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.data().data() + r * cols;
        const double peak = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += std::exp(z[c] - peak);
        const auto label = static_cast<std::size_t>(labels[r]);
        // -log softmax = logsumexp(z) - z[label]
        result.loss += (peak + std::log(total)) - z[label];

        double* g = result.grad_logits.data().data() + r * cols;
        g[label] -= 1.0;
        for (std::size_t c = 0; c < cols; ++c) g[c] *= inv_n;
    }
    result.loss *= inv_n;
    return result;
}

}  // namespace vmclass::nn
