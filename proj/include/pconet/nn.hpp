#pragma once

// Layer abstraction and the six layer kinds the network is built from.
//
// Layers work on batched tensors: the leading axis is the batch, and the
// declared input/output shapes exclude it. Gradients are hand-derived; each
// layer caches what its backward pass needs from the most recent forward call.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pconet/rng.hpp"
#include "pconet/tensor.hpp"

namespace pconet {

enum class LayerKind { Conv2D, MaxPool2D, Flatten, Dense, Activation, Dropout };
enum class ActivationKind { ReLU, Sigmoid, Identity };

std::string to_string(LayerKind kind);
std::string to_string(ActivationKind kind);

template <typename T>
struct Parameter {
    std::string name;  // "kernel" or "bias"
    BasicTensor<T> value;
    BasicTensor<T> grad;
};

struct InitPolicy {
    std::string scheme = "glorot_uniform";
    std::uint64_t seed = 0;
};

template <typename T>
class Layer {
public:
    explicit Layer(Shape input_shape) : input_shape_(input_shape) {}
    virtual ~Layer() = default;
    Layer(const Layer&) = default;
    Layer& operator=(const Layer&) = default;

    virtual LayerKind kind() const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;

    const Shape& input_shape() const { return input_shape_; }
    virtual Shape output_shape() const = 0;

    /// Throws ShapeError unless `input` is (batch, input_shape()...).
    BasicTensor<T> forward(const BasicTensor<T>& input, bool training);
    /// Returns the gradient w.r.t. the last forward input and adds parameter
    /// gradients into Parameter::grad. Throws std::logic_error before any forward.
    BasicTensor<T> backward(const BasicTensor<T>& grad_out);

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    void zero_grad();

    /// Human-readable hyperparameters, e.g. "32(3,3), s=1".
    virtual std::string specification() const { return {}; }

protected:
    virtual BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) = 0;
    virtual BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) = 0;

    Shape input_shape_;
    std::vector<Parameter<T>> params_;
    bool has_forward_ = false;
};

template <typename T>
class Conv2D final : public Layer<T> {
public:
    Conv2D(Shape input_shape, std::size_t filters, std::size_t kernel = 3, std::size_t stride = 1);

    LayerKind kind() const override { return LayerKind::Conv2D; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2D>(*this); }
    Shape output_shape() const override;
    std::string specification() const override;

    std::size_t filters() const { return filters_; }
    std::size_t kernel_size() const { return kernel_; }
    std::size_t stride() const { return stride_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    std::size_t filters_, kernel_, stride_;  // params_: kernel [k,k,cin,filters], bias [filters]
    BasicTensor<T> input_;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
public:
    MaxPool2D(Shape input_shape, std::size_t pool = 2, std::size_t stride = 2);

    LayerKind kind() const override { return LayerKind::MaxPool2D; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2D>(*this); }
    Shape output_shape() const override;
    std::string specification() const override;

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    std::size_t pool_, stride_;
    std::vector<std::size_t> argmax_;
    Shape batch_input_shape_;
};

/// (n, h, w, c) -> (n, h*w*c), H-major then W then C.
template <typename T>
class Flatten final : public Layer<T> {
public:
    explicit Flatten(Shape input_shape) : Layer<T>(input_shape) {}

    LayerKind kind() const override { return LayerKind::Flatten; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }
    Shape output_shape() const override { return {this->input_shape_.elements()}; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;
};

/// y = x W + b with W stored [in, units].
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(Shape input_shape, std::size_t units);

    LayerKind kind() const override { return LayerKind::Dense; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
    Shape output_shape() const override { return {units_}; }
    std::string specification() const override { return std::to_string(units_); }

    std::size_t units() const { return units_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    std::size_t units_;
    BasicTensor<T> input_;
};

template <typename T>
class Activation final : public Layer<T> {
public:
    Activation(Shape input_shape, ActivationKind fn) : Layer<T>(input_shape), fn_(fn) {}

    LayerKind kind() const override { return LayerKind::Activation; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Activation>(*this); }
    Shape output_shape() const override { return this->input_shape_; }
    std::string specification() const override { return to_string(fn_); }

    ActivationKind function() const { return fn_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    ActivationKind fn_;
    BasicTensor<T> cache_;  // ReLU: input; sigmoid: output
};

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    /// 0 for dropped elements, 1/(1-rate) for survivors.
    BasicTensor<T> mask;
};

/// Inverted dropout. Throws std::invalid_argument unless 0 <= rate < 1.
template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, Rng& rng);

template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(Shape input_shape, double rate, std::uint64_t seed = 0);

    LayerKind kind() const override { return LayerKind::Dropout; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }
    Shape output_shape() const override { return this->input_shape_; }
    std::string specification() const override;

    double rate() const { return rate_; }
    void reseed(std::uint64_t seed) { rng_ = Rng(seed); }
    /// Mask applied by the most recent forward call (all ones in eval mode).
    const BasicTensor<T>& mask() const { return mask_; }

protected:
    BasicTensor<T> do_forward(const BasicTensor<T>& input, bool training) override;
    BasicTensor<T> do_backward(const BasicTensor<T>& grad_out) override;

private:
    double rate_;
    Rng rng_;
    BasicTensor<T> mask_;
};

/// Glorot-uniform weights U(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases.
/// For conv kernels fan_in = k*k*cin and fan_out = k*k*filters.
template <typename T>
void init_weights(Layer<T>& layer, const InitPolicy& policy);

/// The bound `a` init_weights uses for a layer; 0 for parameterless layers.
template <typename T>
double glorot_limit(const Layer<T>& layer);

extern template class Layer<float>;
extern template class Layer<double>;

}  // namespace pconet
