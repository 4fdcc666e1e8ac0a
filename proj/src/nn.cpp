#include "pconet/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pconet/kernels.hpp"

namespace pconet {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::MaxPool2D: return "MaxPool2D";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Activation: return "Activation";
        case LayerKind::Dropout: return "Dropout";
    }
    return "?";
}

std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::ReLU: return "ReLu";
        case ActivationKind::Sigmoid: return "Sigmoid";
        case ActivationKind::Identity: return "Linear";
    }
    return "?";
}

// ---- Layer ------------------------------------------------------------------

template <typename T>
BasicTensor<T> Layer<T>::forward(const BasicTensor<T>& input, bool training) {
    if (input.rank() != input_shape_.rank() + 1 || !(input.shape().drop_leading() == input_shape_))
        throw ShapeError(to_string(kind()) + ": expected input (batch," + input_shape_.str().substr(1) + ", got " +
                         input.shape().str());
    auto out = do_forward(input, training);
    has_forward_ = true;
    return out;
}

template <typename T>
BasicTensor<T> Layer<T>::backward(const BasicTensor<T>& grad_out) {
    if (!has_forward_) throw std::logic_error(to_string(kind()) + ": backward called before forward");
    if (grad_out.rank() != output_shape().rank() + 1 || !(grad_out.shape().drop_leading() == output_shape()))
        throw ShapeError(to_string(kind()) + ": gradient shape " + grad_out.shape().str() +
                         " does not match output (batch," + output_shape().str().substr(1));
    return do_backward(grad_out);
}

template <typename T>
std::size_t Layer<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
void Layer<T>::zero_grad() {
    for (auto& p : params_) p.grad.fill(T{0});
}

// ---- Conv2D -----------------------------------------------------------------

template <typename T>
Conv2D<T>::Conv2D(Shape input_shape, std::size_t filters, std::size_t kernel, std::size_t stride)
    : Layer<T>(input_shape), filters_(filters), kernel_(kernel), stride_(stride) {
    if (input_shape.rank() != 3) throw ShapeError("Conv2D: input must be (h,w,c), got " + input_shape.str());
    output_shape();  // validates geometry
    const Shape kshape{kernel, kernel, input_shape[2], filters};
    this->params_.push_back({"kernel", BasicTensor<T>(kshape), BasicTensor<T>(kshape)});
    this->params_.push_back({"bias", BasicTensor<T>({filters}), BasicTensor<T>({filters})});
}

template <typename T>
Shape Conv2D<T>::output_shape() const {
    const Shape in = this->input_shape_.prepend(1);
    return conv2d_output_shape(in, {kernel_, kernel_, this->input_shape_[2], filters_}, stride_).drop_leading();
}

template <typename T>
std::string Conv2D<T>::specification() const {
    std::ostringstream os;
    os << filters_ << '(' << kernel_ << ',' << kernel_ << "), s=" << stride_;
    return os.str();
}

template <typename T>
BasicTensor<T> Conv2D<T>::do_forward(const BasicTensor<T>& input, bool) {
    input_ = input;
    return conv2d_forward(input, this->params_[0].value, this->params_[1].value, stride_);
}

template <typename T>
BasicTensor<T> Conv2D<T>::do_backward(const BasicTensor<T>& grad_out) {
    auto g = conv2d_backward(input_, this->params_[0].value, grad_out, stride_);
    auto& kg = this->params_[0].grad;
    auto& bg = this->params_[1].grad;
    for (std::size_t i = 0; i < kg.size(); ++i) kg[i] += g.kernels[i];
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g.bias[i];
    return std::move(g.input);
}

// ---- MaxPool2D --------------------------------------------------------------

template <typename T>
MaxPool2D<T>::MaxPool2D(Shape input_shape, std::size_t pool, std::size_t stride)
    : Layer<T>(input_shape), pool_(pool), stride_(stride) {
    if (input_shape.rank() != 3) throw ShapeError("MaxPool2D: input must be (h,w,c), got " + input_shape.str());
    output_shape();
}

template <typename T>
Shape MaxPool2D<T>::output_shape() const {
    return maxpool2d_output_shape(this->input_shape_.prepend(1), pool_, stride_).drop_leading();
}

template <typename T>
std::string MaxPool2D<T>::specification() const {
    std::ostringstream os;
    os << '(' << pool_ << ',' << pool_ << "), s=" << stride_;
    return os.str();
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::do_forward(const BasicTensor<T>& input, bool) {
    auto r = maxpool2d_forward(input, pool_, stride_);
    argmax_ = std::move(r.argmax);
    batch_input_shape_ = input.shape();
    return std::move(r.output);
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::do_backward(const BasicTensor<T>& grad_out) {
    return maxpool2d_backward(argmax_, grad_out, batch_input_shape_);
}

// ---- Flatten ----------------------------------------------------------------

template <typename T>
BasicTensor<T> Flatten<T>::do_forward(const BasicTensor<T>& input, bool) {
    return input.reshaped({input.dim(0), this->input_shape_.elements()});
}

template <typename T>
BasicTensor<T> Flatten<T>::do_backward(const BasicTensor<T>& grad_out) {
    return grad_out.reshaped(this->input_shape_.prepend(grad_out.dim(0)));
}

// ---- Dense ------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(Shape input_shape, std::size_t units) : Layer<T>(input_shape), units_(units) {
    if (input_shape.rank() != 1) throw ShapeError("Dense: input must be flat, got " + input_shape.str());
    if (units == 0) throw ShapeError("Dense: units must be positive");
    const Shape wshape{input_shape[0], units};
    this->params_.push_back({"kernel", BasicTensor<T>(wshape), BasicTensor<T>(wshape)});
    this->params_.push_back({"bias", BasicTensor<T>({units}), BasicTensor<T>({units})});
}

template <typename T>
BasicTensor<T> Dense<T>::do_forward(const BasicTensor<T>& input, bool) {
    input_ = input;
    auto y = matmul(input, this->params_[0].value);
    const auto& b = this->params_[1].value;
    for (std::size_t n = 0; n < y.dim(0); ++n)
        for (std::size_t j = 0; j < units_; ++j) y[n * units_ + j] += b[j];
    return y;
}

template <typename T>
BasicTensor<T> Dense<T>::do_backward(const BasicTensor<T>& grad_out) {
    const std::size_t batch = grad_out.dim(0), in = this->input_shape_[0];
    auto& w = this->params_[0];
    auto& b = this->params_[1];
    // dW += x^T g, dx = g W^T
    parallel::gemm(true, false, in, units_, batch, input_.data(), in, grad_out.data(), units_, w.grad.data(), units_,
                   true);
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t j = 0; j < units_; ++j) b.grad[j] += grad_out[n * units_ + j];
    BasicTensor<T> gx({batch, in});
    parallel::gemm(false, true, batch, in, units_, grad_out.data(), units_, w.value.data(), units_, gx.data(), in,
                   false);
    return gx;
}

// ---- Activation -------------------------------------------------------------

template <typename T>
BasicTensor<T> Activation<T>::do_forward(const BasicTensor<T>& input, bool) {
    switch (fn_) {
        case ActivationKind::ReLU: cache_ = input; return relu(input);
        case ActivationKind::Sigmoid: cache_ = sigmoid(input); return cache_;
        case ActivationKind::Identity: return input;
    }
    return input;
}

template <typename T>
BasicTensor<T> Activation<T>::do_backward(const BasicTensor<T>& grad_out) {
    switch (fn_) {
        case ActivationKind::ReLU: return relu_backward(cache_, grad_out);
        case ActivationKind::Sigmoid: return sigmoid_backward(cache_, grad_out);
        case ActivationKind::Identity: return grad_out;
    }
    return grad_out;
}

// ---- Dropout ----------------------------------------------------------------

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    DropoutResult<T> r{BasicTensor<T>(input.shape()), BasicTensor<T>(input.shape())};
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < input.size(); ++i) {
        r.mask[i] = (rate == 0.0 || !rng.bernoulli(rate)) ? keep : T{0};
        r.output[i] = input[i] * r.mask[i];
    }
    return r;
}

template <typename T>
Dropout<T>::Dropout(Shape input_shape, double rate, std::uint64_t seed)
    : Layer<T>(input_shape), rate_(rate), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

template <typename T>
std::string Dropout<T>::specification() const {
    std::ostringstream os;
    os << rate_;
    return os.str();
}

template <typename T>
BasicTensor<T> Dropout<T>::do_forward(const BasicTensor<T>& input, bool training) {
    if (!training) {
        mask_ = BasicTensor<T>(input.shape(), T{1});
        return input;
    }
    auto r = dropout_forward(input, rate_, rng_);
    mask_ = std::move(r.mask);
    return std::move(r.output);
}

template <typename T>
BasicTensor<T> Dropout<T>::do_backward(const BasicTensor<T>& grad_out) {
    BasicTensor<T> g(grad_out.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask_[i];
    return g;
}

// ---- initialization ---------------------------------------------------------

template <typename T>
double glorot_limit(const Layer<T>& layer) {
    const auto& params = layer.parameters();
    if (params.empty()) return 0.0;
    const Shape& w = params[0].value.shape();
    double fan_in = 0, fan_out = 0;
    if (w.rank() == 4) {
        const double receptive = static_cast<double>(w[0] * w[1]);
        fan_in = receptive * static_cast<double>(w[2]);
        fan_out = receptive * static_cast<double>(w[3]);
    } else {
        fan_in = static_cast<double>(w[0]);
        fan_out = static_cast<double>(w[1]);
    }
    return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
void init_weights(Layer<T>& layer, const InitPolicy& policy) {
    if (policy.scheme != "glorot_uniform") throw std::invalid_argument("unknown init scheme: " + policy.scheme);
    auto& params = layer.parameters();
    if (params.empty()) return;
    const double a = glorot_limit(layer);
    Rng rng(policy.seed);
    for (auto& v : params[0].value.values()) v = static_cast<T>(rng.uniform(-a, a));
    for (std::size_t i = 1; i < params.size(); ++i) params[i].value.fill(T{0});
    layer.zero_grad();
}

#define PCONET_INSTANTIATE_NN(T)                                                          \
    template class Layer<T>;                                                              \
    template class Conv2D<T>;                                                             \
    template class MaxPool2D<T>;                                                          \
    template class Flatten<T>;                                                            \
    template class Dense<T>;                                                              \
    template class Activation<T>;                                                         \
    template class Dropout<T>;                                                            \
    template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, Rng&);       \
    template double glorot_limit(const Layer<T>&);                                        \
    template void init_weights(Layer<T>&, const InitPolicy&);

PCONET_INSTANTIATE_NN(float)
PCONET_INSTANTIATE_NN(double)

}  // namespace pconet
