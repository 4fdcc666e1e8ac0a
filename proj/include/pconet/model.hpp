#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pconet/nn.hpp"
#include "pconet/tensor.hpp"

namespace pconet {

inline constexpr std::size_t kImageSize = 224;
inline constexpr std::size_t kNumClasses = 2;
/// Class index order; index 0 wins score ties.
inline const std::array<std::string, kNumClasses> kClassNames{"infected", "not infected"};

/// Ordered stack of named layers with a fixed per-sample input shape.
template <typename T>
class Network {
public:
    explicit Network(Shape input_shape) : input_shape_(input_shape) {}
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    /// Output shape of the current last layer (the input shape when empty).
    Shape output_shape() const;

    /// Appends a layer whose input shape must equal output_shape().
    Layer<T>& add(std::string name, std::unique_ptr<Layer<T>> layer);

    template <typename L, typename... Args>
    L& emplace(std::string name, Args&&... args) {
        auto layer = std::make_unique<L>(output_shape(), std::forward<Args>(args)...);
        return static_cast<L&>(add(std::move(name), std::move(layer)));
    }

    const Shape& input_shape() const { return input_shape_; }
    std::size_t size() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
    const std::string& layer_name(std::size_t i) const { return names_[i]; }

    /// Throws ShapeError naming the layer index and expected/actual shapes.
    BasicTensor<T> forward(const BasicTensor<T>& input, bool training);
    /// Backpropagates from d loss / d output; returns d loss / d input.
    BasicTensor<T> backward(const BasicTensor<T>& grad_out);

    /// Every parameter in layer order.
    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();

    /// Glorot init of every parameterised layer and reseeding of dropout
    /// layers, each from its own stream derived from `seed`.
    void initialize(std::uint64_t seed);

    /// Per-sample output shape after each layer.
    std::vector<Shape> shape_trace() const;

private:
    Shape input_shape_;
    std::vector<std::string> names_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

using Model = Network<float>;

/// The five conv blocks + three dense layers, freshly initialised from `seed`:
/// Conv 32/32/64/64/128 (3x3, s=1, ReLU) each followed by 2x2/s2 max pooling,
/// Flatten, Dense 128 ReLU + Dropout 0.5, Dense 256 ReLU + Dropout 0.5,
/// Dense 2 Sigmoid. Input (224,224,3).
template <typename T = float>
Network<T> build_pconet(std::uint64_t seed = 0);

/// One row of the architecture table.
struct SummaryRow {
    std::string type;
    std::string specification;
    std::string output_size;
};

/// Architecture table rows for the shape-bearing layers; activations are
/// folded into the preceding Dense row and dropout layers are omitted.
template <typename T>
std::vector<SummaryRow> summary_rows(const Network<T>& net);

/// Three-column table plus trainable/total parameter counts; the last line is
/// "Total params: N" with thousands separators.
template <typename T>
std::string summary(const Network<T>& net);

/// 582690 -> "582,690".
std::string group_thousands(std::size_t n);

struct Prediction {
    std::size_t label;
    std::array<double, kNumClasses> scores;

    const std::string& label_name() const { return kClassNames[label]; }
};

/// Argmax with ties going to class 0.
std::size_t classify(std::span<const double> scores);
std::size_t classify(std::span<const float> scores);

/// Eval-mode forward of one preprocessed (h,w,3) image.
Prediction predict(Model& model, const Tensor& image);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace pconet
