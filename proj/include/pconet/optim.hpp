#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pconet/nn.hpp"
#include "pconet/tensor.hpp"

namespace pconet {

/// Thrown when a gradient or loss stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdamConfig {
    double learning_rate = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

/// Adam with textbook bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Moments are kept per parameter tensor, in parameter order.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::uint64_t step_count() const { return t_; }

    /// One update over every parameter. Throws NonFiniteError naming the
    /// parameter if any gradient is NaN/Inf; nothing is modified in that case.
    void step(const std::vector<Parameter<T>*>& params);

    const std::vector<BasicTensor<T>>& first_moments() const { return m_; }
    const std::vector<BasicTensor<T>>& second_moments() const { return v_; }
    /// Restores saved state; shapes must match the parameters seen by step().
    void restore(std::uint64_t t, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v);

private:
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<BasicTensor<T>> m_, v_;
};

template <typename T>
struct LossResult {
    double loss;
    BasicTensor<T> grad;  // d loss / d probs
};

inline constexpr double kProbClip = 1e-7;

/// Binary cross-entropy averaged over the batch and both output neurons:
///   L = -1/(2n) sum [y ln p + (1-y) ln(1-p)],  p clipped to [1e-7, 1-1e-7].
/// The gradient is zero where the clip is active. Targets must be one-hot rows.
template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& probs, const BasicTensor<T>& targets);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace pconet
