#include "pconet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pconet {

template <typename T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!(params[i]->grad.shape() == params[i]->value.shape()) || !(m_[i].shape() == params[i]->value.shape()))
            throw ShapeError("Adam: gradient/moment shape mismatch for parameter " + params[i]->name);
        if (!params[i]->grad.all_finite())
            throw NonFiniteError("Adam: non-finite gradient in parameter " + params[i]->name);
    }

    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = config_.learning_rate, eps = config_.epsilon;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->value;
        const auto& g = params[i]->grad;
        auto& m = m_[i];
        auto& v = v_[i];
        const std::size_t n = p.size();
#pragma omp parallel for simd schedule(static)
        for (std::size_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            p[j] = static_cast<T>(p[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + eps));
        }
    }
}

template <typename T>
void Adam<T>::restore(std::uint64_t t, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v) {
    if (m.size() != v.size()) throw ShapeError("Adam: moment lists differ in length");
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!(m[i].shape() == v[i].shape())) throw ShapeError("Adam: moment shapes differ at index " + std::to_string(i));
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& probs, const BasicTensor<T>& targets) {
    if (!(probs.shape() == targets.shape()) || probs.rank() != 2)
        throw ShapeError("bce_loss: probs " + probs.shape().str() + " and targets " + targets.shape().str() +
                         " must be equal (n,k)");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const T y = targets[i * k + j];
            if (y != T{0} && y != T{1})
                throw std::invalid_argument("bce_loss: target row " + std::to_string(i) + " is not one-hot");
            sum += y;
        }
        if (sum != 1.0) throw std::invalid_argument("bce_loss: target row " + std::to_string(i) + " is not one-hot");
    }

    const double lo = kProbClip, hi = 1.0 - kProbClip;
    const double scale = 1.0 / static_cast<double>(n * k);
    LossResult<T> r{0.0, BasicTensor<T>(probs.shape())};
    double total = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = static_cast<double>(probs[i]);
        const double y = static_cast<double>(targets[i]);
        const double pc = std::clamp(p, lo, hi);
        total += y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
        const bool clipped = p < lo || p > hi;
        r.grad[i] = clipped ? T{0} : static_cast<T>(-scale * (y / pc - (1.0 - y) / (1.0 - pc)));
    }
    r.loss = -scale * total;
    return r;
}

template class Adam<float>;
template class Adam<double>;
template LossResult<float> bce_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template LossResult<double> bce_loss(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace pconet
