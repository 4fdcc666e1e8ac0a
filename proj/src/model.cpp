#include "pconet/model.hpp"

#include <algorithm>
#include <sstream>

namespace pconet {

template <typename T>
Network<T>::Network(const Network& other) : input_shape_(other.input_shape_), names_(other.names_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
Shape Network<T>::output_shape() const {
    return layers_.empty() ? input_shape_ : layers_.back()->output_shape();
}

template <typename T>
Layer<T>& Network<T>::add(std::string name, std::unique_ptr<Layer<T>> layer) {
    const Shape expected = output_shape();
    if (!(layer->input_shape() == expected))
        throw ShapeError("layer " + std::to_string(layers_.size()) + " (" + name + "): expects input " +
                         layer->input_shape().str() + " but previous output is " + expected.str());
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
    return *layers_.back();
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& input, bool training) {
    BasicTensor<T> x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            x = layers_[i]->forward(x, training);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + " (" + names_[i] + "): " + e.what());
        }
    }
    return x;
}

template <typename T>
BasicTensor<T> Network<T>::backward(const BasicTensor<T>& grad_out) {
    BasicTensor<T> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
    return g;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_)
        for (auto& p : l->parameters()) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& l : layers_)
        for (const auto& p : l->parameters()) out.push_back(&p);
    return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->parameter_count();
    return n;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto& l : layers_) l->zero_grad();
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::uint64_t stream = Rng::derive(seed, {i});
        if (!layers_[i]->parameters().empty()) init_weights(*layers_[i], InitPolicy{"glorot_uniform", stream});
        if (auto* d = dynamic_cast<Dropout<T>*>(layers_[i].get())) d->reseed(stream);
    }
}

template <typename T>
std::vector<Shape> Network<T>::shape_trace() const {
    std::vector<Shape> out;
    for (const auto& l : layers_) out.push_back(l->output_shape());
    return out;
}

template <typename T>
Network<T> build_pconet(std::uint64_t seed) {
    Network<T> net(Shape{kImageSize, kImageSize, 3});
    const std::size_t filters[] = {32, 32, 64, 64, 128};
    for (std::size_t b = 0; b < 5; ++b) {
        const auto idx = std::to_string(b + 1);
        net.template emplace<Conv2D<T>>("Conv_" + idx, filters[b], 3, 1);
        net.template emplace<Activation<T>>("relu_" + idx, ActivationKind::ReLU);
        net.template emplace<MaxPool2D<T>>("Max_pool_" + idx, 2, 2);
    }
    net.template emplace<Flatten<T>>("Flattening Layer");
    net.template emplace<Dense<T>>("Dense Layer 1", 128);
    net.template emplace<Activation<T>>("relu_6", ActivationKind::ReLU);
    net.template emplace<Dropout<T>>("dropout_1", 0.5);
    net.template emplace<Dense<T>>("Dense Layer 2", 256);
    net.template emplace<Activation<T>>("relu_7", ActivationKind::ReLU);
    net.template emplace<Dropout<T>>("dropout_2", 0.5);
    net.template emplace<Dense<T>>("Output Layer", kNumClasses);
    net.template emplace<Activation<T>>("sigmoid", ActivationKind::Sigmoid);
    net.initialize(seed);
    return net;
}

namespace {

std::string output_size(const Shape& s) {
    if (s.rank() == 1) return "(None," + std::to_string(s[0]) + ")";
    return s.str();
}

}  // namespace

template <typename T>
std::vector<SummaryRow> summary_rows(const Network<T>& net) {
    std::vector<SummaryRow> rows;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto& l = net.layer(i);
        switch (l.kind()) {
            case LayerKind::Activation:
                if (!rows.empty() && i > 0 && net.layer(i - 1).kind() == LayerKind::Dense)
                    rows.back().specification += ", " + l.specification();
                break;
            case LayerKind::Dropout: break;
            default: rows.push_back({net.layer_name(i), l.specification(), output_size(l.output_shape())});
        }
    }
    return rows;
}

std::string group_thousands(std::size_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

template <typename T>
std::string summary(const Network<T>& net) {
    std::ostringstream os;
    os << "Type | Specifications | Output Size\n";
    for (const auto& r : summary_rows(net)) os << r.type << " | " << r.specification << " | " << r.output_size << '\n';
    const auto total = group_thousands(net.parameter_count());
    os << "Trainable params: " << total << '\n';
    os << "Non-trainable params: 0\n";
    os << "Total params: " << total << '\n';
    return os.str();
}

template <typename S>
static std::size_t classify_impl(std::span<const S> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

std::size_t classify(std::span<const double> scores) { return classify_impl(scores); }
std::size_t classify(std::span<const float> scores) { return classify_impl(scores); }

Prediction predict(Model& model, const Tensor& image) {
    const Tensor batch = image.reshaped(image.shape().prepend(1));
    const Tensor probs = model.forward(batch, false);
    Prediction p{};
    for (std::size_t c = 0; c < kNumClasses; ++c) p.scores[c] = probs[c];
    p.label = classify(std::span<const double>(p.scores));
    return p;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_pconet<float>(std::uint64_t);
template Network<double> build_pconet<double>(std::uint64_t);
template std::vector<SummaryRow> summary_rows(const Network<float>&);
template std::vector<SummaryRow> summary_rows(const Network<double>&);
template std::string summary(const Network<float>&);
template std::string summary(const Network<double>&);

}  // namespace pconet
