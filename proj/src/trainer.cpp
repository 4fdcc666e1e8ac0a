#include "pconet/trainer.hpp"

#include <cmath>

namespace pconet {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning rate must be positive");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0,1)");
    if (prefetch_depth < 1) throw std::invalid_argument("prefetch depth must be at least 1");
}

TrainingAborted::TrainingAborted(std::uint64_t epoch, std::uint64_t step, const std::string& why)
    : std::runtime_error("training aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                         ": " + why),
      epoch_(epoch),
      step_(step) {}

double Evaluation::accuracy() const {
    const auto n = confusion.total();
    return n == 0 ? 0.0
                  : static_cast<double>(confusion.counts[0][0] + confusion.counts[1][1]) / static_cast<double>(n);
}

namespace {

// Leading coordinate that keeps dropout streams apart from shuffle/augment ones.
constexpr std::uint64_t kDropoutStream = 0xd50b0a7e5eedULL;

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
    std::vector<std::size_t> out(probs.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = classify(std::span<const float>(probs.data() + i * kNumClasses, kNumClasses));
    return out;
}

std::vector<std::size_t> labels_of(const Batch& b) {
    std::vector<std::size_t> out(b.labels.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b.labels[i * kNumClasses] > 0.5f ? 0 : 1;
    return out;
}

}  // namespace

Evaluation evaluate(Model& model, const ImageSource& source, std::size_t batch_size, std::size_t prefetch_depth) {
    if (source.size() == 0) throw DatasetError("evaluate: empty dataset");
    Evaluation ev;
    std::vector<std::size_t> actual;
    double loss_sum = 0.0;
    BatchPrefetcher feed(source, batch_plan(source.size(), batch_size, 0, 0, false), std::nullopt, 0, 0,
                         prefetch_depth);
    while (auto b = feed.next()) {
        const Tensor probs = model.forward(b->images, false);
        loss_sum += bce_loss(probs, b->labels).loss * static_cast<double>(b->indices.size());
        ev.thresholded.add(probs, b->labels);
        for (auto p : argmax_rows(probs)) ev.predictions.push_back(p);
        for (auto l : labels_of(*b)) actual.push_back(l);
    }
    ev.loss = loss_sum / static_cast<double>(source.size());
    ev.confusion = confusion(ev.predictions, actual);
    return ev;
}

Trainer::Trainer(Model& model, const ImageSource& train, const ImageSource& validation, TrainConfig config,
                 std::optional<TrainingState> resume)
    : model_(model),
      train_(train),
      validation_(validation),
      config_(std::move(config)),
      adam_(AdamConfig{config_.learning_rate}) {
    config_.validate();
    if (train_.size() == 0) throw DatasetError("training set is empty");
    if (validation_.size() == 0) throw DatasetError("validation set is empty");
    if (resume) {
        adam_.restore(resume->step, resume->m, resume->v);
        completed_ = resume->epoch;
        step_ = resume->step;
    }
}

EpochRow Trainer::run_epoch(std::uint64_t epoch) {
    const auto plan = batch_plan(train_.size(), config_.batch_size, config_.seed, epoch, true);
    std::optional<AugmentConfig> aug;
    if (config_.augment) aug = AugmentConfig{};
    BatchPrefetcher feed(train_, plan, aug, config_.seed, epoch, config_.prefetch_depth);
    // Dropout masks depend only on (seed, epoch, layer), so a resumed run
    // replays exactly what an uninterrupted one would have drawn.
    for (std::size_t i = 0; i < model_.size(); ++i)
        if (auto* d = dynamic_cast<Dropout<float>*>(&model_.layer(i)))
            d->reseed(Rng::derive(config_.seed, {kDropoutStream, epoch, i}));

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, step_in_epoch = 0;
    while (auto b = feed.next()) {
        ++step_in_epoch;
        const Tensor probs = model_.forward(b->images, true);
        auto loss = bce_loss(probs, b->labels);
        if (!std::isfinite(loss.loss)) throw TrainingAborted(epoch, step_in_epoch, "loss is not finite");
        model_.zero_grad();
        model_.backward(loss.grad);
        try {
            adam_.step(model_.parameters());
        } catch (const NonFiniteError& e) {
            throw TrainingAborted(epoch, step_in_epoch, e.what());
        }
        ++step_;

        const auto n = b->indices.size();
        loss_sum += loss.loss * static_cast<double>(n);
        const auto pred = argmax_rows(probs), actual = labels_of(*b);
        for (std::size_t i = 0; i < n; ++i) correct += pred[i] == actual[i];
        seen += n;
    }

    const Evaluation val = evaluate(model_, validation_, config_.batch_size, config_.prefetch_depth);
    completed_ = epoch;
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    row.val_loss = val.loss;
    row.val_acc = val.accuracy();
    row.val_precision = val.thresholded.precision();
    row.val_recall = val.thresholded.recall();
    return row;
}

TrainingLog Trainer::train(const std::function<bool(const EpochRow&)>& on_epoch) {
    std::optional<CurveLog> csv;
    if (!config_.log_path.empty()) csv.emplace(config_.log_path, completed_ == 0);
    TrainingLog log;
    for (std::uint64_t e = completed_ + 1; e <= config_.epochs; ++e) {
        const EpochRow row = run_epoch(e);
        log.rows.push_back(row);
        if (csv) csv->append(row);
        if (on_epoch && !on_epoch(row)) break;
    }
    return log;
}

TrainingState Trainer::state() const {
    return TrainingState{adam_.step_count(), completed_, adam_.first_moments(), adam_.second_moments()};
}

}  // namespace pconet
