#pragma once

// Dataset plumbing: directory scanning, preprocessing, augmentation,
// stratified splitting and batch assembly with a bounded prefetch queue.
//
// On-disk layout: <root>/infected/... and <root>/not_infected/..., label
// indices 0 and 1 respectively.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pconet/image_io.hpp"
#include "pconet/model.hpp"
#include "pconet/rng.hpp"
#include "pconet/tensor.hpp"

namespace pconet {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Directory names on disk, in class-index order.
inline const std::array<std::string, kNumClasses> kClassDirs{"infected", "not_infected"};

struct ImageRecord {
    std::filesystem::path path;
    std::size_t label;
};

struct LabeledImage {
    Tensor pixels;  // (h,w,3) in [0,1]
    std::size_t label;
    std::filesystem::path source;
};

struct ScanResult {
    std::vector<ImageRecord> records;
    std::vector<std::string> warnings;  // skipped files
};

/// Lists every recognisable image below each class directory, class by class,
/// paths in lexicographic order. Files without a PNG/JPEG/BMP signature are
/// skipped with a warning. Throws DatasetError for a missing class directory or
/// a class with no images ("empty class").
ScanResult scan_dataset(const std::filesystem::path& root);

/// Bilinear resize with half-pixel centres; an identity when sizes match.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// Decoded image -> (size,size,3) floats in [0,1]: gray replicated, alpha
/// dropped, bilinear resize, /255. Throws ImageDecodeError on a zero-area image.
Tensor preprocess(const RawImage& raw, std::size_t size = kImageSize);
/// Resize-only path for an already scaled (h,w,3) tensor.
Tensor preprocess(const Tensor& image, std::size_t size = kImageSize);

struct AugmentConfig {
    bool enabled = true;
    double flip_probability = 0.5;
    double max_rotation_degrees = 10.0;
    double max_zoom = 0.10;  // scale drawn from [1 - max_zoom, 1 + max_zoom]
};

Tensor flip_horizontal(const Tensor& image);

/// Random flip, rotation and zoom about the centre, bilinear sampling with
/// edge replication, output clamped to [0,1]. Identity when disabled.
Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& config = {});

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Stratified split of item indices by label. Each class contributes
/// round(ratio * n_c) items to train, and at least one to each side.
/// Throws DatasetError when that is impossible or ratio is outside (0,1).
SplitIndices split_indices(const std::vector<std::size_t>& labels, double ratio, std::uint64_t seed);

struct DatasetSplit {
    std::vector<ImageRecord> train;
    std::vector<ImageRecord> validation;
    double ratio;
    std::uint64_t seed;
};

DatasetSplit split(const std::vector<ImageRecord>& items, double ratio = 0.8, std::uint64_t seed = 0);

/// Random-access source of preprocessed, labelled images. load() must be safe
/// to call concurrently.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual std::size_t size() const = 0;
    virtual std::size_t label(std::size_t i) const = 0;
    virtual Tensor load(std::size_t i) const = 0;
    virtual std::string name(std::size_t i) const = 0;
    virtual std::size_t image_size() const = 0;
};

/// Decodes from disk on every load.
class FileSource final : public ImageSource {
public:
    explicit FileSource(std::vector<ImageRecord> records, std::size_t image_size = kImageSize);
    std::size_t size() const override { return records_.size(); }
    std::size_t label(std::size_t i) const override { return records_[i].label; }
    Tensor load(std::size_t i) const override;
    std::string name(std::size_t i) const override { return records_[i].path.string(); }
    std::size_t image_size() const override { return image_size_; }

private:
    std::vector<ImageRecord> records_;
    std::size_t image_size_;
};

/// Pre-decoded images, all (s,s,3).
class MemorySource final : public ImageSource {
public:
    explicit MemorySource(std::vector<LabeledImage> images);
    std::size_t size() const override { return images_.size(); }
    std::size_t label(std::size_t i) const override { return images_[i].label; }
    Tensor load(std::size_t i) const override { return images_[i].pixels; }
    std::string name(std::size_t i) const override { return images_[i].source.string(); }
    std::size_t image_size() const override { return size_; }

    /// Loads every record of `source` once.
    static MemorySource cache(const ImageSource& source);

private:
    std::vector<LabeledImage> images_;
    std::size_t size_;
};

struct Batch {
    Tensor images;  // (b,s,s,3)
    Tensor labels;  // (b,2) one-hot
    std::vector<std::size_t> indices;
};

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes = kNumClasses);

/// Epoch order split into ceil(n / batch_size) chunks, the last possibly short.
/// Shuffled from (seed, epoch) when shuffle is set; identity order otherwise.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch, bool shuffle = true);

/// Loads and stacks `indices`. When `augment` is set, sample k uses its own
/// stream derived from (seed, epoch, batch_index, k).
Batch assemble_batch(const ImageSource& source, const std::vector<std::size_t>& indices,
                     const AugmentConfig* augment = nullptr, std::uint64_t seed = 0, std::uint64_t epoch = 0,
                     std::uint64_t batch_index = 0);

/// Every batch of one epoch, materialised.
std::vector<Batch> batches(const ImageSource& source, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                           bool shuffle = true, const AugmentConfig* augment = nullptr);

/// Assembles the batches of one epoch on a background thread, at most `depth`
/// ahead of the consumer. Emission order is the plan order regardless of timing.
class BatchPrefetcher {
public:
    BatchPrefetcher(const ImageSource& source, std::vector<std::vector<std::size_t>> plan,
                    std::optional<AugmentConfig> augment, std::uint64_t seed, std::uint64_t epoch,
                    std::size_t depth = 2);
    ~BatchPrefetcher();
    BatchPrefetcher(const BatchPrefetcher&) = delete;
    BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

    /// Next batch, or nullopt after the last one. Rethrows producer errors.
    std::optional<Batch> next();

private:
    void produce();

    const ImageSource& source_;
    std::vector<std::vector<std::size_t>> plan_;
    std::optional<AugmentConfig> augment_;
    std::uint64_t seed_, epoch_;
    std::size_t depth_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Batch> queue_;
    std::size_t produced_ = 0, consumed_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
    std::thread worker_;
};

/// Writes the toy set used by the overfit checks: `per_class` bright-blob
/// images under infected/ and `per_class` dark, noisy images under
/// not_infected/, as `size` x `size` RGB PNGs.
void make_synthetic_dataset(const std::filesystem::path& root, std::size_t per_class = 4, std::size_t size = 64,
                            std::uint64_t seed = 1);

}  // namespace pconet
