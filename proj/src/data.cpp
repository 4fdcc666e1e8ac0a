#include "pconet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pconet {
namespace fs = std::filesystem;

// ---- scanning -----------------------------------------------------------------

ScanResult scan_dataset(const fs::path& root) {
    ScanResult result;
    for (std::size_t label = 0; label < kNumClasses; ++label) {
        const fs::path dir = root / kClassDirs[label];
        if (!fs::is_directory(dir)) throw DatasetError("missing class directory: " + dir.string());

        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());

        std::size_t found = 0;
        for (const auto& f : files) {
            if (sniff_image_format(f)) {
                result.records.push_back({f, label});
                ++found;
            } else {
                result.warnings.push_back("skipping " + f.string() + ": not a PNG, JPEG or BMP image");
            }
        }
        if (found == 0) throw DatasetError("empty class: " + dir.string() + " contains no images");
    }
    return result;
}

// ---- preprocessing --------------------------------------------------------------

namespace {

// Bilinear tap on an (h,w,c) tensor at continuous coords, edge-replicated.
inline float sample(const Tensor& img, double y, double x, std::size_t c) {
    const std::size_t h = img.dim(0), w = img.dim(1), ch = img.dim(2);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    if (fy == 0.0 && fx == 0.0) return img[(y0 * w + x0) * ch + c];
    const double top = img[(y0 * w + x0) * ch + c] * (1 - fx) + img[(y0 * w + x1) * ch + c] * fx;
    const double bot = img[(y1 * w + x0) * ch + c] * (1 - fx) + img[(y1 * w + x1) * ch + c] * fx;
    return static_cast<float>(top * (1 - fy) + bot * fy);
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    if (image.rank() != 3) throw ShapeError("resize_bilinear: expected (h,w,c), got " + image.shape().str());
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (h == height && w == width) return image;
    Tensor out({height, width, c});
    const double sy = static_cast<double>(h) / static_cast<double>(height);
    const double sx = static_cast<double>(w) / static_cast<double>(width);
#pragma omp parallel for schedule(static)
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t k = 0; k < c; ++k)
                out[(y * width + x) * c + k] = sample(image, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5, k);
    return out;
}

Tensor preprocess(const RawImage& raw, std::size_t size) {
    if (raw.width == 0 || raw.height == 0) throw ImageDecodeError("preprocess: image has zero area");
    if (raw.channels < 1 || raw.channels > 4) throw ImageDecodeError("preprocess: unsupported channel count");
    Tensor rgb({raw.height, raw.width, 3});
    const bool gray = raw.channels <= 2;
    for (std::size_t y = 0; y < raw.height; ++y)
        for (std::size_t x = 0; x < raw.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                rgb[(y * raw.width + x) * 3 + c] = static_cast<float>(raw.at(y, x, gray ? 0 : c)) / 255.0f;
    return resize_bilinear(rgb, size, size);
}

Tensor preprocess(const Tensor& image, std::size_t size) {
    if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("preprocess: expected (h,w,3), got " + image.shape().str());
    return resize_bilinear(image, size, size);
}

// ---- augmentation ---------------------------------------------------------------

Tensor flip_horizontal(const Tensor& image) {
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    Tensor out(image.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t k = 0; k < c; ++k) out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
    return out;
}

Tensor augment(const Tensor& image, Rng& rng, const AugmentConfig& config) {
    if (!config.enabled) return image;
    // Always draw all three so the stream layout is fixed.
    const bool flip = rng.bernoulli(config.flip_probability);
    const double angle =
        rng.uniform(-config.max_rotation_degrees, config.max_rotation_degrees) * std::numbers::pi / 180.0;
    const double zoom = rng.uniform(1.0 - config.max_zoom, 1.0 + config.max_zoom);

    const Tensor src = flip ? flip_horizontal(image) : image;
    const std::size_t h = src.dim(0), w = src.dim(1), c = src.dim(2);
    const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
    const double cos_a = std::cos(angle) / zoom, sin_a = std::sin(angle) / zoom;

    Tensor out(src.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            // inverse map: rotate by -angle, scale by 1/zoom
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            const double sx = cos_a * dx + sin_a * dy + cx;
            const double sy = -sin_a * dx + cos_a * dy + cy;
            for (std::size_t k = 0; k < c; ++k)
                out[(y * w + x) * c + k] = std::clamp(sample(src, sy, sx, k), 0.0f, 1.0f);
        }
    return out;
}

// ---- splitting ------------------------------------------------------------------

SplitIndices split_indices(const std::vector<std::size_t>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw DatasetError("split ratio must lie strictly between 0 and 1, got " + std::to_string(ratio));
    if (labels.size() < 2) throw DatasetError("split needs at least 2 items");

    std::size_t classes = 0;
    for (auto l : labels) classes = std::max(classes, l + 1);

    SplitIndices out;
    for (std::size_t c = 0; c < classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) members.push_back(i);
        if (members.empty()) continue;
        const auto n = members.size();
        const auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));
        if (n < 2 || n_train == 0 || n_train == n)
            throw DatasetError("class " + std::to_string(c) + " has " + std::to_string(n) +
                               " item(s); cannot place at least one on each side at ratio " + std::to_string(ratio));
        Rng rng(Rng::derive(seed, {c}));
        rng.shuffle(std::span<std::size_t>(members));
        out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.validation.insert(out.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                              members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    return out;
}

DatasetSplit split(const std::vector<ImageRecord>& items, double ratio, std::uint64_t seed) {
    std::vector<std::size_t> labels;
    for (const auto& r : items) labels.push_back(r.label);
    const auto idx = split_indices(labels, ratio, seed);
    DatasetSplit s{{}, {}, ratio, seed};
    for (auto i : idx.train) s.train.push_back(items[i]);
    for (auto i : idx.validation) s.validation.push_back(items[i]);
    return s;
}

// ---- sources ----------------------------------------------------------------------

FileSource::FileSource(std::vector<ImageRecord> records, std::size_t image_size)
    : records_(std::move(records)), image_size_(image_size) {}

Tensor FileSource::load(std::size_t i) const { return preprocess(decode_image(records_[i].path), image_size_); }

MemorySource::MemorySource(std::vector<LabeledImage> images) : images_(std::move(images)), size_(0) {
    if (images_.empty()) return;
    size_ = images_.front().pixels.dim(0);
    for (const auto& im : images_)
        if (!(im.pixels.shape() == Shape{size_, size_, 3}))
            throw ShapeError("MemorySource: image " + im.source.string() + " has shape " + im.pixels.shape().str());
}

MemorySource MemorySource::cache(const ImageSource& source) {
    std::vector<LabeledImage> images(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) images[i] = {source.load(i), source.label(i), source.name(i)};
    return MemorySource(std::move(images));
}

// ---- batching ---------------------------------------------------------------------

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
    Tensor t({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw std::out_of_range("label " + std::to_string(labels[i]) + " out of range");
        t[i * classes + labels[i]] = 1.0f;
    }
    return t;
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 std::uint64_t epoch, bool shuffle) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        Rng rng(Rng::derive(seed, {epoch}));
        rng.shuffle(std::span<std::size_t>(order));
    }
    std::vector<std::vector<std::size_t>> plan;
    for (std::size_t i = 0; i < n; i += batch_size)
        plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return plan;
}

Batch assemble_batch(const ImageSource& source, const std::vector<std::size_t>& indices, const AugmentConfig* augment,
                     std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch_index) {
    if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index list");
    const std::size_t s = source.image_size();
    const std::size_t stride = s * s * 3;
    Batch b{Tensor({indices.size(), s, s, 3}), Tensor({indices.size(), kNumClasses}), indices};

    std::vector<std::size_t> labels(indices.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < indices.size(); ++k) {
        try {
            Tensor img = source.load(indices[k]);
            if (augment) {
                Rng rng(Rng::derive(seed, {epoch, batch_index, k}));
                img = pconet::augment(img, rng, *augment);
            }
            std::copy(img.data(), img.data() + stride, b.images.data() + k * stride);
            labels[k] = source.label(indices[k]);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    b.labels = one_hot(labels);
    return b;
}

std::vector<Batch> batches(const ImageSource& source, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                           bool shuffle, const AugmentConfig* augment) {
    std::vector<Batch> out;
    const auto plan = batch_plan(source.size(), batch_size, seed, epoch, shuffle);
    for (std::size_t i = 0; i < plan.size(); ++i) out.push_back(assemble_batch(source, plan[i], augment, seed, epoch, i));
    return out;
}

BatchPrefetcher::BatchPrefetcher(const ImageSource& source, std::vector<std::vector<std::size_t>> plan,
                                 std::optional<AugmentConfig> augment, std::uint64_t seed, std::uint64_t epoch,
                                 std::size_t depth)
    : source_(source),
      plan_(std::move(plan)),
      augment_(augment),
      seed_(seed),
      epoch_(epoch),
      depth_(std::max<std::size_t>(depth, 1)),
      worker_([this] { produce(); }) {}

BatchPrefetcher::~BatchPrefetcher() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void BatchPrefetcher::produce() {
    for (std::size_t i = 0; i < plan_.size(); ++i) {
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stop_ || queue_.size() < depth_; });
            if (stop_) return;
        }
        try {
            Batch b = assemble_batch(source_, plan_[i], augment_ ? &*augment_ : nullptr, seed_, epoch_, i);
            std::lock_guard lock(mutex_);
            queue_.push_back(std::move(b));
            ++produced_;
        } catch (...) {
            std::lock_guard lock(mutex_);
            error_ = std::current_exception();
            cv_.notify_all();
            return;
        }
        cv_.notify_all();
    }
}

std::optional<Batch> BatchPrefetcher::next() {
    std::unique_lock lock(mutex_);
    if (consumed_ == plan_.size()) return std::nullopt;
    cv_.wait(lock, [&] { return !queue_.empty() || error_; });
    if (queue_.empty() && error_) std::rethrow_exception(error_);
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    ++consumed_;
    lock.unlock();
    cv_.notify_all();
    return b;
}

// ---- synthetic data ---------------------------------------------------------------

void make_synthetic_dataset(const fs::path& root, std::size_t per_class, std::size_t size, std::uint64_t seed) {
    for (std::size_t label = 0; label < kNumClasses; ++label) {
        const fs::path dir = root / kClassDirs[label];
        fs::create_directories(dir);
        for (std::size_t i = 0; i < per_class; ++i) {
            Rng rng(Rng::derive(seed, {label, i}));
            RawImage img{size, size, 3, std::vector<std::uint8_t>(size * size * 3)};
            const double s = static_cast<double>(size);
            const double cy = rng.uniform(0.3, 0.7) * s, cx = rng.uniform(0.3, 0.7) * s;
            const double radius = rng.uniform(0.12, 0.2) * s;
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x) {
                    double v = 20.0 + rng.uniform(0.0, 25.0);  // dark speckled field
                    if (label == 0) {
                        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                        v += 210.0 * std::exp(-(dy * dy + dx * dx) / (2 * radius * radius));
                    }
                    const auto g = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
                    for (std::size_t c = 0; c < 3; ++c) img.pixels[(y * size + x) * 3 + c] = g;
                }
            char name[32];
            std::snprintf(name, sizeof name, "%s_%02zu.png", label == 0 ? "blob" : "field", i);
            write_png(dir / name, img);
        }
    }
}

}  // namespace pconet
