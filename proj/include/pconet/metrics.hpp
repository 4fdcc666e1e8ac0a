#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pconet/model.hpp"

namespace pconet {

/// counts[actual][predicted].
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t actual(std::size_t c) const;     // row sum
    std::uint64_t predicted(std::size_t c) const;  // column sum
};

/// Throws std::invalid_argument on a length mismatch or a label outside {0,1}.
ConfusionMatrix confusion(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& actuals);

struct ClassReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    bool degenerate = false;  // some ratio had a zero denominator and was set to 0
};

struct MetricsReport {
    double accuracy = 0.0;
    std::array<ClassReport, kNumClasses> per_class{};
};

/// Throws std::invalid_argument on an all-zero matrix.
MetricsReport report(const ConfusionMatrix& cm);

/// Text block: accuracy, a per-class precision/recall/F1/support table and the
/// confusion matrix.
std::string format_report(const MetricsReport& r, const ConfusionMatrix& cm);
/// Same content as one JSON object with keys accuracy, per_class, confusion.
std::string report_json(const MetricsReport& r, const ConfusionMatrix& cm);

/// Element-wise thresholded counts over sigmoid outputs: every neuron of every
/// sample is a binary decision (score > 0.5) against its one-hot target.
struct ThresholdCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    void add(const Tensor& probs, const Tensor& targets);
    double precision() const;  // 0 when nothing is predicted positive
    double recall() const;
};

struct EpochRow {
    std::uint64_t epoch = 0;
    double train_loss = 0, train_acc = 0;
    double val_loss = 0, val_acc = 0, val_precision = 0, val_recall = 0;
};

inline constexpr const char* kCurveHeader = "epoch,train_loss,train_acc,val_loss,val_acc,val_precision,val_recall";

class LogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses a training log. Throws LogError naming the 1-based line of the
/// first malformed row, or on a wrong header.
std::vector<EpochRow> read_curve_log(const std::filesystem::path& path);

/// Single writer for one CSV training log. Each row is written and flushed in
/// one call so the file can be read while training runs.
class CurveLog {
public:
    /// Opens (creating with the header) or continues an existing log whose
    /// header matches. Throws LogError when the path cannot be written.
    explicit CurveLog(std::filesystem::path path, bool truncate = true);

    /// Throws LogError for an epoch that is already present.
    void append(const EpochRow& row);

    const std::filesystem::path& path() const { return path_; }
    const std::vector<EpochRow>& rows() const { return rows_; }

private:
    std::filesystem::path path_;
    std::vector<EpochRow> rows_;
};

std::string format_row(const EpochRow& row);

/// Writes loss.svg, accuracy.svg, precision.svg and recall.svg into out_dir
/// (train vs validation where the log has both). Returns the written paths.
/// A log without data rows is an error and nothing is written.
std::vector<std::filesystem::path> emit_curves_svg(const std::filesystem::path& log_path,
                                                   const std::filesystem::path& out_dir);

}  // namespace pconet
