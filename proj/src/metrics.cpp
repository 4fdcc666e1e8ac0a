#include "pconet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace pconet {
namespace fs = std::filesystem;

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts)
        for (auto v : row) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::actual(std::size_t c) const {
    std::uint64_t n = 0;
    for (auto v : counts[c]) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::predicted(std::size_t c) const {
    std::uint64_t n = 0;
    for (const auto& row : counts) n += row[c];
    return n;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& actuals) {
    if (predictions.size() != actuals.size())
        throw std::invalid_argument("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(actuals.size()) + " labels");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] >= kNumClasses || actuals[i] >= kNumClasses)
            throw std::invalid_argument("confusion: label outside {0,1} at position " + std::to_string(i));
        ++cm.counts[actuals[i]][predictions[i]];
    }
    return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw std::invalid_argument("report: empty confusion matrix");
    MetricsReport r;
    std::uint64_t diag = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto& k = r.per_class[c];
        const auto tp = cm.counts[c][c];
        diag += tp;
        k.support = cm.actual(c);
        const auto pred = cm.predicted(c);
        auto ratio = [&](std::uint64_t num, std::uint64_t den) {
            if (den == 0) {
                k.degenerate = true;
                return 0.0;
            }
            return static_cast<double>(num) / static_cast<double>(den);
        };
        k.precision = ratio(tp, pred);
        k.recall = ratio(tp, k.support);
        if (k.precision + k.recall > 0.0) {
            k.f1 = 2 * k.precision * k.recall / (k.precision + k.recall);
        } else {
            k.f1 = 0.0;
            k.degenerate = true;
        }
    }
    r.accuracy = static_cast<double>(diag) / static_cast<double>(total);
    return r;
}

std::string format_report(const MetricsReport& r, const ConfusionMatrix& cm) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "Accuracy: " << r.accuracy << "\n\n";
    os << std::left << std::setw(14) << "Class" << std::right << std::setw(11) << "Precision" << std::setw(11)
       << "Recall" << std::setw(11) << "F1 Score" << std::setw(9) << "Support" << '\n';
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& k = r.per_class[c];
        os << std::left << std::setw(14) << kClassNames[c] << std::right << std::setw(11) << k.precision
           << std::setw(11) << k.recall << std::setw(11) << k.f1 << std::setw(9) << k.support;
        if (k.degenerate) os << "  (degenerate)";
        os << '\n';
    }
    os << "\nConfusion matrix (rows actual, columns predicted):\n";
    os << std::left << std::setw(14) << "" << std::right;
    for (const auto& name : kClassNames) os << std::setw(14) << name;
    os << '\n';
    for (std::size_t a = 0; a < kNumClasses; ++a) {
        os << std::left << std::setw(14) << kClassNames[a] << std::right;
        for (std::size_t p = 0; p < kNumClasses; ++p) os << std::setw(14) << cm.counts[a][p];
        os << '\n';
    }
    return os.str();
}

std::string report_json(const MetricsReport& r, const ConfusionMatrix& cm) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["per_class"] = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& k = r.per_class[c];
        j["per_class"][kClassNames[c]] = {{"precision", k.precision}, {"recall", k.recall}, {"f1", k.f1},
                                          {"support", k.support}, {"degenerate", k.degenerate}};
    }
    j["confusion"] = cm.counts;
    j["classes"] = kClassNames;
    return j.dump();
}

// ---- thresholded counts ------------------------------------------------------

void ThresholdCounts::add(const Tensor& probs, const Tensor& targets) {
    if (!(probs.shape() == targets.shape()))
        throw ShapeError("ThresholdCounts: probs " + probs.shape().str() + " vs targets " + targets.shape().str());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool pred = probs[i] > 0.5f, actual = targets[i] > 0.5f;
        if (pred && actual) ++tp;
        else if (pred) ++fp;
        else if (actual) ++fn;
        else ++tn;
    }
}

double ThresholdCounts::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ThresholdCounts::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

// ---- CSV log -------------------------------------------------------------------

std::string format_row(const EpochRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(r.epoch),
                  r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.val_precision, r.val_recall);
    return buf;
}

namespace {

std::optional<EpochRow> parse_row(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 7 || line.back() == ',') return std::nullopt;
    EpochRow r;
    try {
        std::size_t used = 0;
        const auto epoch = std::stoull(fields[0], &used);
        if (used != fields[0].size()) return std::nullopt;
        r.epoch = epoch;
        double* dst[] = {&r.train_loss, &r.train_acc, &r.val_loss, &r.val_acc, &r.val_precision, &r.val_recall};
        for (std::size_t i = 0; i < 6; ++i) {
            *dst[i] = std::stod(fields[i + 1], &used);
            if (used != fields[i + 1].size()) return std::nullopt;
        }
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return r;
}

}  // namespace

std::vector<EpochRow> read_curve_log(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LogError(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCurveHeader) throw LogError(path.string() + ":1: unexpected header");
    std::vector<EpochRow> rows;
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto row = parse_row(line);
        if (!row) throw LogError(path.string() + ":" + std::to_string(n) + ": malformed row");
        rows.push_back(*row);
    }
    return rows;
}

CurveLog::CurveLog(fs::path path, bool truncate) : path_(std::move(path)) {
    if (!truncate && fs::exists(path_)) {
        rows_ = read_curve_log(path_);
        return;
    }
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw LogError(path_.string() + ": cannot write log");
    out << kCurveHeader << '\n';
    out.flush();
    if (!out) throw LogError(path_.string() + ": cannot write log");
}

void CurveLog::append(const EpochRow& row) {
    for (const auto& r : rows_)
        if (r.epoch == row.epoch) throw LogError("duplicate epoch " + std::to_string(row.epoch) + " in " + path_.string());
    const std::string line = format_row(row) + '\n';
    std::FILE* f = std::fopen(path_.c_str(), "a");
    if (!f) throw LogError(path_.string() + ": cannot append");
    // One fwrite of the full line into an append-mode stream.
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size();
    if (std::fclose(f) != 0 || !ok) throw LogError(path_.string() + ": write failed");
    rows_.push_back(row);
}

// ---- SVG -------------------------------------------------------------------------

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> values;
};

std::string svg_plot(const std::string& title, const std::vector<double>& epochs, const std::vector<Series>& series) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
    double lo = 0.0, hi = 1.0;
    bool first = true;
    for (const auto& s : series)
        for (double v : s.values) {
            if (!std::isfinite(v)) continue;
            if (first) lo = hi = v, first = false;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double x0 = epochs.front(), x1 = epochs.size() > 1 ? epochs.back() : epochs.front() + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - lo) / (hi - lo) * (H - T - B); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << title << "</text>\n"
       << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        os << "<text x=\"" << L - 6 << "\" y=\"" << py(v) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << std::setprecision(3) << v
           << std::setprecision(6) << "</text>\n";
    }
    os << "<text x=\"" << L << "\" y=\"" << H - B + 18 << "\" font-family=\"sans-serif\" font-size=\"11\">" << x0
       << "</text>\n"
       << "<text x=\"" << W - R << "\" y=\"" << H - B + 18
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << epochs.back() << "</text>\n"
       << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (!std::isfinite(s.values[i])) continue;
            os << px(epochs[i]) << ',' << py(s.values[i]) << ' ';
        }
        os << "\"/>\n"
           << "<text x=\"" << W - R - 100 << "\" y=\"" << T + 16 * (k + 1) << "\" fill=\"" << s.color
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

std::vector<fs::path> emit_curves_svg(const fs::path& log_path, const fs::path& out_dir) {
    const auto rows = read_curve_log(log_path);
    if (rows.empty()) throw LogError(log_path.string() + ": log has no data rows");

    std::vector<double> epochs;
    std::vector<double> tl, ta, vl, va, vp, vr;
    for (const auto& r : rows) {
        epochs.push_back(static_cast<double>(r.epoch));
        tl.push_back(r.train_loss);
        ta.push_back(r.train_acc);
        vl.push_back(r.val_loss);
        va.push_back(r.val_acc);
        vp.push_back(r.val_precision);
        vr.push_back(r.val_recall);
    }
    const std::string train = "#1f77b4", val = "#d62728";
    const std::vector<std::pair<std::string, std::string>> plots = {
        {"loss.svg", svg_plot("Loss", epochs, {{"train", train, tl}, {"validation", val, vl}})},
        {"accuracy.svg", svg_plot("Accuracy", epochs, {{"train", train, ta}, {"validation", val, va}})},
        {"precision.svg", svg_plot("Precision", epochs, {{"validation", val, vp}})},
        {"recall.svg", svg_plot("Recall", epochs, {{"validation", val, vr}})},
    };

    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& [name, body] : plots) {
        const auto p = out_dir / name;
        std::ofstream out(p, std::ios::trunc);
        out << body;
        if (!out) throw LogError(p.string() + ": cannot write");
        written.push_back(p);
    }
    return written;
}

}  // namespace pconet
