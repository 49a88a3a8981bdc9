#include "bayescal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace bayescal {

void validate_probabilities(const ProbMatrix& probs) {
    require(probs.rows() >= 1 && probs.cols() >= 1, "probability matrix is empty");
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const double* row = probs.row(r);
        double total = 0.0;
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            if (!(row[c] >= 0.0 && row[c] <= 1.0))
                throw ValidationError("row " + std::to_string(r + 1) + ": probability outside [0, 1]");
            total += row[c];
        }
        if (std::abs(total - 1.0) > kSimplexTolerance)
            throw ValidationError("row " + std::to_string(r + 1) + ": probabilities sum to " +
                                  format_double(total));
    }
}

void validate_probabilities(const ProbMatrix& probs, std::span<const int> labels) {
    validate_probabilities(probs);
    require(labels.size() == probs.rows(), "labels and probabilities disagree on the number of rows");
    const auto C = static_cast<int>(probs.cols());
    for (std::size_t r = 0; r < labels.size(); ++r)
        if (labels[r] < 0 || labels[r] >= C)
            throw ValidationError("row " + std::to_string(r + 1) + ": label out of range");
}

std::size_t argmax(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

std::size_t bin_index(double confidence, int bin_count) {
    const auto B = static_cast<std::size_t>(bin_count);
    const double scaled = std::ceil(confidence * bin_count);
    std::size_t i = scaled <= 1.0 ? 0 : std::min(B - 1, static_cast<std::size_t>(scaled) - 1);
    // Settle rounding at the edges against the same i/B edges the bins report.
    while (i > 0 && confidence <= static_cast<double>(i) / bin_count) --i;
    while (i + 1 < B && confidence > static_cast<double>(i + 1) / bin_count) ++i;
    return i;
}

ReliabilityBins reliability_bins(const ProbMatrix& probs, std::span<const int> labels, int bin_count) {
    require(bin_count >= 1, "bin_count must be >= 1");
    validate_probabilities(probs, labels);
    ReliabilityBins out;
    out.total = probs.rows();
    out.bins.resize(static_cast<std::size_t>(bin_count));
    for (std::size_t i = 0; i < out.bins.size(); ++i) {
        out.bins[i].lower = static_cast<double>(i) / bin_count;
        out.bins[i].upper = static_cast<double>(i + 1) / bin_count;
    }
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const std::size_t k = argmax(probs.row(r), probs.cols());
        const double conf = probs(r, k);
        ReliabilityBin& b = out.bins[bin_index(conf, bin_count)];
        ++b.count;
        b.confidence_sum += conf;
        if (static_cast<int>(k) == labels[r]) ++b.correct;
    }
    return out;
}

double ece(const ReliabilityBins& bins) {
    const auto n = static_cast<double>(bins.total);
    double total = 0.0;
    for (const auto& b : bins.bins) {
        if (b.count == 0) continue;
        total += (static_cast<double>(b.count) / n) * std::abs(b.accuracy() - b.mean_confidence());
    }
    return total;
}

double ece(const ProbMatrix& probs, std::span<const int> labels, int bin_count) {
    return ece(reliability_bins(probs, labels, bin_count));
}

double accuracy(const ProbMatrix& probs, std::span<const int> labels) {
    validate_probabilities(probs, labels);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < probs.rows(); ++r)
        if (static_cast<int>(argmax(probs.row(r), probs.cols())) == labels[r]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

double mean_confidence(const ProbMatrix& probs) {
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) total += probs(r, argmax(probs.row(r), probs.cols()));
    return total / static_cast<double>(probs.rows());
}

double nll(const ProbMatrix& probs, std::span<const int> labels) {
    validate_probabilities(probs, labels);
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r)
        total -= std::log(std::max(probs(r, static_cast<std::size_t>(labels[r])), kNllFloor));
    return total / static_cast<double>(probs.rows());
}

double brier(const ProbMatrix& probs, std::span<const int> labels) {
    validate_probabilities(probs, labels);
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const double* row = probs.row(r);
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            const double d = row[c] - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0);
            total += d * d;
        }
    }
    return total / static_cast<double>(probs.rows());
}

CalibrationMetrics evaluate_metrics(const ProbMatrix& probs, std::span<const int> labels, int bin_count) {
    return {ece(probs, labels, bin_count), accuracy(probs, labels), nll(probs, labels), brier(probs, labels)};
}

std::string metrics_json(const CalibrationMetrics& m) {
    nlohmann::ordered_json j;
    j["ece"] = m.ece;
    j["ece_percent"] = 100.0 * m.ece;
    j["accuracy"] = m.accuracy;
    j["nll"] = m.nll;
    j["brier"] = m.brier;
    return j.dump(2);
}

void save_metrics_json(const CalibrationMetrics& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << metrics_json(m) << '\n';
}

void save_reliability_csv(const ReliabilityBins& bins, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "bin_lower,bin_upper,count,mean_confidence,accuracy\n";
    for (const auto& b : bins.bins)
        out << format_double(b.lower) << ',' << format_double(b.upper) << ',' << b.count << ','
            << format_double(b.mean_confidence()) << ',' << format_double(b.accuracy()) << '\n';
}

void save_per_sample_csv(const ProbMatrix& probs, std::span<const int> labels, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "confidence,predicted,label,correct\n";
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const std::size_t k = argmax(probs.row(r), probs.cols());
        out << format_double(probs(r, k)) << ',' << k << ',' << labels[r] << ','
            << (static_cast<int>(k) == labels[r] ? 1 : 0) << '\n';
    }
}

}  // namespace bayescal
