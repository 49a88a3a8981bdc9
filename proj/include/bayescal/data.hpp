#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bayescal/common.hpp"

namespace bayescal {

/// Rows of real inputs with integer class labels in [0, class_count).
struct LabeledData {
    Matrix inputs;
    std::vector<int> labels;
    int class_count = 0;
    std::string name;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }

    /// Throws ValidationError naming the first offending row (1-based).
    void validate() const;
};

/// Pre-softmax scores exported by an upstream classifier: dim() == class_count.
struct LogitDataset : LabeledData {
    void validate() const;
};

/// Low-dimensional raw inputs (the 2-D toy problem).
struct FeatureDataset : LabeledData {};

template <class D>
D subset(const D& ds, std::span<const std::size_t> idx) {
    D out;
    out.class_count = ds.class_count;
    out.name = ds.name;
    out.inputs.resize(idx.size(), ds.dim());
    out.labels.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = ds.inputs.row(idx[r]);
        std::copy(src, src + ds.dim(), out.inputs.row(r));
        out.labels[r] = ds.labels[idx[r]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
    bool stratified = false;

    void validate() const;
};

/// Sorted, disjoint index sets whose union is 0..N-1.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

template <class D>
struct Split {
    D train;
    D val;
    D test;
};

SplitIndices split_indices(const LabeledData& ds, const SplitSpec& spec);

template <class D>
Split<D> split(const D& ds, const SplitSpec& spec) {
    const SplitIndices idx = split_indices(ds, spec);
    return {subset(ds, idx.train), subset(ds, idx.val), subset(ds, idx.test)};
}

// ---------------------------------------------------------------------------
// Interchange formats

enum class DataFormat { csv, manifest };

/// Header `logit_0,...,logit_{C-1},label`, one sample per row.
LogitDataset parse_csv(std::istream& in, const std::string& name = "");
LogitDataset load_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const LogitDataset& ds);
void save_csv(const LogitDataset& ds, const std::filesystem::path& path);

struct Manifest {
    std::filesystem::path csv;  // resolved relative to the manifest's directory
    int class_count = 0;
    SplitIndices splits;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// For a manifest, returns the full dataset the manifest points at.
LogitDataset load_dataset(const std::filesystem::path& path, DataFormat format);

// ---------------------------------------------------------------------------
// Generators

struct ToyConfig {
    int class_count = 4;
    int samples_per_class = 1000;
    std::array<std::array<double, 2>, 4> cluster_centers{{{-2.0, -2.0}, {-2.0, 2.0}, {2.0, -2.0}, {2.0, 2.0}}};
    std::array<double, 4> cluster_spread{0.8, 0.8, 0.8, 0.8};
    /// Moves class 3 toward class 2 along the y axis so those two interleave.
    double overlap_offset = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

FeatureDataset generate_toy(const ToyConfig& cfg);

struct SynthDraw {
    LogitDataset observed;  // true logits multiplied by scale
    Matrix true_logits;
};

/// True logits are i.i.d. N(0, 2^2); labels are drawn from softmax(true logits);
/// the stored logits are scale * true logits, so the ideal temperature is scale.
SynthDraw synth_draw(std::size_t n, int class_count, double scale, std::uint64_t seed);
LogitDataset synth_miscalibrated(std::size_t n, int class_count, double scale, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Confidence maps

struct GridBounds {
    double xmin, xmax, ymin, ymax;
};

/// Row-major: cell (i, j) sits at x = xmin + j*dx, y = ymin + i*dy.
struct ConfidenceGrid {
    GridBounds bounds{};
    int resolution = 0;
    std::vector<int> predicted;
    std::vector<double> confidence;

    double x(int j) const;
    double y(int i) const;
};

using Predictor = std::function<Matrix(const Matrix& points)>;

ConfidenceGrid confidence_grid(const Predictor& predictor, const GridBounds& bounds, int resolution);

/// CSV `x,y,predicted,confidence`.
void save_grid_csv(const ConfidenceGrid& grid, const std::filesystem::path& path);

}  // namespace bayescal
