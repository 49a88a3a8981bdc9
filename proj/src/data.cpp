#include "bayescal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "bayescal/metrics.hpp"
#include "bayescal/rng.hpp"

namespace bayescal {

namespace {

std::string row_msg(std::size_t row, const std::string& what) {
    return "row " + std::to_string(row) + ": " + what;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

struct SplitCounts {
    std::size_t train, val, test;
};

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
    auto train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    auto val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n)));
    train = std::min(train, n);
    val = std::min(val, n - train);
    return {train, val, n - train - val};
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void LabeledData::validate() const {
    require(class_count >= 2, "class_count must be at least 2");
    require(!labels.empty(), "dataset is empty");
    require(inputs.rows() == labels.size(), "inputs and labels disagree on the number of rows");
    require(inputs.cols() >= 1, "dataset has no input columns");
    for (std::size_t r = 0; r < size(); ++r) {
        const double* row = inputs.row(r);
        for (std::size_t c = 0; c < dim(); ++c) {
            if (!std::isfinite(row[c]))
                throw ValidationError(row_msg(r + 1, "column " + std::to_string(c) + " is not finite"));
        }
        if (labels[r] < 0 || labels[r] >= class_count)
            throw ValidationError(row_msg(r + 1, "label " + std::to_string(labels[r]) + " out of range"));
    }
}

void LogitDataset::validate() const {
    LabeledData::validate();
    require(dim() == static_cast<std::size_t>(class_count),
            "logit dataset must have exactly class_count columns");
}

void SplitSpec::validate() const {
    for (double f : {train_fraction, val_fraction, test_fraction})
        require(f > 0.0 && f < 1.0, "split fractions must lie in (0, 1)");
    require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) <= 1e-9,
            "split fractions must sum to 1");
}

SplitIndices split_indices(const LabeledData& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.size();
    Rng rng(spec.seed);
    SplitIndices out;

    auto distribute = [&](std::vector<std::size_t>& pool) {
        shuffle(pool, rng);
        const SplitCounts k = split_counts(pool.size(), spec);
        out.train.insert(out.train.end(), pool.begin(), pool.begin() + k.train);
        out.val.insert(out.val.end(), pool.begin() + k.train, pool.begin() + k.train + k.val);
        out.test.insert(out.test.end(), pool.begin() + k.train + k.val, pool.end());
    };

    if (spec.stratified) {
        std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
        for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (by_class[c].empty()) continue;
            if (by_class[c].size() < 3)
                throw ValidationError("stratified split impossible: class " + std::to_string(c) +
                                      " has fewer than 3 samples");
            distribute(by_class[c]);
        }
    } else {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        distribute(all);
    }

    if (out.train.empty() || out.val.empty() || out.test.empty())
        throw ValidationError("split leaves an empty partition for N=" + std::to_string(n));
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// ---------------------------------------------------------------------------

LogitDataset parse_csv(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty file");
    const auto header = split_fields(trim(line));
    require(header.size() >= 3, "header must list at least two logit columns and a label");
    const std::size_t classes = header.size() - 1;
    for (std::size_t c = 0; c < classes; ++c)
        require(trim(header[c]) == "logit_" + std::to_string(c),
                "header column " + std::to_string(c) + " must be logit_" + std::to_string(c));
    require(trim(header.back()) == "label", "last header column must be label");

    LogitDataset ds;
    ds.name = name;
    ds.class_count = static_cast<int>(classes);
    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        ++row;
        const auto fields = split_fields(view);
        if (fields.size() != classes + 1)
            throw ValidationError(row_msg(row, "expected " + std::to_string(classes + 1) + " columns, got " +
                                                   std::to_string(fields.size())));
        for (std::size_t c = 0; c < classes; ++c) {
            const std::string_view f = trim(fields[c]);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size())
                throw ValidationError(row_msg(row, "column logit_" + std::to_string(c) + " is not a number"));
            if (!std::isfinite(v))
                throw ValidationError(row_msg(row, "column logit_" + std::to_string(c) + " is not finite"));
            values.push_back(v);
        }
        const std::string_view lf = trim(fields.back());
        int label = 0;
        auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc() || ptr != lf.data() + lf.size())
            throw ValidationError(row_msg(row, "label is not an integer"));
        if (label < 0 || label >= ds.class_count)
            throw ValidationError(row_msg(row, "label " + std::to_string(label) + " out of range"));
        ds.labels.push_back(label);
    }
    if (row == 0) throw ValidationError("file has no data rows");
    ds.inputs.resize(row, classes);
    std::copy(values.begin(), values.end(), ds.inputs.data());
    return ds;
}

LogitDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return parse_csv(in, path.stem().string());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_csv(std::ostream& out, const LogitDataset& ds) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out << "logit_" << c << ',';
    out << "label\n";
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const double* row = ds.inputs.row(r);
        for (std::size_t c = 0; c < ds.dim(); ++c) out << format_double(row[c]) << ',';
        out << ds.labels[r] << '\n';
    }
}

void save_csv(const LogitDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    write_csv(out, ds);
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    Manifest m;
    try {
        std::filesystem::path csv = j.at("csv").get<std::string>();
        m.csv = csv.is_absolute() ? csv : path.parent_path() / csv;
        m.class_count = j.at("class_count").get<int>();
        const auto& s = j.at("splits");
        m.splits.train = s.at("train").get<std::vector<std::size_t>>();
        m.splits.val = s.value("val", std::vector<std::size_t>{});
        m.splits.test = s.value("test", std::vector<std::size_t>{});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": malformed manifest: " + e.what());
    }
    return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["csv"] = m.csv.string();
    j["class_count"] = m.class_count;
    j["splits"]["train"] = m.splits.train;
    j["splits"]["val"] = m.splits.val;
    j["splits"]["test"] = m.splits.test;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

LogitDataset load_dataset(const std::filesystem::path& path, DataFormat format) {
    if (format == DataFormat::csv) return load_csv(path);
    const Manifest m = load_manifest(path);
    LogitDataset ds = load_csv(m.csv);
    require(ds.class_count == m.class_count, "manifest class_count disagrees with the CSV header");
    for (const auto* part : {&m.splits.train, &m.splits.val, &m.splits.test})
        for (std::size_t i : *part) require(i < ds.size(), "manifest index out of range");
    return ds;
}

// ---------------------------------------------------------------------------

void ToyConfig::validate() const {
    require(class_count == 4, "toy generator has exactly 4 classes");
    require(samples_per_class >= 1, "samples_per_class must be >= 1");
    for (double s : cluster_spread) require(s > 0.0, "cluster spread must be positive");
}

FeatureDataset generate_toy(const ToyConfig& cfg) {
    cfg.validate();
    auto centers = cfg.cluster_centers;
    centers[3][1] -= cfg.overlap_offset;

    const std::size_t per = static_cast<std::size_t>(cfg.samples_per_class);
    FeatureDataset ds;
    ds.name = "toy";
    ds.class_count = 4;
    ds.inputs.resize(4 * per, 2);
    ds.labels.resize(4 * per);
    Rng rng(cfg.seed);
    // Classes interleave so that any prefix of the dataset is roughly balanced.
    for (std::size_t i = 0; i < per; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            const std::size_t r = 4 * i + c;
            ds.inputs(r, 0) = rng.normal(centers[c][0], cfg.cluster_spread[c]);
            ds.inputs(r, 1) = rng.normal(centers[c][1], cfg.cluster_spread[c]);
            ds.labels[r] = static_cast<int>(c);
        }
    }
    return ds;
}

SynthDraw synth_draw(std::size_t n, int class_count, double scale, std::uint64_t seed) {
    require(scale > 0.0, "scale must be positive");
    require(class_count >= 2, "class_count must be at least 2");
    require(n >= 1, "n must be at least 1");
    constexpr double kTrueLogitStd = 2.0;
    const auto C = static_cast<std::size_t>(class_count);

    SynthDraw out;
    out.true_logits.resize(n, C);
    out.observed.class_count = class_count;
    out.observed.name = "synth";
    out.observed.inputs.resize(n, C);
    out.observed.labels.resize(n);

    Rng rng(seed);
    std::vector<double> p(C);
    for (std::size_t r = 0; r < n; ++r) {
        double* z = out.true_logits.row(r);
        for (std::size_t c = 0; c < C; ++c) z[c] = kTrueLogitStd * rng.normal();
        const double zmax = *std::max_element(z, z + C);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) total += (p[c] = std::exp(z[c] - zmax));
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t label = C - 1;
        for (std::size_t c = 0; c < C; ++c) {
            acc += p[c];
            if (u < acc) {
                label = c;
                break;
            }
        }
        out.observed.labels[r] = static_cast<int>(label);
        for (std::size_t c = 0; c < C; ++c) out.observed.inputs(r, c) = scale * z[c];
    }
    return out;
}

LogitDataset synth_miscalibrated(std::size_t n, int class_count, double scale, std::uint64_t seed) {
    return synth_draw(n, class_count, scale, seed).observed;
}

// ---------------------------------------------------------------------------

double ConfidenceGrid::x(int j) const {
    return bounds.xmin + (bounds.xmax - bounds.xmin) * j / (resolution - 1);
}

double ConfidenceGrid::y(int i) const {
    return bounds.ymin + (bounds.ymax - bounds.ymin) * i / (resolution - 1);
}

ConfidenceGrid confidence_grid(const Predictor& predictor, const GridBounds& bounds, int resolution) {
    require(bounds.xmin < bounds.xmax && bounds.ymin < bounds.ymax, "grid bounds must be well ordered");
    require(resolution >= 2, "grid resolution must be >= 2");
    ConfidenceGrid grid;
    grid.bounds = bounds;
    grid.resolution = resolution;
    const auto G = static_cast<std::size_t>(resolution);
    Matrix points(G * G, 2);
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            const std::size_t r = static_cast<std::size_t>(i) * G + static_cast<std::size_t>(j);
            points(r, 0) = grid.x(j);
            points(r, 1) = grid.y(i);
        }
    const Matrix probs = predictor(points);
    require(probs.rows() == G * G, "predictor returned the wrong number of rows");
    validate_probabilities(probs);
    grid.predicted.resize(G * G);
    grid.confidence.resize(G * G);
    for (std::size_t r = 0; r < G * G; ++r) {
        const std::size_t k = argmax(probs.row(r), probs.cols());
        grid.predicted[r] = static_cast<int>(k);
        grid.confidence[r] = probs(r, k);
    }
    return grid;
}

void save_grid_csv(const ConfidenceGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "x,y,predicted,confidence\n";
    const auto G = static_cast<std::size_t>(grid.resolution);
    for (int i = 0; i < grid.resolution; ++i)
        for (int j = 0; j < grid.resolution; ++j) {
            const std::size_t r = static_cast<std::size_t>(i) * G + static_cast<std::size_t>(j);
            out << format_double(grid.x(j)) << ',' << format_double(grid.y(i)) << ',' << grid.predicted[r]
                << ',' << format_double(grid.confidence[r]) << '\n';
        }
}

}  // namespace bayescal
