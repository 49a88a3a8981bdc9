#pragma once

// Fixtures and independent reference computations shared by the tests.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "bayescal/data.hpp"
#include "bayescal/rng.hpp"
#include "bayescal/softmax.hpp"

namespace testing {

using namespace bayescal;

inline LogitDataset random_logits(std::size_t n, int c, std::uint64_t seed, double scale = 2.0) {
    Rng rng(seed);
    LogitDataset ds;
    ds.class_count = c;
    ds.inputs.resize(n, static_cast<std::size_t>(c));
    ds.labels.resize(n);
    for (double& v : ds.inputs.values()) v = scale * rng.normal();
    for (int& l : ds.labels) l = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c)));
    return ds;
}

inline FeatureDataset random_features(std::size_t n, std::size_t d, int c, std::uint64_t seed) {
    Rng rng(seed);
    FeatureDataset ds;
    ds.class_count = c;
    ds.inputs.resize(n, d);
    ds.labels.resize(n);
    for (double& v : ds.inputs.values()) v = rng.normal();
    for (int& l : ds.labels) l = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c)));
    return ds;
}

/// Random probability rows, some sharply peaked, some flat.
inline Matrix random_probs(std::size_t n, std::size_t c, Rng& rng) {
    Matrix p(n, c);
    for (std::size_t r = 0; r < n; ++r) {
        const double sharp = 0.2 + 6.0 * rng.uniform();
        for (std::size_t k = 0; k < c; ++k) p(r, k) = sharp * rng.normal();
        softmax_inplace(p.row(r), c);
    }
    return p;
}

inline std::vector<int> random_labels(std::size_t n, int c, Rng& rng) {
    std::vector<int> out(n);
    for (int& l : out) l = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c)));
    return out;
}

/// Max over coordinates of |a - n| / max(1, |a|, |n|), the usual mixed
/// relative/absolute gradient-check error.
inline double grad_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

/// Central differences of f around x with step h.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("bayescal_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Runs the command-line tool; returns its exit status.
inline int run_cli(const std::string& args, const std::filesystem::path& stderr_file = {}) {
    std::string cmd = std::string("\"") + BAYESCAL_CLI + "\" " + args + " > /dev/null";
    cmd += stderr_file.empty() ? " 2>/dev/null" : " 2>\"" + stderr_file.string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing
