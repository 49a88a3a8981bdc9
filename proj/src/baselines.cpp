#include "bayescal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bayescal/rng.hpp"

namespace bayescal {

double temperature_nll(const LogitDataset& ds, double temperature) {
    const double inv = 1.0 / temperature;
    const std::size_t C = ds.dim();
    std::vector<double> z(C);
    double total = 0.0;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const double* row = ds.inputs.row(r);
        for (std::size_t c = 0; c < C; ++c) z[c] = row[c] * inv;
        log_softmax_inplace(z.data(), C);
        total -= z[static_cast<std::size_t>(ds.labels[r])];
    }
    return total / static_cast<double>(ds.size());
}

Temperature fit_temperature(const LogitDataset& val) {
    val.validate();
    if (std::all_of(val.labels.begin(), val.labels.end(), [&](int l) { return l == val.labels.front(); }))
        log_warning("fit_temperature: validation set contains a single class");

    auto f = [&](double log_t) { return temperature_nll(val, std::exp(log_t)); };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = kLogTemperatureMin, b = kLogTemperatureMax;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > kLogTemperatureTolerance) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double best = fc <= fd ? c : d;
    double best_nll = std::min(fc, fd);
    for (double edge : {kLogTemperatureMin, kLogTemperatureMax}) {
        const double fe = f(edge);
        if (fe < best_nll) best = edge, best_nll = fe;
    }
    if (!(best_nll <= f(0.0))) best = 0.0;
    return {std::exp(best)};
}

ProbMatrix apply_temperature(const LogitDataset& ds, Temperature t) {
    require(t.value > 0.0 && std::isfinite(t.value), "temperature must be positive");
    Matrix out = ds.inputs;
    const double inv = 1.0 / t.value;
    for (double& v : out.values()) v *= inv;
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r), out.cols());
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double log_prior_penalty(std::span<const double> w, std::optional<double> prior_variance, std::span<double> grad) {
    if (!prior_variance) return 0.0;
    const double inv = 1.0 / *prior_variance;
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        sq += w[i] * w[i];
        if (!grad.empty()) grad[i] += w[i] * inv;
    }
    return 0.5 * sq * inv;
}

void check_input_shape(const MlpArchitecture& arch, const LabeledData& ds) {
    require(ds.dim() == arch.input_dim, "dataset width does not match the architecture input");
    require(static_cast<std::size_t>(ds.class_count) == arch.output_dim,
            "dataset class count does not match the architecture output");
}

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

void gather(const LabeledData& ds, std::span<const std::size_t> idx, Batch& b) {
    b.inputs.resize(idx.size(), ds.dim());
    b.labels.resize(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = ds.inputs.row(idx[r]);
        std::copy(src, src + ds.dim(), b.inputs.row(r));
        b.labels[r] = ds.labels[idx[r]];
    }
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

MapTrainResult train_point(const LabeledData& ds, const MlpArchitecture& arch, std::optional<double> prior_variance,
                           const OptimConfig& optim, std::span<const double> adversarial_radius) {
    ds.validate();
    arch.validate();
    optim.validate();
    check_input_shape(arch, ds);
    if (prior_variance) require(*prior_variance > 0.0, "prior variance must be positive");

    Rng init_rng(derive_seed(optim.seed, 0));
    Rng batch_rng(derive_seed(optim.seed, 1));
    MapTrainResult out{init_weights(arch, init_rng), {}};
    std::vector<double>& w = out.weights.params;
    std::vector<double> grad(w.size());
    Adam adam(w.size());

    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Batch batch;
    Matrix input_grad;
    const bool adversarial = !adversarial_radius.empty();

    for (std::size_t epoch = 0; epoch < optim.epochs; ++epoch) {
        shuffle(order, batch_rng);
        const double lr = scheduled_rate(optim.learning_rate, optim.schedule, epoch, optim.epochs);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += optim.batch_size) {
            const std::size_t len = std::min(optim.batch_size, order.size() - start);
            gather(ds, std::span(order).subspan(start, len), batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            double loglik;
            std::size_t rows = len;
            if (adversarial) {
                // Perturb along the sign of the loss gradient w.r.t. the inputs.
                std::vector<double> scratch(w.size(), 0.0);
                mlp_loglik_grad(arch, w, batch.inputs, batch.labels, scratch, &input_grad);
                Batch both;
                both.inputs.resize(2 * len, ds.dim());
                both.labels.resize(2 * len);
                std::copy(batch.inputs.values().begin(), batch.inputs.values().end(), both.inputs.data());
                for (std::size_t r = 0; r < len; ++r) {
                    for (std::size_t c = 0; c < ds.dim(); ++c) {
                        const double g = input_grad(r, c);
                        const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
                        both.inputs(len + r, c) = batch.inputs(r, c) - adversarial_radius[c] * sign;
                    }
                    both.labels[r] = both.labels[len + r] = batch.labels[r];
                }
                rows = 2 * len;
                loglik = mlp_loglik_grad(arch, w, both.inputs, both.labels, grad);
            } else {
                loglik = mlp_loglik_grad(arch, w, batch.inputs, batch.labels, grad);
            }
            const double scale = -1.0 / static_cast<double>(rows);
            for (double& g : grad) g *= scale;
            const double loss = -loglik / static_cast<double>(rows) + log_prior_penalty(w, prior_variance, grad);
            if (!std::isfinite(loss))
                throw NumericalError("MAP training diverged at epoch " + std::to_string(epoch) +
                                     " (loss " + format_double(loss) + ", lr " + format_double(lr) + ")");
            adam.step(w, grad, lr);
            loss_sum += loss;
            ++batches;
        }
        out.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return out;
}

}  // namespace

double map_loss(const PointWeights& w, const LabeledData& ds, std::optional<double> prior_variance,
                std::vector<double>* grad) {
    w.validate();
    check_input_shape(w.arch, ds);
    const double n = static_cast<double>(ds.size());
    if (grad == nullptr) {
        return -mlp_loglik(w.arch, w.params, ds.inputs, ds.labels) / n +
               log_prior_penalty(w.params, prior_variance, {});
    }
    grad->assign(w.params.size(), 0.0);
    const double loglik = mlp_loglik_grad(w.arch, w.params, ds.inputs, ds.labels, *grad);
    for (double& g : *grad) g *= -1.0 / n;
    return -loglik / n + log_prior_penalty(w.params, prior_variance, *grad);
}

MapTrainResult train_map(const LabeledData& ds, const MlpArchitecture& arch, std::optional<double> prior_variance,
                         const OptimConfig& optim) {
    return train_point(ds, arch, prior_variance, optim, {});
}

ProbMatrix predict_point(const PointWeights& w, const LabeledData& ds) {
    w.validate();
    require(ds.dim() == w.arch.input_dim, "dataset width does not match the architecture input");
    return mlp_probs(w.arch, w.params, ds.inputs);
}

void Ensemble::validate() const {
    require(!members.empty(), "ensemble has no members");
    for (const auto& m : members) {
        m.validate();
        require(m.arch == members.front().arch, "ensemble members have different architectures");
    }
}

Ensemble train_ensemble(const LabeledData& ds, const MlpArchitecture& arch, std::size_t member_count,
                        const OptimConfig& optim, double adversarial_eps, std::optional<double> prior_variance) {
    require(member_count >= 1, "ensemble needs at least one member");
    require(adversarial_eps >= 0.0, "adversarial eps must be nonnegative");
    ds.validate();
    std::vector<double> radius;
    if (adversarial_eps > 0.0) {
        radius.assign(ds.dim(), 0.0);
        for (std::size_t c = 0; c < ds.dim(); ++c) {
            double lo = ds.inputs(0, c), hi = lo;
            for (std::size_t r = 1; r < ds.size(); ++r) {
                lo = std::min(lo, ds.inputs(r, c));
                hi = std::max(hi, ds.inputs(r, c));
            }
            radius[c] = adversarial_eps * (hi - lo);
        }
    }
    Ensemble e;
    for (std::size_t m = 0; m < member_count; ++m) {
        OptimConfig member = optim;
        member.seed = m == 0 ? optim.seed : derive_seed(optim.seed, m);
        e.members.push_back(train_point(ds, arch, prior_variance, member, radius).weights);
    }
    return e;
}

ProbMatrix predict_ensemble(const Ensemble& e, const LabeledData& ds) {
    e.validate();
    ProbMatrix sum;
    for (const auto& m : e.members) {
        ProbMatrix p = predict_point(m, ds);
        if (sum.empty()) {
            sum = std::move(p);
            continue;
        }
        for (std::size_t i = 0; i < p.values().size(); ++i) sum.values()[i] += p.values()[i];
    }
    const double inv = 1.0 / static_cast<double>(e.members.size());
    for (double& v : sum.values()) v *= inv;
    return sum;
}

}  // namespace bayescal
