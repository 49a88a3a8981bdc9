#include "bayescal/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "bayescal/kernels.hpp"
#include "bayescal/softmax.hpp"

namespace bayescal {

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

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

void check_inputs(const VariationalParams& vp, const Matrix& inputs) {
    vp.validate();
    require(inputs.cols() == vp.arch.input_dim, "input width does not match the architecture");
}

/// One local-reparameterization pass. Keeps what the backward pass needs.
struct LocalPass {
    std::vector<Matrix> pre;    // sampled pre-activations per layer
    std::vector<Matrix> noise;  // eps per layer
    std::vector<Matrix> stddev; // sqrt of the pre-activation variance
    std::vector<Matrix> post;   // ReLU outputs of hidden layers
};

LocalPass local_forward(const VariationalParams& vp, std::span<const double> var, const Matrix& inputs, Rng& rng) {
    const auto& k = kernels::active();
    const auto layout = layer_layout(vp.arch);
    const std::size_t n = inputs.rows();
    LocalPass p;
    p.pre.resize(layout.size());
    p.noise.resize(layout.size());
    p.stddev.resize(layout.size());
    p.post.resize(layout.size());
    Matrix sq;
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const LayerSlice& s = layout[l];
        const Matrix& h = l == 0 ? inputs : p.post[l - 1];
        sq = h;
        for (double& v : sq.values()) v *= v;

        Matrix mean(n, s.out), variance(n, s.out);
        const double* mb = vp.mu.data() + s.bias_offset;
        const double* vb = var.data() + s.bias_offset;
        for (std::size_t r = 0; r < n; ++r) {
            std::copy(mb, mb + s.out, mean.row(r));
            std::copy(vb, vb + s.out, variance.row(r));
        }
        k.gemm_nn(h.data(), vp.mu.data() + s.weight_offset, mean.data(), n, s.in, s.out);
        k.gemm_nn(sq.data(), var.data() + s.weight_offset, variance.data(), n, s.in, s.out);

        Matrix& eps = p.noise[l];
        Matrix& sd = p.stddev[l];
        eps.resize(n, s.out);
        sd.resize(n, s.out);
        for (std::size_t i = 0; i < mean.values().size(); ++i) {
            eps.values()[i] = rng.normal();
            sd.values()[i] = std::sqrt(std::max(variance.values()[i], 0.0));
            mean.values()[i] += sd.values()[i] * eps.values()[i];
        }
        p.pre[l] = std::move(mean);
        if (l + 1 < layout.size()) {
            p.post[l] = p.pre[l];
            for (double& v : p.post[l].values()) v = std::max(v, 0.0);
        }
    }
    return p;
}

/// Log-softmax the output layer in place; returns sum of label log-probs and
/// turns the matrix into d loglik / d logits when `to_gradient` is set.
double output_loglik(Matrix& logits, std::span<const int> labels, bool to_gradient, std::size_t* correct) {
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        double* row = logits.row(r);
        const auto t = static_cast<std::size_t>(labels[r]);
        if (correct && argmax(row, logits.cols()) == t) ++*correct;
        log_softmax_inplace(row, logits.cols());
        total += row[t];
        if (to_gradient) {
            for (std::size_t c = 0; c < logits.cols(); ++c) row[c] = -std::exp(row[c]);
            row[t] += 1.0;
        }
    }
    return total;
}

/// Accumulates d loglik / d mu and d loglik / d var for one local pass whose
/// output layer already holds d loglik / d logits.
void local_backward(const VariationalParams& vp, std::span<const double> var, const Matrix& inputs, LocalPass& p,
                    std::span<double> grad_mu, std::span<double> grad_var) {
    const auto& k = kernels::active();
    const auto layout = layer_layout(vp.arch);
    const std::size_t n = inputs.rows();
    Matrix g = std::move(p.pre.back());
    Matrix gv, sq;
    for (std::size_t l = layout.size(); l-- > 0;) {
        const LayerSlice& s = layout[l];
        const Matrix& h = l == 0 ? inputs : p.post[l - 1];
        sq = h;
        for (double& v : sq.values()) v *= v;

        gv.resize(n, s.out);
        for (std::size_t i = 0; i < g.values().size(); ++i) {
            const double sd = p.stddev[l].values()[i];
            gv.values()[i] = sd > 0.0 ? g.values()[i] * p.noise[l].values()[i] / (2.0 * sd) : 0.0;
        }
        k.gemm_tn(h.data(), g.data(), grad_mu.data() + s.weight_offset, n, s.in, s.out);
        k.gemm_tn(sq.data(), gv.data(), grad_var.data() + s.weight_offset, n, s.in, s.out);
        double* gmb = grad_mu.data() + s.bias_offset;
        double* gvb = grad_var.data() + s.bias_offset;
        for (std::size_t r = 0; r < n; ++r) {
            const double* gr = g.row(r);
            const double* gvr = gv.row(r);
            for (std::size_t c = 0; c < s.out; ++c) {
                gmb[c] += gr[c];
                gvb[c] += gvr[c];
            }
        }
        if (l == 0) break;

        // dH = g mu_W^T + 2 H * (gv var_W^T), then through the ReLU.
        Matrix dh(n, s.in), dv(n, s.in);
        k.gemm_nt(g.data(), vp.mu.data() + s.weight_offset, dh.data(), n, s.out, s.in);
        k.gemm_nt(gv.data(), var.data() + s.weight_offset, dv.data(), n, s.out, s.in);
        const Matrix& pre = p.pre[l - 1];
        for (std::size_t i = 0; i < dh.values().size(); ++i) {
            const double hv = h.values()[i];
            dh.values()[i] = pre.values()[i] > 0.0 ? dh.values()[i] + 2.0 * hv * dv.values()[i] : 0.0;
        }
        g = std::move(dh);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

void VariationalParams::validate() const {
    arch.validate();
    const std::size_t p = arch.parameter_count();
    require(mu.size() == p && rho.size() == p, "variational parameters do not match the architecture");
}

std::vector<double> VariationalParams::sigma() const {
    std::vector<double> s(rho.size());
    std::transform(rho.begin(), rho.end(), s.begin(), softplus);
    return s;
}

Estimator parse_estimator(const std::string& s) {
    if (s == "mfvi" || s == "bnn-mfvi") return Estimator::mfvi;
    if (s == "mfvilr" || s == "bnn-mfvilr") return Estimator::mfvilr;
    throw ValidationError("unknown estimator '" + s + "'");
}

std::string to_string(Estimator e) { return e == Estimator::mfvi ? "mfvi" : "mfvilr"; }

void BnnTrainConfig::validate() const {
    arch.validate();
    require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
    require(elbo_samples >= 1, "elbo_samples must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(learning_rate > 0.0, "learning rate must be positive");
    require(prior_variance > 0.0, "prior variance must be positive");
}

VariationalParams init_variational(const MlpArchitecture& arch, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0));
    PointWeights w = init_weights(arch, rng);
    VariationalParams vp{arch, std::move(w.params), {}};
    vp.rho.assign(vp.mu.size(), inverse_softplus(kInitialSigma));
    return vp;
}

double kl_to_prior(const VariationalParams& vp, double prior_variance, std::vector<double>* grad_mu,
                   std::vector<double>* grad_rho) {
    vp.validate();
    require(prior_variance > 0.0, "prior variance must be positive");
    const double inv_v = 1.0 / prior_variance;
    double total = 0.0;
    for (std::size_t i = 0; i < vp.mu.size(); ++i) {
        const double sigma = softplus(vp.rho[i]);
        const double s2 = sigma * sigma;
        total += 0.5 * (s2 * inv_v + vp.mu[i] * vp.mu[i] * inv_v - 1.0 - std::log(s2 * inv_v));
        if (grad_mu) (*grad_mu)[i] += vp.mu[i] * inv_v;
        if (grad_rho) (*grad_rho)[i] += (sigma * inv_v - 1.0 / sigma) * sigmoid(vp.rho[i]);
    }
    return total;
}

double kl_to_standard_normal(const VariationalParams& vp) { return kl_to_prior(vp, 1.0); }

WeightSample sample_weights(const VariationalParams& vp, Rng& rng) {
    vp.validate();
    WeightSample w{vp.arch, std::vector<double>(vp.mu.size())};
    for (std::size_t i = 0; i < vp.mu.size(); ++i) w.params[i] = vp.mu[i] + softplus(vp.rho[i]) * rng.normal();
    return w;
}

Matrix forward_mfvi(const VariationalParams& vp, const Matrix& inputs, Rng& rng) {
    check_inputs(vp, inputs);
    const WeightSample w = sample_weights(vp, rng);
    Matrix out = mlp_logits(w.arch, w.params, inputs);
    for (std::size_t r = 0; r < out.rows(); ++r) log_softmax_inplace(out.row(r), out.cols());
    return out;
}

Matrix forward_mfvilr(const VariationalParams& vp, const Matrix& inputs, Rng& rng) {
    check_inputs(vp, inputs);
    std::vector<double> var = vp.sigma();
    for (double& v : var) v *= v;
    LocalPass p = local_forward(vp, var, inputs, rng);
    Matrix out = std::move(p.pre.back());
    for (std::size_t r = 0; r < out.rows(); ++r) log_softmax_inplace(out.row(r), out.cols());
    return out;
}

ElboEstimate elbo(const VariationalParams& vp, const Matrix& inputs, std::span<const int> labels,
                  std::size_t mc_samples, double beta, std::size_t dataset_size, Estimator estimator, Rng& rng,
                  ElboGradient* grad, double prior_variance) {
    check_inputs(vp, inputs);
    require(mc_samples >= 1, "ELBO needs at least one MC sample");
    require(beta > 0.0, "beta must be positive");
    require(dataset_size >= 1, "dataset size must be positive");
    require(labels.size() == inputs.rows() && !labels.empty(), "ELBO batch is empty or mislabeled");

    const std::size_t P = vp.mu.size();
    const double n = static_cast<double>(inputs.rows());
    const double scale = 1.0 / (static_cast<double>(mc_samples) * n);
    const std::vector<double> sigma = vp.sigma();

    ElboEstimate est;
    std::vector<double> g_mu, g_aux;  // g_aux: d/d theta-noise (mfvi) or d/d var (mfvilr)
    if (grad) {
        grad->mu.assign(P, 0.0);
        grad->rho.assign(P, 0.0);
        g_mu.resize(P);
        g_aux.resize(P);
    }

    if (estimator == Estimator::mfvi) {
        WeightSample theta{vp.arch, std::vector<double>(P)};
        std::vector<double> eps(P);
        for (std::size_t m = 0; m < mc_samples; ++m) {
            for (std::size_t i = 0; i < P; ++i) {
                eps[i] = rng.normal();
                theta.params[i] = vp.mu[i] + sigma[i] * eps[i];
            }
            Matrix logits;
            if (m == 0 || !grad) {
                logits = mlp_logits(vp.arch, theta.params, inputs);
                if (m == 0)
                    for (std::size_t r = 0; r < logits.rows(); ++r)
                        if (argmax(logits.row(r), logits.cols()) == static_cast<std::size_t>(labels[r]))
                            ++est.correct;
            }
            if (grad) {
                std::fill(g_mu.begin(), g_mu.end(), 0.0);
                est.loglik += mlp_loglik_grad(vp.arch, theta.params, inputs, labels, g_mu);
                for (std::size_t i = 0; i < P; ++i) {
                    grad->mu[i] += scale * g_mu[i];
                    grad->rho[i] += scale * g_mu[i] * eps[i] * sigmoid(vp.rho[i]);
                }
            } else {
                est.loglik += output_loglik(logits, labels, false, nullptr);
            }
        }
    } else {
        std::vector<double> var(P);
        for (std::size_t i = 0; i < P; ++i) var[i] = sigma[i] * sigma[i];
        for (std::size_t m = 0; m < mc_samples; ++m) {
            LocalPass p = local_forward(vp, var, inputs, rng);
            est.loglik += output_loglik(p.pre.back(), labels, grad != nullptr, m == 0 ? &est.correct : nullptr);
            if (grad) {
                std::fill(g_mu.begin(), g_mu.end(), 0.0);
                std::fill(g_aux.begin(), g_aux.end(), 0.0);
                local_backward(vp, var, inputs, p, g_mu, g_aux);
                for (std::size_t i = 0; i < P; ++i) {
                    grad->mu[i] += scale * g_mu[i];
                    grad->rho[i] += scale * g_aux[i] * 2.0 * sigma[i] * sigmoid(vp.rho[i]);
                }
            }
        }
    }
    est.loglik *= scale;

    const double kl_weight = beta / static_cast<double>(dataset_size);
    if (grad) {
        std::vector<double> kl_mu(P, 0.0), kl_rho(P, 0.0);
        est.kl = kl_to_prior(vp, prior_variance, &kl_mu, &kl_rho);
        for (std::size_t i = 0; i < P; ++i) {
            grad->mu[i] -= kl_weight * kl_mu[i];
            grad->rho[i] -= kl_weight * kl_rho[i];
        }
    } else {
        est.kl = kl_to_prior(vp, prior_variance);
    }
    est.objective = est.loglik - kl_weight * est.kl;
    if (!std::isfinite(est.objective))
        throw NumericalError("ELBO is not finite (loglik " + format_double(est.loglik) + ", kl " +
                             format_double(est.kl) + ")");
    return est;
}

BnnTrainResult train_bnn(const LabeledData& train, const BnnTrainConfig& cfg) {
    train.validate();
    cfg.validate();
    require(train.dim() == cfg.arch.input_dim, "dataset width does not match the architecture input");
    require(static_cast<std::size_t>(train.class_count) == cfg.arch.output_dim,
            "dataset class count does not match the architecture output");

    BnnTrainResult out{init_variational(cfg.arch, cfg.seed), {}, false};
    VariationalParams& vp = out.params;
    const std::size_t P = vp.mu.size();
    Rng batch_rng(derive_seed(cfg.seed, 1));
    Rng noise_rng(derive_seed(cfg.seed, 2));
    Adam adam_mu(P), adam_rho(P);
    ElboGradient grad;
    std::vector<double> descent(P);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Batch batch;
    const std::size_t warmup = (cfg.epochs + 9) / 10;
    const double degraded_below = 1.5 / static_cast<double>(train.class_count);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[batch_rng.uniform_index(i)]);
        const double lr = scheduled_rate(cfg.learning_rate, cfg.schedule, epoch, cfg.epochs);
        BnnEpochLog entry;
        entry.epoch = epoch + 1;
        entry.lr = lr;
        std::size_t batches = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - start);
            gather(train, std::span(order).subspan(start, len), batch);
            ElboEstimate est;
            try {
                est = elbo(vp, batch.inputs, batch.labels, cfg.elbo_samples, cfg.beta, train.size(), cfg.estimator,
                           noise_rng, &grad, cfg.prior_variance);
            } catch (const NumericalError& e) {
                throw NumericalError("BNN training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            for (std::size_t i = 0; i < P; ++i) descent[i] = -grad.mu[i];
            adam_mu.step(vp.mu, descent, lr);
            for (std::size_t i = 0; i < P; ++i) descent[i] = -grad.rho[i];
            adam_rho.step(vp.rho, descent, lr);
            entry.elbo += est.objective;
            entry.loglik += est.loglik;
            entry.kl += est.kl;
            correct += est.correct;
            ++batches;
        }
        entry.elbo /= static_cast<double>(batches);
        entry.loglik /= static_cast<double>(batches);
        entry.kl /= static_cast<double>(batches);
        entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        out.log.push_back(entry);
    }
    // judged on the returned parameters, once warmup is over
    out.degraded = cfg.epochs > warmup && out.log.back().train_accuracy < degraded_below;
    if (out.degraded) log_warning("BNN training degraded: train accuracy below 1.5/C after warmup");
    return out;
}

void save_train_log_csv(const std::vector<BnnEpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "epoch,elbo,loglik,kl,lr\n";
    for (const auto& e : log)
        out << e.epoch << ',' << format_double(e.elbo) << ',' << format_double(e.loglik) << ','
            << format_double(e.kl) << ',' << format_double(e.lr) << '\n';
}

namespace {

/// Calls `visit(k, sum)` after each of the first `count` predictive draws.
template <class Visit>
void accumulate_predictive(const VariationalParams& vp, const Matrix& inputs, std::size_t count, std::uint64_t seed,
                           Visit&& visit) {
    Matrix sum(inputs.rows(), vp.arch.output_dim);
    for (std::size_t k = 0; k < count; ++k) {
        Rng rng(derive_seed(seed, k));
        const WeightSample w = sample_weights(vp, rng);
        const Matrix p = mlp_probs(w.arch, w.params, inputs);
        for (std::size_t i = 0; i < p.values().size(); ++i) sum.values()[i] += p.values()[i];
        visit(k + 1, sum);
    }
}

Matrix mean_of(const Matrix& sum, std::size_t k) {
    Matrix out = sum;
    const double denom = static_cast<double>(k);
    for (double& v : out.values()) v /= denom;
    return out;
}

}  // namespace

ProbMatrix predict_bnn(const VariationalParams& vp, const Matrix& inputs, const PredictiveConfig& pc) {
    check_inputs(vp, inputs);
    require(pc.k >= 1, "predictive K must be >= 1");
    ProbMatrix out;
    accumulate_predictive(vp, inputs, pc.k, pc.seed, [&](std::size_t k, const Matrix& sum) {
        if (k == pc.k) out = mean_of(sum, k);
    });
    return out;
}

KSelection select_k(const VariationalParams& vp, const LabeledData& val, std::span<const std::size_t> k_grid,
                    std::uint64_t seed, int bin_count) {
    require(!k_grid.empty(), "K grid is empty");
    require(k_grid.front() >= 1, "K grid entries must be >= 1");
    for (std::size_t i = 1; i < k_grid.size(); ++i) require(k_grid[i] > k_grid[i - 1], "K grid must ascend");
    val.validate();
    check_inputs(vp, val.inputs);

    KSelection out;
    double best = 0.0;
    std::size_t next = 0;
    accumulate_predictive(vp, val.inputs, k_grid.back(), seed, [&](std::size_t k, const Matrix& sum) {
        if (k != k_grid[next]) return;
        const double e = ece(mean_of(sum, k), val.labels, bin_count);
        out.curve.emplace_back(k, e);
        if (next == 0 || e < best - kEceTieTolerance) {
            best = e;
            out.k = k;
        }
        ++next;
    });
    return out;
}

}  // namespace bayescal
