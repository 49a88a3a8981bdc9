#include "bayescal/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "bayescal/kernels.hpp"
#include "bayescal/softmax.hpp"

namespace bayescal {

std::size_t MlpArchitecture::parameter_count() const {
    std::size_t total = 0;
    for (const auto& s : layer_layout(*this)) total += s.in * s.out + s.out;
    return total;
}

void MlpArchitecture::validate() const {
    require(input_dim >= 1, "architecture input_dim must be >= 1");
    require(output_dim >= 2, "architecture output_dim must be >= 2");
    require(hidden_layers == 0 || hidden_units >= 1, "hidden layers need at least one unit");
}

MlpArchitecture MlpArchitecture::parse(const std::string& hidden, std::size_t input_dim, std::size_t output_dim) {
    MlpArchitecture a;
    a.input_dim = input_dim;
    a.output_dim = output_dim;
    const auto x = hidden.find('x');
    try {
        if (x == std::string::npos) {
            a.hidden_layers = std::stoul(hidden);
            require(a.hidden_layers == 0, "hidden spec must be AxB, e.g. 1x25");
        } else {
            a.hidden_layers = std::stoul(hidden.substr(0, x));
            a.hidden_units = std::stoul(hidden.substr(x + 1));
        }
    } catch (const std::logic_error&) {
        throw ValidationError("cannot parse hidden spec '" + hidden + "'");
    }
    if (a.hidden_layers == 0) a.hidden_units = 0;
    a.validate();
    return a;
}

std::string MlpArchitecture::hidden_spec() const {
    if (hidden_layers == 0) return "0";
    return std::to_string(hidden_layers) + "x" + std::to_string(hidden_units);
}

std::vector<LayerSlice> layer_layout(const MlpArchitecture& arch) {
    std::vector<LayerSlice> out;
    std::size_t offset = 0;
    std::size_t in = arch.input_dim;
    for (std::size_t l = 0; l < arch.layer_count(); ++l) {
        const std::size_t o = (l + 1 == arch.layer_count()) ? arch.output_dim : arch.hidden_units;
        LayerSlice s{in, o, offset, offset + in * o};
        offset = s.bias_offset + o;
        out.push_back(s);
        in = o;
    }
    return out;
}

void PointWeights::validate() const {
    arch.validate();
    require(params.size() == arch.parameter_count(), "weight vector does not match the architecture");
}

PointWeights init_weights(const MlpArchitecture& arch, Rng& rng) {
    arch.validate();
    PointWeights w{arch, std::vector<double>(arch.parameter_count(), 0.0)};
    for (const auto& s : layer_layout(arch)) {
        const double std = std::sqrt(2.0 / static_cast<double>(s.in));
        for (std::size_t i = 0; i < s.in * s.out; ++i) w.params[s.weight_offset + i] = std * rng.normal();
    }
    return w;
}

namespace {

struct Activations {
    std::vector<Matrix> pre;   // pre[l]: n x out_l
    std::vector<Matrix> post;  // post[l]: ReLU(pre[l]) for hidden layers
};

const Matrix& layer_input(const Activations& act, const Matrix& inputs, std::size_t l) {
    return l == 0 ? inputs : act.post[l - 1];
}

void forward(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs, Activations& act) {
    require(inputs.cols() == arch.input_dim, "input width does not match the architecture");
    require(params.size() == arch.parameter_count(), "weight vector does not match the architecture");
    const auto& k = kernels::active();
    const auto layout = layer_layout(arch);
    const std::size_t n = inputs.rows();
    act.pre.resize(layout.size());
    act.post.resize(layout.size());
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const LayerSlice& s = layout[l];
        Matrix& a = act.pre[l];
        a.reshape_for_overwrite(n, s.out);
        const double* bias = params.data() + s.bias_offset;
        for (std::size_t r = 0; r < n; ++r) std::copy(bias, bias + s.out, a.row(r));
        k.gemm_nn(layer_input(act, inputs, l).data(), params.data() + s.weight_offset, a.data(), n, s.in, s.out);
        if (l + 1 < layout.size()) {
            Matrix& h = act.post[l];
            h.reshape_for_overwrite(n, s.out);
            const auto& src = a.values();
            auto& dst = h.values();
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(src[i], 0.0);
        }
    }
}

}  // namespace

Matrix mlp_logits(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs) {
    Activations act;
    forward(arch, params, inputs, act);
    return std::move(act.pre.back());
}

Matrix mlp_probs(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs) {
    Matrix out = mlp_logits(arch, params, inputs);
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r), out.cols());
    return out;
}

double mlp_loglik(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs,
                  std::span<const int> labels) {
    Matrix logits = mlp_logits(arch, params, inputs);
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        log_softmax_inplace(logits.row(r), logits.cols());
        total += logits(r, static_cast<std::size_t>(labels[r]));
    }
    return total;
}

double mlp_loglik_grad(const MlpArchitecture& arch, std::span<const double> params, const Matrix& inputs,
                       std::span<const int> labels, std::span<double> grad, Matrix* input_grad) {
    require(grad.size() == params.size(), "gradient buffer does not match the parameters");
    require(labels.size() == inputs.rows(), "labels and inputs disagree on the number of rows");
    // Buffers are reused across calls; HMC and training call this in a tight loop.
    thread_local Activations act;
    thread_local Matrix g, dh;
    forward(arch, params, inputs, act);
    const auto& k = kernels::active();
    const auto layout = layer_layout(arch);
    const std::size_t n = inputs.rows();

    // d loglik / d logits = onehot - softmax
    std::swap(g, act.pre.back());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double* row = g.row(r);
        const auto t = static_cast<std::size_t>(labels[r]);
        const double mx = *std::max_element(row, row + g.cols());
        const double shifted = row[t] - mx;
        double z = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) {
            row[c] = std::exp(row[c] - mx);
            z += row[c];
        }
        total += shifted - std::log(z);
        const double inv = 1.0 / z;
        for (std::size_t c = 0; c < g.cols(); ++c) row[c] *= -inv;
        row[t] += 1.0;
    }

    for (std::size_t l = layout.size(); l-- > 0;) {
        const LayerSlice& s = layout[l];
        const Matrix& h = layer_input(act, inputs, l);
        k.gemm_tn(h.data(), g.data(), grad.data() + s.weight_offset, n, s.in, s.out);
        double* gb = grad.data() + s.bias_offset;
        for (std::size_t r = 0; r < n; ++r) {
            const double* gr = g.row(r);
            for (std::size_t c = 0; c < s.out; ++c) gb[c] += gr[c];
        }
        if (l == 0 && input_grad == nullptr) break;
        dh.resize(n, s.in);
        k.gemm_nt(g.data(), params.data() + s.weight_offset, dh.data(), n, s.out, s.in);
        if (l == 0) {
            *input_grad = dh;
            break;
        }
        const Matrix& pre = act.pre[l - 1];
        for (std::size_t i = 0; i < dh.values().size(); ++i)
            if (pre.values()[i] <= 0.0) dh.values()[i] = 0.0;
        std::swap(g, dh);
    }
    return total;
}

}  // namespace bayescal
