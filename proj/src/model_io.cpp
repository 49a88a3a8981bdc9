#include "bayescal/model_io.hpp"

#include <fstream>

namespace bayescal {

namespace {

using ojson = nlohmann::ordered_json;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

ojson arch_json(const MlpArchitecture& a) {
    ojson j;
    j["input_dim"] = a.input_dim;
    j["hidden_layers"] = a.hidden_layers;
    j["hidden_units"] = a.hidden_units;
    j["output_dim"] = a.output_dim;
    return j;
}

MlpArchitecture arch_from(const nlohmann::json& j) {
    MlpArchitecture a;
    a.input_dim = j.at("input_dim").get<std::size_t>();
    a.hidden_layers = j.at("hidden_layers").get<std::size_t>();
    a.hidden_units = j.at("hidden_units").get<std::size_t>();
    a.output_dim = j.at("output_dim").get<std::size_t>();
    a.validate();
    return a;
}

std::vector<double> slice(const std::vector<double>& v, std::size_t offset, std::size_t len) {
    return {v.begin() + static_cast<std::ptrdiff_t>(offset), v.begin() + static_cast<std::ptrdiff_t>(offset + len)};
}

void unslice(const nlohmann::json& j, const char* key, std::size_t len, std::vector<double>& dst, std::size_t offset) {
    const auto v = j.at(key).get<std::vector<double>>();
    require(v.size() == len, std::string("model array '") + key + "' has the wrong length");
    std::copy(v.begin(), v.end(), dst.begin() + static_cast<std::ptrdiff_t>(offset));
}

ojson weights_json(const PointWeights& w) {
    ojson layers = ojson::array();
    for (const auto& s : layer_layout(w.arch)) {
        ojson l;
        l["in"] = s.in;
        l["out"] = s.out;
        l["weight"] = slice(w.params, s.weight_offset, s.in * s.out);
        l["bias"] = slice(w.params, s.bias_offset, s.out);
        layers.push_back(std::move(l));
    }
    return layers;
}

PointWeights weights_from(const MlpArchitecture& arch, const nlohmann::json& layers) {
    PointWeights w{arch, std::vector<double>(arch.parameter_count())};
    const auto layout = layer_layout(arch);
    require(layers.size() == layout.size(), "model has the wrong number of layers");
    for (std::size_t l = 0; l < layout.size(); ++l) {
        unslice(layers[l], "weight", layout[l].in * layout[l].out, w.params, layout[l].weight_offset);
        unslice(layers[l], "bias", layout[l].out, w.params, layout[l].bias_offset);
    }
    return w;
}

ojson bnn_config_json(const BnnTrainConfig& c) {
    ojson j;
    j["hidden"] = c.arch.hidden_spec();
    j["beta"] = c.beta;
    j["elbo_samples"] = c.elbo_samples;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.learning_rate;
    j["lr_schedule"] = to_string(c.schedule);
    j["estimator"] = to_string(c.estimator);
    j["prior_variance"] = c.prior_variance;
    j["seed"] = c.seed;
    return j;
}

BnnTrainConfig bnn_config_from(const MlpArchitecture& arch, const nlohmann::json& j) {
    BnnTrainConfig c;
    c.arch = arch;
    c.beta = j.at("beta").get<double>();
    c.elbo_samples = j.at("elbo_samples").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("lr").get<double>();
    c.schedule = parse_schedule(j.at("lr_schedule").get<std::string>());
    c.estimator = parse_estimator(j.at("estimator").get<std::string>());
    c.prior_variance = j.at("prior_variance").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

ojson hmc_config_json(const HmcConfig& c) {
    ojson j;
    j["step_size"] = c.step_size;
    j["leapfrog_steps"] = c.leapfrog_steps;
    j["num_samples"] = c.num_samples;
    j["burn_in"] = c.burn_in;
    j["thinning"] = c.thinning;
    j["prior_variance"] = c.prior_variance;
    j["seed"] = c.seed;
    j["adapt_step_size"] = c.adapt_step_size;
    return j;
}

HmcConfig hmc_config_from(const nlohmann::json& j) {
    HmcConfig c;
    c.step_size = j.at("step_size").get<double>();
    c.leapfrog_steps = j.at("leapfrog_steps").get<std::size_t>();
    c.num_samples = j.at("num_samples").get<std::size_t>();
    c.burn_in = j.at("burn_in").get<std::size_t>();
    c.thinning = j.at("thinning").get<std::size_t>();
    c.prior_variance = j.at("prior_variance").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.adapt_step_size = j.at("adapt_step_size").get<bool>();
    return c;
}

}  // namespace

std::string CalibrationModel::method() const {
    return std::visit(overloaded{
                          [](const UncalibratedModel&) -> std::string { return "uncalibrated"; },
                          [](const TemperatureModel&) -> std::string { return "ts"; },
                          [](const PointModel&) -> std::string { return "map"; },
                          [](const EnsembleModel&) -> std::string { return "ensemble"; },
                          [](const BnnModel& b) -> std::string { return "bnn-" + to_string(b.config.estimator); },
                          [](const HmcModel&) -> std::string { return "hmc"; },
                      },
                      body);
}

ojson model_to_json(const CalibrationModel& m) {
    ojson j;
    j["format_version"] = kModelFormatVersion;
    j["method"] = m.method();
    j["class_count"] = m.class_count;
    std::visit(overloaded{
                   [](const UncalibratedModel&) {},
                   [&](const TemperatureModel& t) { j["temperature"] = t.temperature.value; },
                   [&](const PointModel& p) {
                       j["architecture"] = arch_json(p.weights.arch);
                       j["prior_variance"] = p.prior_variance ? ojson(*p.prior_variance) : ojson(nullptr);
                       j["layers"] = weights_json(p.weights);
                   },
                   [&](const EnsembleModel& e) {
                       j["architecture"] = arch_json(e.ensemble.members.front().arch);
                       j["adversarial_eps"] = e.adversarial_eps;
                       ojson members = ojson::array();
                       for (const auto& w : e.ensemble.members) members.push_back(weights_json(w));
                       j["members"] = std::move(members);
                   },
                   [&](const BnnModel& b) {
                       j["architecture"] = arch_json(b.params.arch);
                       j["config"] = bnn_config_json(b.config);
                       j["k"] = b.k ? ojson(*b.k) : ojson(nullptr);
                       ojson curve = ojson::array();
                       for (const auto& [k, e] : b.k_curve) curve.push_back(ojson{{"k", k}, {"ece", e}});
                       j["k_curve"] = std::move(curve);
                       j["predictive_seed"] = b.predictive_seed;
                       j["degraded"] = b.degraded;
                       ojson layers = ojson::array();
                       for (const auto& s : layer_layout(b.params.arch)) {
                           ojson l;
                           l["in"] = s.in;
                           l["out"] = s.out;
                           l["mu_weight"] = slice(b.params.mu, s.weight_offset, s.in * s.out);
                           l["rho_weight"] = slice(b.params.rho, s.weight_offset, s.in * s.out);
                           l["mu_bias"] = slice(b.params.mu, s.bias_offset, s.out);
                           l["rho_bias"] = slice(b.params.rho, s.bias_offset, s.out);
                           layers.push_back(std::move(l));
                       }
                       j["layers"] = std::move(layers);
                   },
                   [&](const HmcModel& h) {
                       j["sampler"] = "hmc";
                       j["architecture"] = arch_json(h.posterior.samples.front().arch);
                       j["config"] = hmc_config_json(h.config);
                       j["acceptance_rate"] = h.posterior.acceptance_rate;
                       j["step_size"] = h.posterior.step_size;
                       ojson samples = ojson::array();
                       for (const auto& w : h.posterior.samples) samples.push_back(weights_json(w));
                       j["samples"] = std::move(samples);
                   },
               },
               m.body);
    return j;
}

CalibrationModel model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        require(version == kModelFormatVersion, "unsupported model format_version " + std::to_string(version));
        CalibrationModel m;
        m.class_count = j.at("class_count").get<int>();
        require(m.class_count >= 2, "model class_count must be >= 2");
        const std::string method = j.at("method").get<std::string>();
        if (method == "uncalibrated") {
            m.body = UncalibratedModel{};
        } else if (method == "ts") {
            const double t = j.at("temperature").get<double>();
            require(t > 0.0, "temperature must be positive");
            m.body = TemperatureModel{{t}};
        } else if (method == "map") {
            const auto arch = arch_from(j.at("architecture"));
            PointModel p{weights_from(arch, j.at("layers")), std::nullopt};
            if (!j.at("prior_variance").is_null()) p.prior_variance = j.at("prior_variance").get<double>();
            m.body = std::move(p);
        } else if (method == "ensemble") {
            const auto arch = arch_from(j.at("architecture"));
            EnsembleModel e;
            e.adversarial_eps = j.at("adversarial_eps").get<double>();
            for (const auto& w : j.at("members")) e.ensemble.members.push_back(weights_from(arch, w));
            e.ensemble.validate();
            m.body = std::move(e);
        } else if (method == "bnn-mfvi" || method == "bnn-mfvilr") {
            const auto arch = arch_from(j.at("architecture"));
            BnnModel b;
            b.config = bnn_config_from(arch, j.at("config"));
            if (!j.at("k").is_null()) b.k = j.at("k").get<std::size_t>();
            for (const auto& e : j.at("k_curve"))
                b.k_curve.emplace_back(e.at("k").get<std::size_t>(), e.at("ece").get<double>());
            b.predictive_seed = j.at("predictive_seed").get<std::uint64_t>();
            b.degraded = j.at("degraded").get<bool>();
            b.params.arch = arch;
            b.params.mu.resize(arch.parameter_count());
            b.params.rho.resize(arch.parameter_count());
            const auto layout = layer_layout(arch);
            const auto& layers = j.at("layers");
            require(layers.size() == layout.size(), "model has the wrong number of layers");
            for (std::size_t l = 0; l < layout.size(); ++l) {
                const auto& s = layout[l];
                unslice(layers[l], "mu_weight", s.in * s.out, b.params.mu, s.weight_offset);
                unslice(layers[l], "rho_weight", s.in * s.out, b.params.rho, s.weight_offset);
                unslice(layers[l], "mu_bias", s.out, b.params.mu, s.bias_offset);
                unslice(layers[l], "rho_bias", s.out, b.params.rho, s.bias_offset);
            }
            m.body = std::move(b);
        } else if (method == "hmc") {
            const auto arch = arch_from(j.at("architecture"));
            HmcModel h;
            h.config = hmc_config_from(j.at("config"));
            h.posterior.acceptance_rate = j.at("acceptance_rate").get<double>();
            h.posterior.step_size = j.at("step_size").get<double>();
            for (const auto& w : j.at("samples")) h.posterior.samples.push_back(weights_from(arch, w));
            require(!h.posterior.samples.empty(), "hmc model has no samples");
            m.body = std::move(h);
        } else {
            throw ValidationError("unknown model method '" + method + "'");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const CalibrationModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << model_to_json(m).dump(1) << '\n';
}

CalibrationModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

ProbMatrix predict_model(const CalibrationModel& m, const LogitDataset& ds, std::optional<std::size_t> k_override) {
    ds.validate();
    require(ds.class_count == m.class_count, "class-count mismatch: model has " + std::to_string(m.class_count) +
                                                 " classes, data has " + std::to_string(ds.class_count));
    return std::visit(overloaded{
                          [&](const UncalibratedModel&) { return softmax_rows(ds.inputs); },
                          [&](const TemperatureModel& t) { return apply_temperature(ds, t.temperature); },
                          [&](const PointModel& p) { return predict_point(p.weights, ds); },
                          [&](const EnsembleModel& e) { return predict_ensemble(e.ensemble, ds); },
                          [&](const BnnModel& b) {
                              const auto k = k_override ? k_override : b.k;
                              if (!k) throw ValidationError("BNN model has no selected K; pass --k");
                              return predict_bnn(b.params, ds.inputs, {*k, b.predictive_seed});
                          },
                          [&](const HmcModel& h) { return predict_hmc(h.posterior, ds); },
                      },
                      m.body);
}

}  // namespace bayescal
