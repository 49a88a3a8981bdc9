#include "bayescal/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace bayescal {

namespace {

using ojson = nlohmann::ordered_json;

LogitDataset as_logits(const LabeledData& d) {
    LogitDataset out;
    static_cast<LabeledData&>(out) = d;
    out.validate();
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

ojson metrics_obj(const CalibrationMetrics& m) {
    ojson j;
    j["ece"] = m.ece;
    j["ece_percent"] = 100.0 * m.ece;
    j["accuracy"] = m.accuracy;
    j["nll"] = m.nll;
    j["brier"] = m.brier;
    return j;
}

std::string prior_tag(double v) {
    std::string s = format_double(v);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

}  // namespace

Method parse_method(const std::string& s) {
    if (s == "uncalibrated") return Method::uncalibrated;
    if (s == "ts") return Method::ts;
    if (s == "map") return Method::map;
    if (s == "ensemble") return Method::ensemble;
    if (s == "bnn-mfvi") return Method::bnn_mfvi;
    if (s == "bnn-mfvilr") return Method::bnn_mfvilr;
    if (s == "hmc") return Method::hmc;
    throw ValidationError("unknown method '" + s + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::uncalibrated: return "uncalibrated";
        case Method::ts: return "ts";
        case Method::map: return "map";
        case Method::ensemble: return "ensemble";
        case Method::bnn_mfvi: return "bnn-mfvi";
        case Method::bnn_mfvilr: return "bnn-mfvilr";
        case Method::hmc: return "hmc";
    }
    return "uncalibrated";
}

TrainOutcome train_method(Method method, const LabeledData& train, const LabeledData* val,
                          const MethodOptions& opt) {
    train.validate();
    TrainOutcome out;
    out.model.class_count = train.class_count;
    const std::uint64_t train_seed = stream_seed(opt.seed, SeedStream::train);
    const auto arch = [&] {
        return MlpArchitecture::parse(opt.hidden, train.dim(), static_cast<std::size_t>(train.class_count));
    };
    const OptimConfig optim{opt.epochs, opt.batch_size, opt.learning_rate, opt.schedule, train_seed};

    switch (method) {
        case Method::uncalibrated:
            out.model.body = UncalibratedModel{};
            break;
        case Method::ts:
            out.model.body = TemperatureModel{fit_temperature(as_logits(train))};
            break;
        case Method::map:
            out.model.body = PointModel{train_map(train, arch(), opt.prior_variance, optim).weights, opt.prior_variance};
            break;
        case Method::ensemble:
            out.model.body = EnsembleModel{
                train_ensemble(train, arch(), opt.members, optim, opt.adversarial_eps, opt.prior_variance),
                opt.adversarial_eps};
            break;
        case Method::bnn_mfvi:
        case Method::bnn_mfvilr: {
            BnnTrainConfig cfg;
            cfg.arch = arch();
            cfg.beta = opt.beta;
            cfg.elbo_samples = opt.elbo_samples;
            cfg.epochs = opt.epochs;
            cfg.batch_size = opt.batch_size;
            cfg.learning_rate = opt.learning_rate;
            cfg.schedule = opt.schedule;
            cfg.estimator = method == Method::bnn_mfvi ? Estimator::mfvi : Estimator::mfvilr;
            cfg.prior_variance = opt.prior_variance.value_or(1.0);
            cfg.seed = train_seed;
            BnnTrainResult r = train_bnn(train, cfg);
            BnnModel b;
            b.config = cfg;
            b.predictive_seed = stream_seed(opt.seed, SeedStream::predictive);
            b.degraded = r.degraded;
            if (val != nullptr) {
                KSelection sel = select_k(r.params, *val, opt.k_grid, b.predictive_seed, opt.bins);
                b.k = sel.k;
                b.k_curve = std::move(sel.curve);
            }
            b.params = std::move(r.params);
            out.log = std::move(r.log);
            out.degraded = r.degraded;
            out.model.body = std::move(b);
            break;
        }
        case Method::hmc: {
            HmcConfig cfg = opt.hmc;
            cfg.seed = train_seed;
            if (opt.prior_variance) cfg.prior_variance = *opt.prior_variance;
            // warm start from the MAP estimate under the same prior
            const PointWeights start = train_map(train, arch(), cfg.prior_variance, optim).weights;
            PosteriorSamples s = hmc_sample(train, arch(), cfg, &start);
            out.chain = std::move(s.diagnostics);
            out.model.body = HmcModel{std::move(s), cfg};
            break;
        }
    }
    return out;
}

void write_train_outputs(const TrainOutcome& t, const std::filesystem::path& out_dir,
                         const std::filesystem::path& model_path) {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    save_model(t.model, model_path.empty() ? out_dir / "model.json" : model_path);
    if (const auto* b = std::get_if<BnnModel>(&t.model.body)) {
        save_train_log_csv(t.log, out_dir / "train_log.csv");
        ojson s;
        s["method"] = t.model.method();
        s["epochs"] = t.log.size();
        s["final_elbo"] = t.log.empty() ? 0.0 : t.log.back().elbo;
        s["final_train_accuracy"] = t.log.empty() ? 0.0 : t.log.back().train_accuracy;
        s["degraded"] = t.degraded;
        s["k"] = b->k ? ojson(*b->k) : ojson(nullptr);
        write_text(out_dir / "train_summary.json", s.dump(2) + "\n");
    }
    if (!t.chain.empty()) save_chain_csv(t.chain, out_dir / "chain.csv");
}

EvalOutcome evaluate_model(const CalibrationModel& m, const LogitDataset& ds, int bins,
                           std::optional<std::size_t> k_override) {
    EvalOutcome e;
    e.probs = predict_model(m, ds, k_override);
    e.bins = reliability_bins(e.probs, ds.labels, bins);
    e.metrics = {ece(e.bins), accuracy(e.probs, ds.labels), nll(e.probs, ds.labels), brier(e.probs, ds.labels)};
    return e;
}

void write_eval_outputs(const EvalOutcome& e, std::span<const int> labels, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_metrics_json(e.metrics, out_dir / "metrics.json");
    save_reliability_csv(e.bins, out_dir / "reliability.csv");
    save_per_sample_csv(e.probs, labels, out_dir / "per_sample.csv");
}

// ---------------------------------------------------------------------------

ComparisonReport run_compare(const Split<LogitDataset>& data, const std::vector<Method>& methods,
                             const MethodOptions& opt, const std::filesystem::path* out_dir) {
    ComparisonReport report;
    for (Method method : methods) {
        MethodReport row;
        row.method = method;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const LabeledData& fit_on = method == Method::ts ? data.val : data.train;
            TrainOutcome t = train_method(method, fit_on, &data.val, opt);
            const EvalOutcome ev = evaluate_model(t.model, data.val, opt.bins);
            const EvalOutcome et = evaluate_model(t.model, data.test, opt.bins);
            row.val = ev.metrics;
            row.test = et.metrics;
            row.degraded = t.degraded;
            if (const auto* ts = std::get_if<TemperatureModel>(&t.model.body)) row.temperature = ts->temperature.value;
            if (const auto* b = std::get_if<BnnModel>(&t.model.body)) {
                row.beta = b->config.beta;
                row.k = b->k;
            }
            if (method != Method::uncalibrated && method != Method::ts) row.hidden = opt.hidden;
            row.ok = true;
            if (out_dir) {
                const auto dir = *out_dir / to_string(method);
                write_train_outputs(t, dir);
                write_eval_outputs(et, data.test.labels, dir);
            }
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.rows.push_back(std::move(row));
    }
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_text(*out_dir / "comparison.json", comparison_json(report));
        write_text(*out_dir / "comparison.csv", comparison_csv(report));
        ojson timing;
        for (const auto& r : report.rows) timing[to_string(r.method)] = r.runtime_seconds;
        write_text(*out_dir / "timing.json", timing.dump(2) + "\n");
    }
    return report;
}

std::string comparison_json(const ComparisonReport& r) {
    ojson rows = ojson::array();
    for (const auto& m : r.rows) {
        ojson j;
        j["method"] = to_string(m.method);
        j["status"] = m.ok ? "ok" : "failed";
        if (!m.ok) {
            j["error"] = m.error;
            rows.push_back(std::move(j));
            continue;
        }
        j["val"] = metrics_obj(m.val);
        j["test"] = metrics_obj(m.test);
        ojson chosen;
        chosen["temperature"] = m.temperature ? ojson(*m.temperature) : ojson(nullptr);
        chosen["beta"] = m.beta ? ojson(*m.beta) : ojson(nullptr);
        chosen["k"] = m.k ? ojson(*m.k) : ojson(nullptr);
        chosen["hidden"] = m.hidden.empty() ? ojson(nullptr) : ojson(m.hidden);
        j["chosen"] = std::move(chosen);
        j["degraded"] = m.degraded;
        rows.push_back(std::move(j));
    }
    ojson out;
    out["methods"] = std::move(rows);
    return out.dump(2) + "\n";
}

std::string comparison_csv(const ComparisonReport& r) {
    std::ostringstream out;
    out << "method,status,val_ece_percent,val_accuracy,val_nll,val_brier,"
           "test_ece_percent,test_accuracy,test_nll,test_brier,temperature,beta,k,hidden,degraded\n";
    auto opt_num = [](const auto& o) { return o ? format_double(static_cast<double>(*o)) : std::string(); };
    for (const auto& m : r.rows) {
        out << to_string(m.method) << ',' << (m.ok ? "ok" : "failed");
        if (m.ok) {
            for (const auto* s : {&m.val, &m.test})
                out << ',' << format_double(100.0 * s->ece) << ',' << format_double(s->accuracy) << ','
                    << format_double(s->nll) << ',' << format_double(s->brier);
            out << ',' << opt_num(m.temperature) << ',' << opt_num(m.beta) << ',' << opt_num(m.k) << ',' << m.hidden
                << ',' << (m.degraded ? 1 : 0);
        } else {
            out << ",,,,,,,,,,,,,";
        }
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

std::vector<ToyCell> run_toy(const ToyStudyConfig& cfg, const std::filesystem::path* out_dir) {
    ToyConfig train_cfg = cfg.toy;
    train_cfg.seed = stream_seed(cfg.seed, SeedStream::data);
    ToyConfig test_cfg = cfg.toy;
    test_cfg.samples_per_class = cfg.test_samples_per_class;
    test_cfg.seed = stream_seed(cfg.seed, SeedStream::test_data);
    const FeatureDataset train = generate_toy(train_cfg);
    const FeatureDataset test = generate_toy(test_cfg);
    const std::uint64_t train_seed = stream_seed(cfg.seed, SeedStream::train);
    const std::uint64_t pred_seed = stream_seed(cfg.seed, SeedStream::predictive);

    std::vector<ToyCell> cells;
    for (double prior : cfg.prior_variances) {
        for (const auto& lik : cfg.likelihoods) {
            const MlpArchitecture arch = MlpArchitecture::parse(lik, 2, 4);
            ToyCell cell;
            cell.prior_variance = prior;
            cell.likelihood = arch.hidden_spec();

            OptimConfig optim = cfg.map_optim;
            optim.seed = train_seed;
            const PointWeights map = train_map(train, arch, prior, optim).weights;

            BnnTrainConfig bcfg = cfg.bnn;
            bcfg.arch = arch;
            bcfg.prior_variance = prior;
            bcfg.estimator = Estimator::mfvilr;
            bcfg.seed = train_seed;
            const VariationalParams vp = train_bnn(train, bcfg).params;
            const PredictiveConfig pc{cfg.bnn_k, pred_seed};

            HmcConfig hcfg = cfg.hmc;
            hcfg.prior_variance = prior;
            hcfg.seed = train_seed;
            const PosteriorSamples post = hmc_sample(train, arch, hcfg, &map);
            cell.hmc_acceptance = post.acceptance_rate;

            cell.map = evaluate_metrics(predict_point(map, test), test.labels, cfg.bins);
            cell.mfvilr = evaluate_metrics(predict_bnn(vp, test.inputs, pc), test.labels, cfg.bins);
            cell.hmc = evaluate_metrics(predict_hmc(post, test), test.labels, cfg.bins);

            if (out_dir) {
                const auto dir = *out_dir / ("p" + prior_tag(prior) + "_h" + cell.likelihood);
                std::filesystem::create_directories(dir);
                const auto grid = [&](const Predictor& p, const char* name) {
                    save_grid_csv(confidence_grid(p, cfg.bounds, cfg.grid_resolution), dir / name);
                };
                grid([&](const Matrix& x) { return mlp_probs(arch, map.params, x); }, "grid_map.csv");
                grid([&](const Matrix& x) { return predict_bnn(vp, x, pc); }, "grid_bnn-mfvilr.csv");
                grid(
                    [&](const Matrix& x) {
                        FeatureDataset pts;
                        pts.inputs = x;
                        return predict_hmc(post, pts);
                    },
                    "grid_hmc.csv");
                save_chain_csv(post.diagnostics, dir / "chain.csv");
            }
            cells.push_back(std::move(cell));
        }
    }
    if (out_dir) write_text(*out_dir / "table1.csv", toy_table_csv(cells));
    return cells;
}

std::string toy_table_csv(const std::vector<ToyCell>& cells) {
    std::ostringstream out;
    out << "prior,likelihood,hmc_acc,hmc_ece,mfvilr_acc,mfvilr_ece,map_acc,map_ece\n";
    for (const auto& c : cells) {
        out << format_double(c.prior_variance) << ',' << c.likelihood;
        for (const auto* m : {&c.hmc, &c.mfvilr, &c.map})
            out << ',' << format_double(m->accuracy) << ',' << format_double(m->ece);
        out << '\n';
    }
    return out.str();
}

}  // namespace bayescal
