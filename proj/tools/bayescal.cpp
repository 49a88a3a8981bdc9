// bayescal: post-hoc calibration of classifier logits from the command line.
//
//   bayescal synth   --out data.csv --n 50000 --classes 10 --scale 3
//   bayescal split   --data data.csv --out splits/
//   bayescal train   --method bnn-mfvilr --manifest splits/manifest.json --out run/
//   bayescal eval    --model run/model.json --manifest splits/manifest.json --out run/
//   bayescal compare --method uncalibrated,ts,bnn-mfvilr --manifest splits/manifest.json --out cmp/
//   bayescal toy     --out toy/          (same as `bayescal --toy --out toy/`)
//
// Exit codes: 0 success, 1 invalid input, 2 numerical failure. Errors are
// also printed to stderr as a single JSON object.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bayescal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bayescal;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

int report_error(const char* kind, const std::string& message, int code) {
    nlohmann::ordered_json j;
    j["error"]["type"] = kind;
    j["error"]["message"] = message;
    j["error"]["exit_code"] = code;
    std::cerr << j.dump() << '\n';
    return code;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::size_t> parse_k_grid(const std::string& s) {
    std::vector<std::size_t> grid;
    for (const auto& item : split_list(s)) {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || v < 1) throw ValidationError("--k-grid: '" + item + "' is not a positive integer");
        grid.push_back(static_cast<std::size_t>(v));
    }
    require(!grid.empty(), "--k-grid is empty");
    return grid;
}

Split<LogitDataset> load_split(const fs::path& manifest_path) {
    const Manifest m = load_manifest(manifest_path);
    const LogitDataset all = load_dataset(manifest_path, DataFormat::manifest);
    return {subset(all, m.splits.train), subset(all, m.splits.val), subset(all, m.splits.test)};
}

// Flags shared by train and compare.
struct MethodFlags {
    std::string hidden = "0";
    double beta = 0.1;
    std::size_t elbo_samples = 1;
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    double lr = 1e-2;
    std::string schedule = "linear";
    std::string k_grid;
    std::optional<double> prior_variance;
    std::size_t members = 5;
    double adv_eps = 0.01;
    std::size_t hmc_samples = HmcConfig{}.num_samples;
    std::size_t hmc_burn_in = HmcConfig{}.burn_in;
    std::size_t hmc_leapfrog = HmcConfig{}.leapfrog_steps;
    double hmc_step = HmcConfig{}.step_size;

    void attach(CLI::App* app) {
        app->add_option("--hidden", hidden, "hidden layers as AxB (A layers of B units), 0 for none");
        app->add_option("--beta", beta, "KL weight for the BNN methods");
        app->add_option("--elbo-samples", elbo_samples, "Monte Carlo samples per ELBO estimate");
        app->add_option("--epochs", epochs);
        app->add_option("--batch-size", batch_size);
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--lr-schedule", schedule)->check(CLI::IsMember({"constant", "step", "linear"}));
        app->add_option("--k-grid", k_grid, "comma separated predictive sample counts, e.g. 1,10,100");
        app->add_option("--prior-variance", prior_variance, "Gaussian prior variance (map: omit for ML)");
        app->add_option("--members", members, "ensemble size");
        app->add_option("--adv-eps", adv_eps, "FGSM radius as a fraction of each input's range");
        app->add_option("--hmc-samples", hmc_samples);
        app->add_option("--hmc-burn-in", hmc_burn_in);
        app->add_option("--hmc-leapfrog", hmc_leapfrog);
        app->add_option("--hmc-step", hmc_step);
    }

    MethodOptions options(std::uint64_t seed, int bins) const {
        MethodOptions o;
        o.hidden = hidden;
        o.beta = beta;
        o.elbo_samples = elbo_samples;
        o.epochs = epochs;
        o.batch_size = batch_size;
        o.learning_rate = lr;
        o.schedule = parse_schedule(schedule);
        if (!k_grid.empty()) o.k_grid = parse_k_grid(k_grid);
        o.prior_variance = prior_variance;
        o.members = members;
        o.adversarial_eps = adv_eps;
        o.hmc.num_samples = hmc_samples;
        o.hmc.burn_in = hmc_burn_in;
        o.hmc.leapfrog_steps = hmc_leapfrog;
        o.hmc.step_size = hmc_step;
        o.seed = seed;
        o.bins = bins;
        return o;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bayescal: post-hoc probability calibration of classifier logits"};
    app.require_subcommand(0, 1);

    std::uint64_t seed = 0;
    int bins = kDefaultBins;
    std::string data, manifest, out, method, val;
    bool toy_flag = false;
    app.add_option("--seed", seed, "global seed")->capture_default_str();
    app.add_option("--bins", bins, "ECE bins")->capture_default_str();
    app.add_flag("--toy", toy_flag, "run the toy HMC / MFVILR / MAP study (needs --out)");
    app.add_option("--out", out, "output directory");

    // synth
    auto* synth = app.add_subcommand("synth", "write an over-confident synthetic logit CSV");
    std::size_t synth_n = 50000;
    int synth_classes = 10;
    double synth_scale = 3.0;
    synth->add_option("--out", out, "output CSV")->required();
    synth->add_option("--n", synth_n)->capture_default_str();
    synth->add_option("--classes", synth_classes)->capture_default_str();
    synth->add_option("--scale", synth_scale, "logit multiplier (ideal temperature)")->capture_default_str();
    synth->add_option("--seed", seed);

    // split
    auto* split_cmd = app.add_subcommand("split", "partition a logit CSV into train/val/test and write a manifest");
    SplitSpec spec;
    split_cmd->add_option("--data", data, "logit CSV")->required();
    split_cmd->add_option("--out", out, "output directory")->required();
    split_cmd->add_option("--train-frac", spec.train_fraction)->capture_default_str();
    split_cmd->add_option("--val-frac", spec.val_fraction)->capture_default_str();
    split_cmd->add_option("--test-frac", spec.test_fraction)->capture_default_str();
    split_cmd->add_flag("--stratified", spec.stratified);
    split_cmd->add_option("--seed", seed);

    // train
    auto* train = app.add_subcommand("train", "fit one calibration method");
    MethodFlags train_flags;
    std::optional<std::size_t> k_opt;
    train->add_option("--method", method)->required();
    train->add_option("--data", data, "training logits CSV");
    train->add_option("--val", val, "validation CSV used for BNN K selection");
    train->add_option("--manifest", manifest, "split manifest (TS fits on val, others on train)");
    train->add_option("--out", out, "output directory, or a .json path for the model file")->required();
    train->add_option("--seed", seed);
    train->add_option("--bins", bins);
    train_flags.attach(train);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a model file");
    std::string model_path;
    eval->add_option("--model", model_path)->required();
    eval->add_option("--data", data, "logits CSV");
    eval->add_option("--manifest", manifest, "split manifest (evaluates the test split)");
    eval->add_option("--out", out, "output directory")->required();
    eval->add_option("--bins", bins);
    eval->add_option("--k", k_opt, "BNN predictive samples (overrides the stored K)");

    // compare
    auto* compare = app.add_subcommand("compare", "run several methods on shared splits");
    MethodFlags compare_flags;
    compare->add_option("--method", method, "comma separated methods")
        ->default_val("uncalibrated,ts,bnn-mfvilr");
    compare->add_option("--data", data, "logits CSV, split 80/10/10 with the global seed");
    compare->add_option("--manifest", manifest, "split manifest");
    compare->add_option("--out", out, "output directory")->required();
    compare->add_option("--seed", seed);
    compare->add_option("--bins", bins);
    compare_flags.attach(compare);

    // toy
    auto* toy = app.add_subcommand("toy", "HMC / MFVILR / MAP on the four-cluster toy problem");
    ToyStudyConfig toy_cfg;
    toy->add_option("--out", out, "output directory")->required();
    toy->add_option("--seed", seed);
    toy->add_option("--bins", bins);
    toy->add_option("--epochs", toy_cfg.map_optim.epochs, "MAP and MFVILR epochs")->capture_default_str();
    toy->add_option("--hmc-samples", toy_cfg.hmc.num_samples)->capture_default_str();
    toy->add_option("--hmc-burn-in", toy_cfg.hmc.burn_in)->capture_default_str();
    toy->add_option("--hmc-leapfrog", toy_cfg.hmc.leapfrog_steps)->capture_default_str();
    toy->add_option("--hmc-step", toy_cfg.hmc.step_size)->capture_default_str();
    toy->add_option("--grid-resolution", toy_cfg.grid_resolution)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), kExitValidation);
    }

    try {
        if (*synth) {
            save_csv(synth_miscalibrated(synth_n, synth_classes, synth_scale, stream_seed(seed, SeedStream::data)), out);
        } else if (*split_cmd) {
            const LogitDataset ds = load_csv(data);
            spec.seed = stream_seed(seed, SeedStream::split);
            const SplitIndices idx = split_indices(ds, spec);
            const fs::path dir = out;
            fs::create_directories(dir);
            save_csv(ds, dir / "data.csv");
            save_csv(subset(ds, idx.train), dir / "train.csv");
            save_csv(subset(ds, idx.val), dir / "val.csv");
            save_csv(subset(ds, idx.test), dir / "test.csv");
            save_manifest(Manifest{"data.csv", ds.class_count, idx}, dir / "manifest.json");
        } else if (*train) {
            const Method m = parse_method(method);
            require(data.empty() != manifest.empty(), "pass exactly one of --data and --manifest");
            LogitDataset fit_on, val_ds;
            bool have_val = false;
            if (!manifest.empty()) {
                Split<LogitDataset> s = load_split(manifest);
                fit_on = m == Method::ts ? s.val : std::move(s.train);
                val_ds = std::move(s.val);
                have_val = true;
            } else {
                fit_on = load_csv(data);
                if (!val.empty()) {
                    val_ds = load_csv(val);
                    have_val = true;
                }
            }
            const TrainOutcome t =
                train_method(m, fit_on, have_val ? &val_ds : nullptr, train_flags.options(seed, bins));
            const fs::path target = out;
            if (target.extension() == ".json")
                write_train_outputs(t, target.parent_path(), target);
            else
                write_train_outputs(t, target);
            if (t.degraded) log_warning("training degraded: accuracy stayed near chance");
        } else if (*eval) {
            require(data.empty() != manifest.empty(), "pass exactly one of --data and --manifest");
            const CalibrationModel model = load_model(model_path);
            const LogitDataset ds = manifest.empty() ? load_csv(data) : load_split(manifest).test;
            const EvalOutcome e = evaluate_model(model, ds, bins, k_opt);
            write_eval_outputs(e, ds.labels, out);
        } else if (*compare) {
            require(data.empty() != manifest.empty(), "pass exactly one of --data and --manifest");
            std::vector<Method> methods;
            for (const auto& name : split_list(method)) methods.push_back(parse_method(name));
            require(!methods.empty(), "no methods given");
            Split<LogitDataset> s;
            if (!manifest.empty()) {
                s = load_split(manifest);
            } else {
                SplitSpec sp;
                sp.seed = stream_seed(seed, SeedStream::split);
                s = split(load_csv(data), sp);
            }
            const fs::path dir = out;
            const ComparisonReport r = run_compare(s, methods, compare_flags.options(seed, bins), &dir);
            for (const auto& row : r.rows)
                if (!row.ok) {
                    log_warning(to_string(row.method) + " failed: " + row.error);
                }
            std::cout << comparison_csv(r);
        } else if (*toy || toy_flag) {
            require(!out.empty(), "--out is required");
            toy_cfg.seed = seed;
            toy_cfg.bins = bins;
            toy_cfg.bnn.epochs = toy_cfg.map_optim.epochs;
            const fs::path dir = out;
            const auto cells = run_toy(toy_cfg, &dir);
            std::cout << toy_table_csv(cells);
        } else {
            std::cout << app.help();
            return kExitValidation;
        }
    } catch (const NumericalError& e) {
        return report_error("numerical", e.what(), kExitNumerical);
    } catch (const ValidationError& e) {
        return report_error("validation", e.what(), kExitValidation);
    } catch (const std::exception& e) {
        return report_error("validation", e.what(), kExitValidation);
    }
    return EXIT_SUCCESS;
}
