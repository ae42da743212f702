#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stimpute/checkpoint.hpp"
#include "stimpute/data.hpp"
#include "stimpute/error.hpp"
#include "stimpute/gradcheck.hpp"
#include "stimpute/metrics.hpp"
#include "stimpute/model.hpp"
#include "stimpute/ops.hpp"
#include "stimpute/rng.hpp"
#include "stimpute/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stimpute;

namespace {

// ---------------------------------------------------------------- run config

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

TrainConfig train_config_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"learning_rate", "batch_size", "max_epochs", "patience",
                         "grad_clip_norm", "seed", "max_steps", "final_learning_rate"},
                        "train config");
    TrainConfig c;
    try {
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
        if (j.contains("patience")) c.patience = j.at("patience").get<int>();
        if (j.contains("grad_clip_norm")) c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<std::int64_t>();
        if (j.contains("final_learning_rate"))
            c.final_learning_rate = j.at("final_learning_rate").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},       {"patience", c.patience},
            {"grad_clip_norm", c.grad_clip_norm}, {"seed", c.seed},
            {"max_steps", c.max_steps},         {"final_learning_rate", c.final_learning_rate}};
}

MaskSpec mask_spec_from_json(const json& j) {
    reject_unknown_keys(j, {"missing_rate", "seed", "mode", "block_length"}, "mask config");
    MaskSpec m;
    try {
        if (j.contains("missing_rate")) m.missing_rate = j.at("missing_rate").get<double>();
        if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mode")) {
            const std::string mode = j.at("mode").get<std::string>();
            if (mode == "random") m.mode = MaskMode::Random;
            else if (mode == "block") m.mode = MaskMode::Block;
            else throw ConfigError("mask config: unsupported mode \"" + mode + "\"");
        }
        if (j.contains("block_length")) m.block_length = j.at("block_length").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mask config: ") + e.what());
    }
    return m;
}

json mask_spec_to_json(const MaskSpec& m) {
    return {{"missing_rate", m.missing_rate},
            {"seed", m.seed},
            {"mode", m.mode == MaskMode::Block ? "block" : "random"},
            {"block_length", m.block_length}};
}

/// The three sections a config file may carry; each falls back to defaults.
struct RunConfig {
    json model = json::object();  // merged into ModelConfig once N is known
    TrainConfig train;
    MaskSpec mask;
};

RunConfig run_config_from_file(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    const json j = load_json_file(path);
    reject_unknown_keys(j, {"model", "train", "mask"}, "run config");
    if (j.contains("model")) {
        rc.model = j.at("model");
        model_config_from_json(rc.model);  // keys and types checked up front
    }
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (j.contains("mask")) rc.mask = mask_spec_from_json(j.at("mask"));
    return rc;
}

/// Resolves the model section against the dataset's node count.
ModelConfig resolve_model_config(const json& section, int num_nodes) {
    ModelConfig mc = model_config_from_json(section);
    if (!section.contains("num_nodes")) {
        mc.num_nodes = num_nodes;
    } else if (mc.num_nodes != num_nodes) {
        throw ConfigError("config num_nodes=" + std::to_string(mc.num_nodes) +
                          " disagrees with the dataset's " + std::to_string(num_nodes));
    }
    ModelConfig defaults;
    if (!section.contains("num_blocks")) mc.num_blocks = defaults.num_blocks;
    if (mc.dilations.empty())
        mc.dilations = ModelConfig::solve_dilations(mc.num_blocks, mc.kernel_size, mc.past_steps,
                                                    mc.future_steps);
    mc.validate();
    return mc;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << text;
    if (!out) throw FormatError("failed writing " + path);
}

void echo_run_config(const std::string& out_dir, const json& effective) {
    write_text_file(out_dir + "/run_config.json", effective.dump(2) + "\n");
}

std::string ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory " + out + ": " + ec.message());
    return out;
}

// ------------------------------------------------------------------ commands

int cmd_synth(int nodes, int steps, std::uint64_t seed, const std::string& out) {
    if (nodes < 2) throw ConfigError("synth needs at least 2 nodes, got " + std::to_string(nodes));
    if (steps < 1) throw ConfigError("synth needs at least 1 step");
    ensure_out_dir(out);
    SynthParams params;
    STDataset ds = generate_synthetic(nodes, steps, seed, params);
    save_matrix_csv(out + "/synthetic.csv", ds);
    write_synthetic_metadata(out + "/synthetic_meta.json", nodes, steps, seed, params);
    echo_run_config(out, {{"command", "synth"},
                          {"nodes", nodes},
                          {"steps", steps},
                          {"seed", seed},
                          {"out", out}});
    std::printf("wrote %s (%d steps x %d nodes)\n", (out + "/synthetic.csv").c_str(), steps,
                nodes);
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path, double rate_flag,
              std::int64_t seed_flag, double lr_flag, const std::string& out) {
    RunConfig rc = run_config_from_file(config_path);
    if (rate_flag >= 0.0) rc.mask.missing_rate = rate_flag;
    if (seed_flag >= 0) {
        rc.mask.seed = static_cast<std::uint64_t>(seed_flag);
        rc.train.seed = static_cast<std::uint64_t>(seed_flag);
    }
    if (lr_flag >= 0.0) rc.train.learning_rate = lr_flag;
    rc.train.validate();

    STDataset ds = load_matrix_csv(data_path);
    MaskGrid artificial = generate_mask(ds, rc.mask);
    MaskGrid visible = visibility_mask(ds, artificial);
    SplitRanges splits = make_splits(ds.num_steps());
    Normalizer normalizer = fit_normalizer(ds, splits.train, visible);

    ModelConfig mc = resolve_model_config(rc.model, ds.num_nodes());

    TrainData data;
    data.train = make_windows(ds, artificial, normalizer, mc.window_config(), splits.train,
                              WindowMode::EvalMasked)
                     .samples;
    data.val = make_windows(ds, artificial, normalizer, mc.window_config(), splits.val,
                            WindowMode::EvalMasked)
                   .samples;
    if (data.train.empty())
        throw ConfigError("no trainable windows: the train split is shorter than the window");

    ensure_out_dir(out);
    Rng init_rng(rc.train.seed);
    ModelParams params = ModelParams::init(mc, init_rng);
    TrainResult result = train(params, mc, data, rc.train);

    Checkpoint cp;
    cp.config = mc;
    cp.params = params;
    cp.normalizer = normalizer;
    cp.train_step = result.total_steps;
    save_checkpoint(out + "/checkpoint.bin", cp);
    write_history_csv(out + "/history.csv", result.history);
    echo_run_config(out, {{"command", "train"},
                          {"data", data_path},
                          {"out", out},
                          {"model", model_config_to_json(mc)},
                          {"train", train_config_to_json(rc.train)},
                          {"mask", mask_spec_to_json(rc.mask)}});

    std::printf("trained %lld steps over %zu epochs; best epoch %d (val loss %.6g)\n",
                static_cast<long long>(result.total_steps), result.history.size(),
                result.best_epoch, result.best_val_loss);
    return 0;
}

std::vector<BaselineKind> parse_baselines(const std::vector<std::string>& names) {
    std::vector<BaselineKind> kinds;
    for (const std::string& name : names) {
        if (name == "linear_interpolation")
            kinds.push_back(BaselineKind::LinearInterpolation);
        else if (name == "historical_mean")
            kinds.push_back(BaselineKind::HistoricalMean);
        else if (name == "last_observation")
            kinds.push_back(BaselineKind::LastObservation);
        else if (name == "none")
            ;  // explicit empty set
        else
            throw ConfigError("unknown baseline \"" + name + "\"");
    }
    return kinds;
}

int cmd_evaluate(const std::string& data_path, const std::string& checkpoint_path,
                 const std::vector<double>& rates, const std::vector<std::string>& baseline_names,
                 std::uint64_t seed, const std::string& out) {
    STDataset ds = load_matrix_csv(data_path);
    std::vector<BaselineKind> baselines = parse_baselines(baseline_names);

    Checkpoint cp;
    const bool with_model = !checkpoint_path.empty();
    if (with_model) cp = load_checkpoint(checkpoint_path, ds.num_nodes());
    if (!with_model && baselines.empty())
        throw ConfigError("nothing to evaluate: no checkpoint and no baselines");

    MetricsReport report = evaluate(ds, rates, seed, baselines, with_model ? &cp : nullptr);

    ensure_out_dir(out);
    write_report_json(out + "/report.json", report);
    json echo = {{"command", "evaluate"}, {"data", data_path},  {"rates", rates},
                 {"baselines", baseline_names}, {"seed", seed}, {"out", out}};
    if (with_model) echo["checkpoint"] = checkpoint_path;
    echo_run_config(out, echo);

    std::fputs(render_table(report).c_str(), stdout);
    return 0;
}

int cmd_impute(const std::string& data_path, const std::string& checkpoint_path,
               const std::string& out) {
    STDataset ds = load_matrix_csv(data_path);
    Checkpoint cp = load_checkpoint(checkpoint_path, ds.num_nodes());
    const int steps = ds.num_steps(), nodes = ds.num_nodes();
    const ModelConfig& mc = cp.config;

    // linear fallback for rows no window can reach
    Matrix fallback = baseline_impute(BaselineKind::LinearInterpolation, ds, ds.native_mask);

    Matrix filled = ds.values;
    Matrix provenance(steps, nodes, 0.0);

    TimeRange reachable{mc.past_steps, steps - mc.future_steps};
    if (reachable.end > reachable.begin) {
        MaskGrid no_artificial(steps, nodes, 0);
        WindowBatch batch = make_windows(ds, no_artificial, cp.normalizer, mc.window_config(),
                                         reachable, WindowMode::AnyHidden);
        for (const WindowSample& sample : batch.samples) {
            Tensor pred = model_forward(sample, cp.params, mc);
            for (int n = 0; n < nodes; ++n)
                if (!ds.native_mask.at(sample.target_index, n)) {
                    filled.at(sample.target_index, n) =
                        cp.normalizer.denormalize(pred.at({n}), n);
                    provenance.at(sample.target_index, n) = 1.0;
                }
        }
    }
    for (int t = 0; t < steps; ++t) {
        if (reachable.contains(t)) continue;
        for (int n = 0; n < nodes; ++n)
            if (!ds.native_mask.at(t, n)) {
                filled.at(t, n) = fallback.at(t, n);
                provenance.at(t, n) = 2.0;
            }
    }

    ensure_out_dir(out);
    STDataset complete = ds;
    complete.values = filled;
    complete.native_mask = MaskGrid(steps, nodes, 1);
    save_matrix_csv(out + "/imputed.csv", complete);

    STDataset prov = ds;
    prov.values = provenance;
    prov.native_mask = MaskGrid(steps, nodes, 1);
    save_matrix_csv(out + "/provenance.csv", prov);

    echo_run_config(out, {{"command", "impute"},
                          {"data", data_path},
                          {"checkpoint", checkpoint_path},
                          {"out", out}});

    long model_filled = 0, fallback_filled = 0;
    for (double p : provenance.cells) {
        if (p == 1.0) ++model_filled;
        if (p == 2.0) ++fallback_filled;
    }
    std::printf("imputed %ld entries with the model, %ld by linear fallback\n", model_filled,
                fallback_filled);
    return 0;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, bool corrupt) {
    ModelConfig mc;
    mc.num_nodes = 3;
    mc.num_blocks = 2;
    mc.channels = 4;
    mc.embed_dim = 3;
    mc.attn_dim = 5;
    mc.skip_channels = 6;
    mc.past_steps = 2;
    mc.future_steps = 2;
    if (!config_path.empty()) {
        const json j = load_json_file(config_path);
        reject_unknown_keys(j, {"model"}, "run config");
        if (j.contains("model")) {
            ModelConfig fromFile = model_config_from_json(j.at("model"));
            if (fromFile.num_nodes > 0) mc = fromFile;
        }
    }
    if (mc.dilations.empty())
        mc.dilations =
            ModelConfig::solve_dilations(mc.num_blocks, mc.kernel_size, mc.past_steps,
                                         mc.future_steps);
    mc.validate();

    STDataset ds = generate_synthetic(mc.num_nodes, mc.window_length() + 40, seed);
    MaskGrid artificial = generate_mask(ds, {0.3, seed + 1});
    Normalizer norm =
        fit_normalizer(ds, {0, ds.num_steps()}, visibility_mask(ds, artificial));
    WindowBatch batch = make_windows(ds, artificial, norm, mc.window_config(),
                                     {mc.past_steps, ds.num_steps() - mc.future_steps},
                                     WindowMode::EvalMasked);
    if (batch.samples.empty()) throw ConfigError("gradcheck: no usable window sample");
    const WindowSample sample = batch.samples.front();

    Rng rng(seed);
    ModelParams params = ModelParams::init(mc, rng);

    int calls = 0;
    auto forward = [&]() {
        ++calls;
        Tensor loss = masked_mse_loss(model_forward(sample, params, mc), sample.x_true_t,
                                      sample.eval_mask_t);
        // the negative control makes the probed function disagree with the
        // function the tape differentiated, which is what a broken backward
        // rule looks like to the checker
        if (corrupt && calls > 1) loss = ops::scale(loss, 1.01);
        return loss;
    };
    GradCheckReport report = grad_check(forward, params.named(), 1e-5, 1e-4);
    std::fputs(format_report(report).c_str(), stdout);
    return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatiotemporal sensor-data imputation toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic ring-diffusion dataset");
    int nodes = 8, steps = 512;
    std::uint64_t synth_seed = 1;
    std::string synth_out = "out";
    synth->add_option("--nodes", nodes, "number of sensors (>= 2)");
    synth->add_option("--steps", steps, "number of time steps");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train an imputation model");
    std::string train_data, train_config, train_out = "out";
    double rate_flag = -1.0, lr_flag = -1.0;
    std::int64_t seed_flag = -1;
    train_cmd->add_option("--data", train_data, "input CSV")->required();
    train_cmd->add_option("--config", train_config, "JSON run config");
    train_cmd->add_option("--rate", rate_flag, "artificial missing rate");
    train_cmd->add_option("--seed", seed_flag, "mask and training seed");
    train_cmd->add_option("--lr", lr_flag, "learning rate override");
    train_cmd->add_option("--out", train_out, "output directory")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score the model and baselines");
    std::string eval_data, eval_checkpoint, eval_out = "out";
    std::vector<double> rates{0.2, 0.4, 0.6};
    std::vector<std::string> baseline_names{"linear_interpolation", "historical_mean",
                                            "last_observation"};
    std::uint64_t eval_seed = 1;
    eval_cmd->add_option("--data", eval_data, "input CSV")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "trained model (omit for baselines only)");
    eval_cmd->add_option("--rates", rates, "missing rates to evaluate")->delimiter(',');
    eval_cmd->add_option("--baselines", baseline_names, "baseline methods, or 'none'")
        ->delimiter(',');
    eval_cmd->add_option("--seed", eval_seed, "mask seed (per-rate seeds derive from it)");
    eval_cmd->add_option("--out", eval_out, "output directory")->required();

    // impute
    auto* impute_cmd = app.add_subcommand("impute", "fill every missing entry of a CSV");
    std::string impute_data, impute_checkpoint, impute_out = "out";
    impute_cmd->add_option("--data", impute_data, "input CSV")->required();
    impute_cmd->add_option("--checkpoint", impute_checkpoint, "trained model")->required();
    impute_cmd->add_option("--out", impute_out, "output directory")->required();

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the gradients");
    std::string grad_config;
    std::uint64_t grad_seed = 7;
    bool corrupt = false;
    grad_cmd->add_option("--config", grad_config, "JSON run config with a model section");
    grad_cmd->add_option("--seed", grad_seed, "sample and parameter seed");
    grad_cmd->add_flag("--corrupt", corrupt, "negative control: force an inconsistent gradient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(nodes, steps, synth_seed, synth_out);
        if (train_cmd->parsed())
            return cmd_train(train_data, train_config, rate_flag, seed_flag, lr_flag, train_out);
        if (eval_cmd->parsed())
            return cmd_evaluate(eval_data, eval_checkpoint, rates, baseline_names, eval_seed,
                                eval_out);
        if (impute_cmd->parsed()) return cmd_impute(impute_data, impute_checkpoint, impute_out);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_config, grad_seed, corrupt);
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;  // unreachable with require_subcommand(1)
}
