// Command-line pipeline driver: dataset generation, training, quantization,
// sensitivity analysis, pruning, design-space exploration, RTL emission and
// reporting. Each subcommand reads its stage's input artifacts and writes its
// outputs under --out/<stage>/; `run` chains all stages from one config file.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rcc/dse.hpp"
#include "rcc/serialize.hpp"
#include "rcc/verilog.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitPartialFailure = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void ensure_dir(const fs::path& p) { fs::create_directories(p); }

// ---- config -----------------------------------------------------------------

struct RunConfig {
    json dataset;
    json model;
    std::vector<int> q_grid;
    std::vector<double> p_grid;
    std::vector<rcc::PrunerKind> pruners;
    std::uint64_t seed = 0;
    std::string output = "out";
    std::vector<std::string> formats{"csv", "json"};
};

RunConfig load_config(const std::string& path) {
    json j;
    try {
        j = rcc::read_json_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    RunConfig cfg;
    try {
        cfg.dataset = j.at("dataset");
        cfg.model = j.value("model", json::object());
        const json& grid = j.at("grid");
        cfg.q_grid = grid.at("q").get<std::vector<int>>();
        for (std::size_t i = 0; i < cfg.q_grid.size(); ++i)
            if (cfg.q_grid[i] < 1 || cfg.q_grid[i] > 8)
                throw ConfigError("grid.q[" + std::to_string(i) +
                                  "]: bit-width must be in [1,8]");
        cfg.p_grid = grid.at("p").get<std::vector<double>>();
        for (std::size_t i = 0; i < cfg.p_grid.size(); ++i)
            if (cfg.p_grid[i] < 0.0 || cfg.p_grid[i] > 100.0)
                throw ConfigError("grid.p[" + std::to_string(i) +
                                  "]: pruning rate must be in [0,100]");
        for (const auto& s : grid.value("pruners", json::array({"sensitivity"})))
            cfg.pruners.push_back(rcc::pruner_from_string(s.get<std::string>()));
        cfg.seed = j.value("seed", 0ULL);
        cfg.output = j.value("output", std::string("out"));
        if (j.contains("formats"))
            cfg.formats = j.at("formats").get<std::vector<std::string>>();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

// ---- stage helpers ------------------------------------------------------------

rcc::TimeSeriesDataset build_dataset(const json& spec) {
    if (spec.contains("csv")) {
        rcc::CsvSchema schema;
        schema.task = rcc::task_from_string(
            spec.value("task", std::string("regression")));
        schema.train_fraction = spec.value("train_fraction", 0.8);
        return rcc::load_csv(spec.at("csv").get<std::string>(), schema);
    }
    const std::string gen = spec.value("generator", std::string("henon"));
    rcc::TimeSeriesDataset ds;
    if (gen == "henon") {
        ds = rcc::gen_henon(spec.value("n_steps", 5000L),
                            spec.value("a", 1.4), spec.value("b", 0.3),
                            spec.value("x0", 0.0), spec.value("y0", 0.0),
                            spec.value("transient", 200L),
                            spec.value("n_test", -1L));
    } else if (gen == "synthetic-classification") {
        ds = rcc::gen_synthetic_classification(
            spec.value("n_classes", 2), spec.value("seq_len", 24L),
            spec.value("n_train", 200L), spec.value("n_test", 100L),
            spec.value("seed", 0ULL), spec.value("noise", 0.1));
    } else {
        throw ConfigError("dataset.generator: unknown generator '" + gen + "'");
    }
    if (spec.value("normalize", true)) ds = rcc::normalize(ds);
    return ds;
}

rcc::Hyperparams hyperparams_from_json(const json& m) {
    rcc::Hyperparams hp;
    hp.spectral_radius = m.value("spectral_radius", 0.9);
    hp.leaking_rate = m.value("leaking_rate", 1.0);
    hp.ncrl = m.value("ncrl", 250L);
    hp.ridge_lambda = m.value("ridge_lambda", 1e-8);
    hp.activation = rcc::activation_from_string(
        m.value("activation", std::string("tanh")));
    return hp;
}

rcc::ReservoirModel train_model(const json& model_spec,
                                const rcc::TimeSeriesDataset& ds,
                                std::uint64_t seed, unsigned jobs) {
    const long n = model_spec.value("n", 50L);
    rcc::Hyperparams hp;
    if (model_spec.contains("search")) {
        const json& s = model_spec.at("search");
        rcc::SearchSpace space;
        const auto result = rcc::random_search(
            space, s.value("n_trials", 100L), ds, n, seed, jobs);
        hp = result.best;
    } else {
        hp = hyperparams_from_json(model_spec);
    }
    rcc::ReservoirModel m = rcc::init_reservoir(hp, n, ds.d_in(), seed);
    rcc::train(m, ds);
    return m;
}

std::string rtl_file_stem(const rcc::AcceleratorConfig& cfg,
                          const std::string& dataset_id) {
    std::string id = dataset_id;
    for (char& ch : id)
        if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
    return id + "_" + to_string(cfg.pruner) + "_q" + std::to_string(cfg.q) +
           "_p" + std::to_string(static_cast<long>(cfg.p));
}

int run_pipeline(const RunConfig& cfg, unsigned jobs) {
    const fs::path out(cfg.output);
    ensure_dir(out / "data");
    ensure_dir(out / "train");
    ensure_dir(out / "dse");
    ensure_dir(out / "rtl");
    ensure_dir(out / "report");

    const rcc::TimeSeriesDataset ds = build_dataset(cfg.dataset);
    rcc::write_json_file(rcc::dataset_to_json(ds),
                         (out / "data" / "dataset.json").string());

    const rcc::ReservoirModel model = train_model(cfg.model, ds, cfg.seed, jobs);
    rcc::write_json_file(rcc::model_to_json(model),
                         (out / "train" / "model.json").string());

    rcc::DseOptions opts;
    opts.seed = cfg.seed;
    opts.jobs = jobs;
    opts.on_cell = [](const rcc::AcceleratorConfig& c) {
        std::ostringstream line;
        line << "q=" << c.q << " p=" << c.p << " pruner=" << to_string(c.pruner);
        if (c.failed)
            line << " failed=" << c.error;
        else
            line << " perf=" << c.perf.value;
        std::cout << line.str() << "\n";
    };
    rcc::DseResult result =
        rcc::explore(model, ds, cfg.q_grid, cfg.p_grid, cfg.pruners, opts);
    rcc::attach_costs(result);
    rcc::write_json_file(rcc::dse_to_json(result),
                         (out / "dse" / "result.json").string());

    for (const rcc::AcceleratorConfig& c : result.configs) {
        if (c.failed || !c.model) continue;
        const std::string stem = rtl_file_stem(c, ds.id);
        const rcc::Netlist net = rcc::lower(*c.model, stem);
        rcc::write_text_file(rcc::emit_verilog(net),
                             (out / "rtl" / (stem + ".v")).string());
    }

    for (const std::string& format : cfg.formats)
        rcc::write_text_file(
            rcc::report(result, format),
            (out / "report" / ("report." + format)).string());

    long failed = 0;
    for (const auto& c : result.configs)
        if (c.failed) ++failed;
    if (failed > 0) {
        std::cerr << failed << " grid cell(s) failed:\n";
        for (const auto& c : result.configs)
            if (c.failed)
                std::cerr << "  q=" << c.q << " p=" << c.p
                          << " pruner=" << to_string(c.pruner) << ": "
                          << c.error << "\n";
        return kExitPartialFailure;
    }
    return 0;
}

std::vector<rcc::PrunerKind> parse_pruners(const std::vector<std::string>& v) {
    std::vector<rcc::PrunerKind> out;
    for (const auto& s : v) out.push_back(rcc::pruner_from_string(s));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reservoir-computing compression and accelerator toolkit"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    std::uint64_t seed = 0;
    unsigned jobs = rcc::default_jobs();
    std::string format = "csv";
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--jobs", jobs, "Worker thread count");
    app.add_option("--format", format, "Report format (csv|json)")
        ->check(CLI::IsMember({"csv", "json"}));

    // run
    auto* cmd_run = app.add_subcommand("run", "Full pipeline from a config file");
    std::string config_path;
    cmd_run->add_option("--config", config_path, "Experiment config JSON")
        ->required();

    // gen-data
    auto* cmd_gen = app.add_subcommand("gen-data", "Generate or import a dataset");
    std::string gen_kind = "henon";
    long gen_steps = 5000;
    int gen_classes = 2;
    long gen_seq_len = 24, gen_train = 200, gen_test = 100;
    std::string gen_csv;
    std::string gen_task = "regression";
    bool no_normalize = false;
    cmd_gen->add_option("--generator", gen_kind,
                        "henon | synthetic-classification | csv");
    cmd_gen->add_option("--n-steps", gen_steps, "Henon series length");
    cmd_gen->add_option("--classes", gen_classes, "Synthetic class count");
    cmd_gen->add_option("--seq-len", gen_seq_len, "Synthetic sequence length");
    cmd_gen->add_option("--n-train", gen_train, "Training sequences");
    cmd_gen->add_option("--n-test", gen_test, "Test sequences");
    cmd_gen->add_option("--csv", gen_csv, "CSV input path");
    cmd_gen->add_option("--task", gen_task, "CSV task kind");
    cmd_gen->add_flag("--no-normalize", no_normalize, "Skip normalization");

    // tune
    auto* cmd_tune = app.add_subcommand("tune", "Hyperparameter random search");
    long tune_trials = 100;
    long tune_n = 50;
    cmd_tune->add_option("--trials", tune_trials, "Number of random trials");
    cmd_tune->add_option("--n", tune_n, "Reservoir size");

    // train
    auto* cmd_train = app.add_subcommand("train", "Train a float reservoir model");
    long train_n = 50;
    double train_sr = 0.9, train_lr = 1.0, train_lambda = 1e-8;
    long train_ncrl = 250;
    std::string train_act = "tanh";
    std::string hp_file;
    cmd_train->add_option("--n", train_n, "Reservoir size");
    cmd_train->add_option("--sr", train_sr, "Spectral radius");
    cmd_train->add_option("--lr", train_lr, "Leaking rate");
    cmd_train->add_option("--ncrl", train_ncrl, "Reservoir nonzeros");
    cmd_train->add_option("--lambda", train_lambda, "Ridge coefficient");
    cmd_train->add_option("--activation", train_act, "tanh | hardtanh");
    cmd_train->add_option("--hyperparams", hp_file,
                          "Hyperparameters JSON from `tune`");

    // quantize
    auto* cmd_quant = app.add_subcommand("quantize", "Quantize a trained model");
    int quant_q = 8;
    cmd_quant->add_option("--q", quant_q, "Bit-width")->check(CLI::Range(1, 8));

    // sensitivity
    auto* cmd_sens = app.add_subcommand(
        "sensitivity", "Bit-flip sensitivity scores for a quantized model");
    int sens_q = 8;
    cmd_sens->add_option("--q", sens_q, "Bit-width of the quantized model");

    // prune
    auto* cmd_prune = app.add_subcommand("prune", "Prune a quantized model");
    int prune_q = 8;
    double prune_p = 0.0;
    std::string prune_report;
    cmd_prune->add_option("--q", prune_q, "Bit-width of the quantized model");
    cmd_prune->add_option("--p", prune_p, "Pruning rate percent")
        ->check(CLI::Range(0.0, 100.0));
    cmd_prune->add_option("--report", prune_report,
                          "Sensitivity report JSON (default: sensitivity stage)");

    // dse
    auto* cmd_dse = app.add_subcommand("dse", "Design-space exploration grid");
    std::vector<int> dse_q{4, 6, 8};
    std::vector<double> dse_p{15, 30, 45, 60, 75, 90};
    std::vector<std::string> dse_pruners{"sensitivity"};
    cmd_dse->add_option("--q", dse_q, "Quantization grid")->delimiter(',');
    cmd_dse->add_option("--p", dse_p, "Pruning-rate grid")->delimiter(',');
    cmd_dse->add_option("--pruners", dse_pruners, "Pruner list")->delimiter(',');

    // emit-rtl
    auto* cmd_rtl = app.add_subcommand("emit-rtl",
                                       "Lower a quantized model to Verilog");
    std::string rtl_model;
    std::string rtl_name = "rc_accel";
    cmd_rtl->add_option("--model", rtl_model, "Quantized-model JSON")->required();
    cmd_rtl->add_option("--module-name", rtl_name, "Verilog module name");

    // report
    auto* cmd_report = app.add_subcommand("report", "Render a DSE result");
    std::string report_input;
    cmd_report->add_option("--input", report_input, "DseResult JSON")->required();

    CLI11_PARSE(app, argc, argv);

    const fs::path out(out_dir);
    try {
        if (cmd_run->parsed()) {
            RunConfig cfg;
            try {
                cfg = load_config(config_path);
            } catch (const ConfigError& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return kExitConfigError;
            }
            if (app.count("--out")) cfg.output = out_dir;
            if (app.count("--seed")) cfg.seed = seed;
            return run_pipeline(cfg, jobs);
        }

        if (cmd_gen->parsed()) {
            json spec;
            if (gen_kind == "csv") {
                spec = {{"csv", gen_csv}, {"task", gen_task}};
            } else if (gen_kind == "henon") {
                spec = {{"generator", "henon"}, {"n_steps", gen_steps}};
            } else {
                spec = {{"generator", "synthetic-classification"},
                        {"n_classes", gen_classes},
                        {"seq_len", gen_seq_len},
                        {"n_train", gen_train},
                        {"n_test", gen_test},
                        {"seed", seed}};
            }
            spec["normalize"] = !no_normalize;
            const auto ds = build_dataset(spec);
            ensure_dir(out / "data");
            rcc::write_json_file(rcc::dataset_to_json(ds),
                                 (out / "data" / "dataset.json").string());
            return 0;
        }

        if (cmd_tune->parsed()) {
            const auto ds = rcc::dataset_from_json(
                rcc::read_json_file((out / "data" / "dataset.json").string()));
            const auto result = rcc::random_search(rcc::SearchSpace{},
                                                   tune_trials, ds, tune_n,
                                                   seed, jobs);
            ensure_dir(out / "tune");
            json j = {{"schema_version", 1},
                      {"kind", "hyperparams"},
                      {"seed", seed},
                      {"n", tune_n},
                      {"spectral_radius", result.best.spectral_radius},
                      {"leaking_rate", result.best.leaking_rate},
                      {"ncrl", result.best.ncrl},
                      {"ridge_lambda", result.best.ridge_lambda},
                      {"activation", to_string(result.best.activation)},
                      {"validation_perf", result.best_perf.value}};
            rcc::write_json_file(j, (out / "tune" / "hyperparams.json").string());
            return 0;
        }

        if (cmd_train->parsed()) {
            const auto ds = rcc::dataset_from_json(
                rcc::read_json_file((out / "data" / "dataset.json").string()));
            json model_spec;
            if (!hp_file.empty()) {
                model_spec = rcc::read_json_file(hp_file);
            } else {
                model_spec = {{"spectral_radius", train_sr},
                              {"leaking_rate", train_lr},
                              {"ncrl", train_ncrl},
                              {"ridge_lambda", train_lambda},
                              {"activation", train_act}};
            }
            model_spec["n"] = train_n;
            const auto model = train_model(model_spec, ds, seed, jobs);
            ensure_dir(out / "train");
            rcc::write_json_file(rcc::model_to_json(model),
                                 (out / "train" / "model.json").string());
            return 0;
        }

        if (cmd_quant->parsed()) {
            const auto ds = rcc::dataset_from_json(
                rcc::read_json_file((out / "data" / "dataset.json").string()));
            const auto model = rcc::model_from_json(
                rcc::read_json_file((out / "train" / "model.json").string()));
            auto qm = rcc::quantize_model(model, quant_q);
            // Same baseline definition as the grid stage: the readout is
            // refit to the integer states it reads.
            rcc::retrain_readout(qm, ds, model.hp.ridge_lambda);
            ensure_dir(out / "quantize");
            rcc::write_json_file(
                rcc::quantized_model_to_json(qm),
                (out / "quantize" / ("model_q" + std::to_string(quant_q) + ".json"))
                    .string());
            return 0;
        }

        if (cmd_sens->parsed()) {
            const auto ds = rcc::dataset_from_json(
                rcc::read_json_file((out / "data" / "dataset.json").string()));
            const auto qm = rcc::quantized_model_from_json(rcc::read_json_file(
                (out / "quantize" / ("model_q" + std::to_string(sens_q) + ".json"))
                    .string()));
            const auto report =
                rcc::compute_sensitivity(qm, rcc::make_calibration_set(ds), jobs);
            ensure_dir(out / "sensitivity");
            rcc::write_json_file(
                rcc::report_to_json(report),
                (out / "sensitivity" /
                 ("report_q" + std::to_string(sens_q) + ".json"))
                    .string());
            return 0;
        }

        if (cmd_prune->parsed()) {
            const auto qm = rcc::quantized_model_from_json(rcc::read_json_file(
                (out / "quantize" / ("model_q" + std::to_string(prune_q) + ".json"))
                    .string()));
            const std::string report_path =
                prune_report.empty()
                    ? (out / "sensitivity" /
                       ("report_q" + std::to_string(prune_q) + ".json"))
                          .string()
                    : prune_report;
            const auto rep = rcc::report_from_json(rcc::read_json_file(report_path));
            auto pruned = rcc::prune(qm, rep.ranking, prune_p);
            if (prune_p > 0.0) {
                const auto ds = rcc::dataset_from_json(rcc::read_json_file(
                    (out / "data" / "dataset.json").string()));
                const auto model = rcc::model_from_json(rcc::read_json_file(
                    (out / "train" / "model.json").string()));
                rcc::retrain_readout(pruned, ds, model.hp.ridge_lambda);
            }
            ensure_dir(out / "prune");
            rcc::write_json_file(
                rcc::quantized_model_to_json(pruned),
                (out / "prune" /
                 ("model_q" + std::to_string(prune_q) + "_p" +
                  std::to_string(static_cast<long>(prune_p)) + ".json"))
                    .string());
            return 0;
        }

        if (cmd_dse->parsed()) {
            const auto ds = rcc::dataset_from_json(
                rcc::read_json_file((out / "data" / "dataset.json").string()));
            const auto model = rcc::model_from_json(
                rcc::read_json_file((out / "train" / "model.json").string()));
            rcc::DseOptions opts;
            opts.seed = seed;
            opts.jobs = jobs;
            opts.on_cell = [](const rcc::AcceleratorConfig& c) {
                std::cout << "q=" << c.q << " p=" << c.p
                          << " pruner=" << to_string(c.pruner)
                          << (c.failed ? " failed=" + c.error
                                       : " perf=" + std::to_string(c.perf.value))
                          << "\n";
            };
            auto result = rcc::explore(model, ds, dse_q, dse_p,
                                       parse_pruners(dse_pruners), opts);
            rcc::attach_costs(result);
            ensure_dir(out / "dse");
            rcc::write_json_file(rcc::dse_to_json(result),
                                 (out / "dse" / "result.json").string());
            long failed = 0;
            for (const auto& c : result.configs)
                if (c.failed) ++failed;
            return failed > 0 ? kExitPartialFailure : 0;
        }

        if (cmd_rtl->parsed()) {
            const auto qm = rcc::quantized_model_from_json(
                rcc::read_json_file(rtl_model));
            const auto net = rcc::lower(qm, rtl_name);
            ensure_dir(out / "rtl");
            rcc::write_text_file(rcc::emit_verilog(net),
                                 (out / "rtl" / (rtl_name + ".v")).string());
            rcc::write_json_file(rcc::netlist_to_json(net),
                                 (out / "rtl" / (rtl_name + ".netlist.json")).string());
            rcc::write_json_file(rcc::cost_to_json(rcc::estimate_cost(net)),
                                 (out / "rtl" / (rtl_name + ".cost.json")).string());
            return 0;
        }

        if (cmd_report->parsed()) {
            const json j = rcc::read_json_file(report_input);
            rcc::DseResult result;
            result.dataset_id = j.at("dataset").get<std::string>();
            result.seed = j.at("seed").get<std::uint64_t>();
            result.q_grid = j.at("q_grid").get<std::vector<int>>();
            result.p_grid = j.at("p_grid").get<std::vector<double>>();
            for (const auto& s : j.at("pruners"))
                result.pruners.push_back(
                    rcc::pruner_from_string(s.get<std::string>()));
            for (const auto& c : j.at("configs")) {
                rcc::AcceleratorConfig cfg;
                cfg.q = c.at("q").get<int>();
                cfg.p = c.at("p").get<double>();
                cfg.pruner = rcc::pruner_from_string(c.at("pruner").get<std::string>());
                cfg.failed = c.at("failed").get<bool>();
                if (cfg.failed) {
                    cfg.error = c.value("error", std::string());
                } else {
                    cfg.perf.kind = c.at("perf").at("kind") == "accuracy"
                                        ? rcc::Performance::Kind::accuracy
                                        : rcc::Performance::Kind::rmse;
                    cfg.perf.value = c.at("perf").at("value").get<double>();
                    cfg.base_perf.kind = cfg.perf.kind;
                    cfg.base_perf.value = c.at("base_perf").at("value").get<double>();
                }
                if (c.contains("cost")) {
                    rcc::CostEstimate cost;
                    cost.n_adders = c.at("cost").at("n_adders").get<long>();
                    cost.n_comparators = c.at("cost").at("n_comparators").get<long>();
                    cost.n_registers = c.at("cost").at("n_registers").get<long>();
                    cost.n_shift_terms = c.at("cost").at("n_shift_terms").get<long>();
                    cost.est_luts = c.at("cost").at("est_luts").get<long>();
                    cost.critical_path_levels =
                        c.at("cost").at("critical_path_levels").get<long>();
                    cfg.cost = cost;
                }
                result.configs.push_back(std::move(cfg));
            }
            if (result.configs.empty())
                std::cerr << "warning: empty DSE result\n";
            ensure_dir(out / "report");
            rcc::write_text_file(
                rcc::report(result, format),
                (out / "report" / ("report." + format)).string());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
