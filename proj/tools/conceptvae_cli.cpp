// Command-line front end: synth, concepts, train, score, export-latent.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conceptvae/pipeline.hpp"

namespace {

using conceptvae::PipelineConfig;

struct Flag {
    const char* name;
    const char* key;
    const char* help;
};

struct Command {
    CLI::App* app = nullptr;
    std::string config_path;
    std::string write_config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    bool symmetric = false;
};

void add_flags(Command& cmd, const std::vector<Flag>& flags) {
    cmd.app->add_option("--config", cmd.config_path, "key = value config file");
    cmd.app->add_option("--write-config", cmd.write_config,
                        "write the effective config to this path");
    const std::vector<Flag> common = {{"--seed", "seed", "global random seed"}};
    for (const auto& list : {common, flags}) {
        for (const auto& f : list) {
            cmd.options[f.key] = cmd.app->add_option(f.name, cmd.values[f.key], f.help);
        }
    }
}

PipelineConfig resolve(const Command& cmd) {
    PipelineConfig cfg =
        cmd.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(cmd.config_path);
    for (const auto& [key, opt] : cmd.options) {
        if (opt->count() > 0) {
            cfg.set(key, cmd.values.at(key));
        }
    }
    if (cmd.symmetric) {
        cfg.symmetric = true;
    }
    if (!cmd.write_config.empty()) {
        cfg.save(cmd.write_config);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-conditioned VAE anomaly detection for KPI time series"};
    app.require_subcommand(1);

    Command synth, concepts, train, score, export_latent;
    synth.app = app.add_subcommand("synth", "generate a synthetic KPI dataset with labels");
    add_flags(synth, {{"--elements", "elements", "number of network elements"},
                      {"--days", "days", "days per element"},
                      {"--split-day", "split_day", "days after this go to the test file"},
                      {"--clusters", "synth_clusters", "number of generating profiles"},
                      {"--noise-cv", "noise_cv", "relative daily noise"},
                      {"--anomaly-rate", "anomaly_rate", "fraction of cells to perturb"},
                      {"--anomaly-magnitude", "anomaly_magnitude", "spike multiplier"},
                      {"--out", "data", "training CSV path"},
                      {"--test-out", "test_data", "test CSV path"},
                      {"--labels", "labels", "label sidecar path"}});

    concepts.app = app.add_subcommand("concepts", "fit k-means concepts and normalization");
    add_flags(concepts, {{"--data", "data", "training CSV"},
                         {"--k", "k", "number of clusters"},
                         {"--concepts", "concepts", "concept model output"},
                         {"--norm-stats", "norm_stats", "normalization output"},
                         {"--quality", "quality", "per-cluster quality CSV output"}});

    train.app = app.add_subcommand("train", "train the VAE and fit latent statistics");
    add_flags(train, {{"--data", "data", "training CSV"},
                      {"--concepts", "concepts", "concept model"},
                      {"--norm-stats", "norm_stats", "normalization stats"},
                      {"--checkpoint", "checkpoint", "checkpoint output"},
                      {"--history", "history", "history CSV output"},
                      {"--latent-stats", "latent_stats", "latent stats output"},
                      {"--window-length", "window_length", "window length in days"},
                      {"--window-stride", "window_stride", "window stride in days"},
                      {"--val-fraction", "val_fraction", "fraction of elements for validation"},
                      {"--hidden", "hidden", "LSTM hidden width"},
                      {"--layers", "layers", "LSTM layers per side"},
                      {"--free-dims", "free_dims", "standard-normal latent dimensions"},
                      {"--learning-rate", "learning_rate", "Adam step size"},
                      {"--recon-weight", "recon_weight", "reconstruction weight"},
                      {"--batch-size", "batch_size", "windows per batch"},
                      {"--max-epochs", "max_epochs", "epoch limit"},
                      {"--patience", "patience", "early-stopping patience"},
                      {"--burn-in", "stats_burn_in", "window steps skipped by latent stats"}});
    bool verbose = false;
    train.app->add_flag("--verbose", verbose, "print per-epoch losses");

    score.app = app.add_subcommand("score", "score test data and write the anomaly report");
    add_flags(score, {{"--checkpoint", "checkpoint", "trained checkpoint"},
                      {"--concepts", "concepts", "concept model"},
                      {"--norm-stats", "norm_stats", "normalization stats"},
                      {"--latent-stats", "latent_stats", "latent stats"},
                      {"--test-data", "test_data", "CSV to score"},
                      {"--report", "report", "report CSV output"},
                      {"--top-k", "top_k", "keep the k highest-loss days"},
                      {"--loss-floor", "loss_floor", "keep days with loss above this"},
                      {"--z-threshold", "z_threshold", "Z-score flag threshold"},
                      {"--eval-samples", "eval_samples", "latent draws per day"},
                      {"--data", "data", "history CSV that warms up the encoder"},
                      {"--context-days", "score_context", "history days before each test run"}});
    score.app->add_flag("--symmetric", score.symmetric, "flag |z| > threshold");

    export_latent.app =
        app.add_subcommand("export-latent", "export concept-dimension encodings");
    add_flags(export_latent, {{"--checkpoint", "checkpoint", "trained checkpoint"},
                              {"--data", "data", "CSV to encode"},
                              {"--concepts", "concepts", "concept model"},
                              {"--norm-stats", "norm_stats", "normalization stats"},
                              {"--cluster", "cluster", "only this cluster"},
                              {"--out", "latent_csv", "CSV output"},
                              {"--svg-dir", "latent_svg_dir", "directory for SVG scatters"}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    std::string command = "conceptvae";
    try {
        if (*synth.app) {
            command = "synth";
            const auto s = conceptvae::cmd_synth(resolve(synth));
            std::cout << "train_records=" << s.train_records << " test_records=" << s.test_records
                      << " anomalies=" << s.anomalies << '\n';
        } else if (*concepts.app) {
            command = "concepts";
            const auto s = conceptvae::cmd_concepts(resolve(concepts));
            std::cout << "elements=" << s.elements << " k=" << s.k << " inertia=" << s.inertia
                      << '\n';
        } else if (*train.app) {
            command = "train";
            const auto s = conceptvae::cmd_train(resolve(train), verbose ? &std::cerr : nullptr);
            std::cout << "train_windows=" << s.train_windows << " val_windows=" << s.val_windows
                      << " epochs=" << s.epochs << " best_epoch=" << s.best_epoch
                      << " best_val_loss=" << s.best_val_loss << '\n';
        } else if (*score.app) {
            command = "score";
            const auto s = conceptvae::cmd_score(resolve(score));
            std::cout << "scored=" << s.scored << " emitted=" << s.emitted
                      << " flagged=" << s.flagged << '\n';
        } else if (*export_latent.app) {
            command = "export-latent";
            const auto s = conceptvae::cmd_export_latent(resolve(export_latent));
            std::cout << "rows=" << s.rows << " svgs=" << s.svgs.size() << '\n';
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg) {
            if (c == '\n') c = ' ';
        }
        std::cerr << "error: " << command << ": " << msg << '\n';
        return 1;
    }
    return 0;
}
