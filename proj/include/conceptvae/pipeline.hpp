#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "conceptvae/anomaly.hpp"
#include "conceptvae/concepts.hpp"
#include "conceptvae/synth.hpp"
#include "conceptvae/train.hpp"
#include "conceptvae/vae.hpp"

namespace conceptvae {

/// Every setting of the pipeline. Persisted as flat `key = value` lines; a
/// persisted config reproduces the same artifacts.
struct PipelineConfig {
    std::uint64_t seed = 7;

    // artifact paths
    std::filesystem::path data = "data/train.csv";
    std::filesystem::path test_data = "data/test.csv";
    std::filesystem::path labels = "data/labels.csv";
    std::filesystem::path concepts = "model/concepts.txt";
    std::filesystem::path norm_stats = "model/normstats.txt";
    std::filesystem::path quality = "model/quality.csv";
    std::filesystem::path checkpoint = "model/checkpoint.txt";
    std::filesystem::path history = "model/history.csv";
    std::filesystem::path latent_stats = "model/latentstats.txt";
    std::filesystem::path report = "out/report.csv";
    std::filesystem::path latent_csv = "out/latent.csv";
    std::filesystem::path latent_svg_dir;  // empty: no SVG

    // synthetic data
    int elements = 50;
    int days = 150;
    /// Days after this go to `test_data` and are the only ones that may carry
    /// anomalies; 0 writes everything to `data`.
    int split_day = 0;
    std::size_t synth_clusters = 10;
    double noise_cv = 0.1;
    double element_jitter = 0.02;
    double anomaly_rate = 0.0;
    double anomaly_magnitude = 10.0;

    // concepts
    std::size_t k = 10;
    int kmeans_max_iter = 300;
    double kmeans_tol = 1e-10;

    // windows and split
    std::size_t window_length = 100;
    std::size_t window_stride = 1;
    double val_fraction = 0.05;

    // model and training
    ArchConfig arch;
    LatentConfig latent;
    TrainConfig train;

    // scoring
    double z_threshold = 15.0;
    bool symmetric = false;
    std::optional<std::size_t> top_k;
    std::optional<double> loss_floor;
    std::size_t min_cluster_steps = 30;
    /// Leading steps of each training window left out of the latent statistics.
    std::size_t stats_burn_in = 10;
    /// Days of the element's history in `data` that warm up the encoder
    /// before its first scored day; 0 scores test runs cold.
    std::size_t score_context = 30;
    std::optional<std::size_t> cluster_filter;

    /// Sets one key from its text form; throws std::invalid_argument for
    /// unknown keys or malformed values.
    void set(std::string_view key, std::string_view value);
    /// All keys in a stable order with their current values.
    std::vector<std::pair<std::string, std::string>> entries() const;
    static std::vector<std::string> keys();

    void write(std::ostream& out) const;
    static PipelineConfig read(std::istream& in);
    static PipelineConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    SynthConfig synth_config() const;
    DetectOptions detect_options() const;
};

/// FNV-1a hash of an element id; fixes the train/validation split.
std::uint64_t element_hash(std::string_view element_id);
bool is_validation_element(std::string_view element_id, double val_fraction);

struct SynthSummary {
    std::size_t train_records = 0;
    std::size_t test_records = 0;
    std::size_t anomalies = 0;
};
SynthSummary cmd_synth(const PipelineConfig& cfg);

struct ConceptsSummary {
    std::size_t elements = 0;
    std::size_t k = 0;
    double inertia = 0.0;
};
ConceptsSummary cmd_concepts(const PipelineConfig& cfg);

struct TrainSummary {
    std::size_t train_windows = 0;
    std::size_t val_windows = 0;
    std::size_t epochs = 0;
    int best_epoch = 0;
    double best_val_loss = 0.0;
};
TrainSummary cmd_train(const PipelineConfig& cfg, std::ostream* log = nullptr);

struct ScoreSummary {
    std::size_t scored = 0;
    std::size_t emitted = 0;
    std::size_t flagged = 0;
};
ScoreSummary cmd_score(const PipelineConfig& cfg);

struct ExportSummary {
    std::size_t rows = 0;
    std::vector<std::filesystem::path> svgs;
};
ExportSummary cmd_export_latent(const PipelineConfig& cfg);

/// Scoring windows for a dataset: each element's consecutive runs, whole,
/// optionally preceded by up to `context_days` days of `history`.
std::vector<SequenceWindow> scoring_windows(const Dataset& data, const NormStats& stats,
                                            const Dataset* history = nullptr,
                                            std::size_t context_days = 0);

/// Training and validation windows split by element hash.
struct SplitWindows {
    std::vector<SequenceWindow> train;
    std::vector<SequenceWindow> val;
};
SplitWindows split_windows(const Dataset& data, const NormStats& stats,
                           const PipelineConfig& cfg);

inline constexpr std::string_view kLatentHeader = "element_id,date,cluster,dim,mu,logvar,kpi_value";

/// Minimal SVG scatter of (x, y) points colored by `value` on a blue-red ramp.
void write_scatter_svg(std::ostream& out, std::span<const double> x, std::span<const double> y,
                       std::span<const double> value, std::string_view title,
                       std::string_view x_label, std::string_view y_label);

}  // namespace conceptvae
