#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conceptvae/concepts.hpp"
#include "conceptvae/data.hpp"
#include "conceptvae/vae.hpp"

namespace conceptvae {

struct DimStats {
    double mean = 0.0;
    double std = 1.0;
    std::size_t count = 0;
    /// True when the cluster had too few timesteps and carries the global values.
    bool fallback = false;

    bool operator==(const DimStats&) const = default;
};

/// Mean and standard deviation of the encoder means of each concept dimension,
/// per cluster and pooled over all clusters.
struct LatentStats {
    std::size_t min_steps = 30;
    double std_floor = 1e-6;
    std::array<DimStats, kKpiCount> global{};
    std::map<std::size_t, std::array<DimStats, kKpiCount>> clusters;

    /// Statistics used for `cluster`; nullopt if the cluster was never seen.
    const std::array<DimStats, kKpiCount>* find(std::size_t cluster) const;
    bool operator==(const LatentStats&) const = default;
};

/// Builds LatentStats from per-cluster samples of concept-dimension means.
/// `samples[c][d]` holds every encoder mean of dimension d seen in cluster c.
LatentStats latent_stats_from_samples(
    const std::map<std::size_t, std::array<std::vector<double>, kKpiCount>>& samples,
    std::size_t min_steps = 30, double std_floor = 1e-6);

/// Encodes every training window and collects per-timestep concept-dimension
/// means, skipping the first `burn_in` steps of each window while the
/// recurrent state settles.
LatentStats fit_latent_stats(const VaeParams& params, std::span<const SequenceWindow> train,
                             const ConceptModel& concepts, std::size_t min_steps = 30,
                             double std_floor = 1e-6, std::size_t burn_in = 0);

struct ZScores {
    KpiVector z{};
    /// True when global statistics were used because the cluster is unknown.
    bool fallback = false;
};

/// z_i = (mu_i - mean(cluster, i)) / std(cluster, i) over the concept dimensions.
/// `mu` holds at least the concept dimensions.
ZScores zscores(std::span<const double> mu, std::size_t cluster, const LatentStats& stats);

struct DetectOptions {
    double z_threshold = 15.0;
    /// Flag |z| > threshold instead of z > threshold.
    bool symmetric = false;
    std::optional<std::size_t> top_k;
    std::optional<double> loss_floor;
    int eval_samples = 10;
};

struct AnomalyReport {
    std::string element_id;
    std::int64_t date = 0;
    std::size_t cluster = 0;
    KpiVector kpis{};
    double loss = 0.0;
    double loglik = 0.0;
    double kl = 0.0;
    KpiVector zscores{};
    std::array<bool, kKpiCount> flagged{};
    std::size_t rank = 0;
    bool stats_fallback = false;
    /// True when the element had no training assignment and was placed by
    /// its nearest centroid.
    bool cluster_inferred = false;

    bool any_flag() const;
};

bool is_flagged(double z, const DetectOptions& options);

/// Cluster of a window's element: the training assignment when present,
/// otherwise the centroid nearest to the window's mean normalized profile.
std::pair<std::size_t, bool> resolve_cluster(const SequenceWindow& window,
                                             const ConceptModel& concepts);

/// Per-day reports for every non-context timestep of every window, before ranking.
std::vector<AnomalyReport> score_windows(const VaeParams& params,
                                         std::span<const SequenceWindow> windows,
                                         const ConceptModel& concepts, const LatentStats& stats,
                                         const DetectOptions& options, std::mt19937_64& rng);

/// Sorts by loss (descending; ties by element_id then date), assigns ranks
/// starting at 1, then applies loss_floor (strict) and top_k.
std::vector<AnomalyReport> rank_reports(std::vector<AnomalyReport> reports,
                                        const DetectOptions& options);

std::vector<AnomalyReport> detect(const VaeParams& params,
                                  std::span<const SequenceWindow> windows,
                                  const ConceptModel& concepts, const LatentStats& stats,
                                  const DetectOptions& options, std::mt19937_64& rng);

/// Flagged KPI indices ordered by descending z (|z| in symmetric mode).
std::vector<std::size_t> attributed_kpis(const AnomalyReport& report, bool symmetric = false);
/// Display names of attributed_kpis.
std::vector<std::string> attribute(const AnomalyReport& report, bool symmetric = false);

inline constexpr std::string_view kReportHeader =
    "rank,element_id,date,cluster,call_drop_rate,total_drops,enodeb_drops,mme_drops,"
    "total_call_attempts,loss,loglik,kl,z0,z1,z2,z3,z4,flags";
void write_report_csv(std::ostream& out, std::span<const AnomalyReport> reports,
                      bool symmetric = false);

void write_latent_stats(std::ostream& out, const LatentStats& stats);
LatentStats read_latent_stats(std::istream& in);
void save_latent_stats(const std::filesystem::path& path, const LatentStats& stats);
LatentStats load_latent_stats(const std::filesystem::path& path);

}  // namespace conceptvae
