#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "conceptvae/data.hpp"

namespace conceptvae {

/// Baseline daily level of the three independent counters of one cluster.
/// Total Drops and Call Drop Rate are derived from them.
struct ClusterProfile {
    double enodeb_drops = 5.0;
    double mme_drops = 5.0;
    double call_attempts = 500.0;
    /// Relative day-to-day noise (coefficient of variation).
    double noise_cv = 0.1;
};

struct SynthConfig {
    int element_count = 50;
    int days = 150;
    std::vector<ClusterProfile> cluster_profiles;
    double anomaly_rate = 0.0;
    double anomaly_magnitude = 10.0;
    std::uint64_t rng_seed = 7;
    /// Day ordinal of the first day that may receive an injected anomaly.
    int anomaly_first_day = 1;
    /// Per-element relative offset from the cluster baseline.
    double element_jitter = 0.02;

    void validate() const;
};

/// `count` profiles with levels drawn log-uniformly, deterministic in `seed`.
std::vector<ClusterProfile> default_cluster_profiles(std::size_t count, std::uint64_t seed);

/// A perturbed (element, day) cell. `kpi_index` names the counter that was
/// multiplied; the derived KPIs of that record are recomputed from it.
struct AnomalyLabel {
    std::string element_id;
    std::int64_t date = 0;
    std::size_t kpi_index = 0;

    bool operator==(const AnomalyLabel&) const = default;
};

struct SynthDataset {
    Dataset records;
    std::vector<AnomalyLabel> labels;
    /// Generating cluster of each element, in element order.
    std::vector<std::size_t> element_cluster;
};

/// Fills Total Drops and Call Drop Rate from the three counters.
void derive_kpis(KpiVector& kpis);

SynthDataset synth_generate(const SynthConfig& config);

inline constexpr std::string_view kLabelHeader = "element_id,date,kpi_index";
void write_labels(std::ostream& out, std::span<const AnomalyLabel> labels);
std::vector<AnomalyLabel> read_labels(std::istream& in);
void save_labels(const std::filesystem::path& path, std::span<const AnomalyLabel> labels);
std::vector<AnomalyLabel> load_labels(const std::filesystem::path& path);

std::string synth_element_id(int index);

}  // namespace conceptvae
