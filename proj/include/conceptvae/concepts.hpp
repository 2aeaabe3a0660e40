#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conceptvae/data.hpp"

namespace conceptvae {

/// Mean normalized KPI vector of one element over its training days.
struct ElementProfile {
    std::string element_id;
    KpiVector profile{};
};

/// Profiles in first-appearance order of the elements.
std::vector<ElementProfile> element_profiles(std::span<const KpiRecord> train,
                                             const NormStats& stats);

/// k-means clusters of element profiles. Centroids live in normalized [0,1]
/// space; `prior_means` is the same matrix mapped affinely onto [-1,1] and is
/// what the VAE uses as the mean of the concept latent dimensions.
struct ConceptModel {
    std::vector<KpiVector> centroids;
    std::vector<KpiVector> prior_means;
    std::map<std::string, std::size_t> assignment;
    double inertia = 0.0;
    /// Inertia after every assignment step of the fit (not persisted).
    std::vector<double> inertia_history;

    std::size_t k() const { return centroids.size(); }
    std::optional<std::size_t> cluster_of(const std::string& element_id) const;
};

struct KMeansOptions {
    std::size_t k = 10;
    std::uint64_t seed = 7;
    int max_iter = 300;
    double tol = 1e-10;
};

/// Lloyd iterations from k-means++ seeding. Throws std::invalid_argument when
/// k is zero or exceeds the number of profiles.
ConceptModel kmeans_fit(std::span<const ElementProfile> profiles, const KMeansOptions& options);

/// Lloyd iterations from explicit starting centroids. Both fits fill `prior_means`.
ConceptModel kmeans_from(std::span<const ElementProfile> profiles,
                         std::vector<KpiVector> initial, int max_iter, double tol);

/// prior_means = 2 * centroids - 1. Throws when a centroid leaves [0,1].
ConceptModel scale_centroids(ConceptModel model);

inline double centroid_to_prior(double c) { return 2.0 * c - 1.0; }
inline double prior_to_centroid(double p) { return (p + 1.0) / 2.0; }

/// Nearest centroid by Euclidean distance, lowest index on ties.
std::size_t assign_concept(const KpiVector& profile, const ConceptModel& model);

double squared_distance(const KpiVector& a, const KpiVector& b);

struct ClusterQuality {
    double inertia = 0.0;
    /// Mean squared distance of the members to their mean (0 for empty clusters).
    std::vector<double> variance;
    std::vector<std::size_t> size;
};

/// Recomputed from the profiles and `model.assignment`; independent of input order.
ClusterQuality cluster_quality(const ConceptModel& model,
                               std::span<const ElementProfile> profiles);

void write_concept_model(std::ostream& out, const ConceptModel& model);
ConceptModel read_concept_model(std::istream& in);
void save_concept_model(const std::filesystem::path& path, const ConceptModel& model);
ConceptModel load_concept_model(const std::filesystem::path& path);

inline constexpr std::string_view kQualityHeader = "cluster,size,variance,sse";
void write_quality_csv(std::ostream& out, const ConceptModel& model,
                       const ClusterQuality& quality);

}  // namespace conceptvae
