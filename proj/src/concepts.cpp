#include "conceptvae/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

constexpr std::string_view kConceptTag = "conceptvae-concepts v1";

std::vector<std::size_t> assign_all(std::span<const ElementProfile> profiles,
                                    const std::vector<KpiVector>& centroids, double& inertia) {
    std::vector<std::size_t> labels(profiles.size());
    inertia = 0.0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        std::size_t best = 0;
        double best_d = squared_distance(profiles[i].profile, centroids[0]);
        for (std::size_t j = 1; j < centroids.size(); ++j) {
            const double d = squared_distance(profiles[i].profile, centroids[j]);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    return labels;
}

}  // namespace

std::optional<std::size_t> ConceptModel::cluster_of(const std::string& element_id) const {
    const auto it = assignment.find(element_id);
    if (it == assignment.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<ElementProfile> element_profiles(std::span<const KpiRecord> train,
                                             const NormStats& stats) {
    std::vector<ElementProfile> profiles;
    std::vector<std::size_t> counts;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& r : train) {
        auto [it, inserted] = index.try_emplace(r.element_id, profiles.size());
        if (inserted) {
            profiles.push_back({r.element_id, {}});
            counts.push_back(0);
        }
        const KpiVector n = normalize(r, stats);
        auto& p = profiles[it->second].profile;
        for (std::size_t k = 0; k < kKpiCount; ++k) {
            p[k] += n[k];
        }
        ++counts[it->second];
    }
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        for (auto& v : profiles[i].profile) {
            v /= static_cast<double>(counts[i]);
        }
    }
    return profiles;
}

double squared_distance(const KpiVector& a, const KpiVector& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

ConceptModel kmeans_from(std::span<const ElementProfile> profiles,
                         std::vector<KpiVector> centroids, int max_iter, double tol) {
    if (centroids.empty() || centroids.size() > profiles.size()) {
        throw std::invalid_argument("kmeans: need 1 <= k <= number of profiles");
    }
    const std::size_t k = centroids.size();
    ConceptModel model;
    double inertia = 0.0;
    std::vector<std::size_t> labels = assign_all(profiles, centroids, inertia);
    model.inertia_history.push_back(inertia);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<KpiVector> sums(k, KpiVector{});
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                sums[labels[i]][d] += profiles[i].profile[d];
            }
            ++sizes[labels[i]];
        }

        std::vector<KpiVector> next(k);
        std::vector<bool> taken(profiles.size(), false);
        for (std::size_t j = 0; j < k; ++j) {
            if (sizes[j] == 0) {
                continue;
            }
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                next[j][d] = sums[j][d] / static_cast<double>(sizes[j]);
            }
        }
        // Empty clusters restart at the point farthest from its own centroid.
        for (std::size_t j = 0; j < k; ++j) {
            if (sizes[j] != 0) {
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < profiles.size(); ++i) {
                const double d = squared_distance(profiles[i].profile, next[labels[i]]);
                if (!taken[i] && d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            taken[far] = true;
            next[j] = profiles[far].profile;
        }

        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            shift = std::max(shift, squared_distance(next[j], centroids[j]));
        }
        centroids = std::move(next);
        std::vector<std::size_t> new_labels = assign_all(profiles, centroids, inertia);
        model.inertia_history.push_back(inertia);
        const bool fixpoint = new_labels == labels;
        labels = std::move(new_labels);
        if (fixpoint || std::sqrt(shift) < tol) {
            break;
        }
    }

    model.centroids = std::move(centroids);
    model.inertia = inertia;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        model.assignment[profiles[i].element_id] = labels[i];
    }
    return scale_centroids(std::move(model));
}

ConceptModel kmeans_fit(std::span<const ElementProfile> profiles, const KMeansOptions& options) {
    const std::size_t k = options.k;
    if (k == 0) {
        throw std::invalid_argument("kmeans: k must be >= 1");
    }
    if (k > profiles.size()) {
        throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds the " +
                                    std::to_string(profiles.size()) + " available elements");
    }

    // k-means++ seeding.
    std::mt19937_64 rng(options.seed);
    std::vector<KpiVector> seeds;
    std::uniform_int_distribution<std::size_t> first(0, profiles.size() - 1);
    seeds.push_back(profiles[first(rng)].profile);
    std::vector<double> d2(profiles.size(), std::numeric_limits<double>::infinity());
    while (seeds.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            d2[i] = std::min(d2[i], squared_distance(profiles[i].profile, seeds.back()));
            total += d2[i];
        }
        std::size_t chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            chosen = profiles.size() - 1;
            for (std::size_t i = 0; i < profiles.size(); ++i) {
                if (d2[i] <= 0.0) {
                    continue;
                }
                target -= d2[i];
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            while (d2[chosen] <= 0.0) {
                --chosen;
            }
        } else {
            // All points coincide with existing seeds; duplicates are resolved
            // by the empty-cluster rule.
            chosen = first(rng);
        }
        seeds.push_back(profiles[chosen].profile);
    }
    return kmeans_from(profiles, std::move(seeds), options.max_iter, options.tol);
}

ConceptModel scale_centroids(ConceptModel model) {
    model.prior_means.resize(model.centroids.size());
    for (std::size_t j = 0; j < model.centroids.size(); ++j) {
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            const double c = model.centroids[j][d];
            if (!(c >= 0.0 && c <= 1.0)) {
                throw std::invalid_argument(
                    "scale_centroids: centroid " + std::to_string(j) + " has value " +
                    text::format_double(c) + " outside [0,1]; were the profiles normalized?");
            }
            model.prior_means[j][d] = centroid_to_prior(c);
        }
    }
    return model;
}

std::size_t assign_concept(const KpiVector& profile, const ConceptModel& model) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model.centroids.size(); ++j) {
        const double d = squared_distance(profile, model.centroids[j]);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

ClusterQuality cluster_quality(const ConceptModel& model,
                               std::span<const ElementProfile> profiles) {
    const std::size_t k = model.k();
    ClusterQuality q;
    q.size.assign(k, 0);
    q.variance.assign(k, 0.0);

    // Sorting members by id makes the floating-point sums order independent.
    std::vector<std::vector<const ElementProfile*>> members(k);
    for (const auto& p : profiles) {
        const auto c = model.cluster_of(p.element_id);
        members[c ? *c : assign_concept(p.profile, model)].push_back(&p);
    }
    for (std::size_t j = 0; j < k; ++j) {
        auto& m = members[j];
        std::sort(m.begin(), m.end(), [](const ElementProfile* a, const ElementProfile* b) {
            return a->element_id < b->element_id;
        });
        q.size[j] = m.size();
        if (m.empty()) {
            continue;
        }
        KpiVector mean{};
        for (const auto* p : m) {
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                mean[d] += p->profile[d];
            }
        }
        for (auto& v : mean) {
            v /= static_cast<double>(m.size());
        }
        double sse = 0.0;
        for (const auto* p : m) {
            sse += squared_distance(p->profile, mean);
        }
        q.variance[j] = sse / static_cast<double>(m.size());
        q.inertia += sse;
    }
    return q;
}

void write_concept_model(std::ostream& out, const ConceptModel& model) {
    out << kConceptTag << '\n';
    out << "k " << model.k() << '\n';
    for (std::size_t j = 0; j < model.k(); ++j) {
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            out << (d ? "," : "") << text::format_double(model.centroids[j][d]);
        }
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            const double p = model.prior_means.empty() ? centroid_to_prior(model.centroids[j][d])
                                                       : model.prior_means[j][d];
            out << ',' << text::format_double(p);
        }
        out << '\n';
    }
    out << "inertia " << text::format_double(model.inertia) << '\n';
    out << "assignments " << model.assignment.size() << '\n';
    for (const auto& [id, c] : model.assignment) {
        out << id << ',' << c << '\n';
    }
}

ConceptModel read_concept_model(std::istream& in) {
    text::expect_header(in, kConceptTag, "concept model");
    std::string line;
    auto keyed = [&](std::string_view key) {
        if (!text::next_line(in, line) || line.rfind(std::string(key) + " ", 0) != 0) {
            throw std::runtime_error("concept model: expected '" + std::string(key) + "' line");
        }
        return std::string_view(line).substr(key.size() + 1);
    };

    ConceptModel model;
    const auto k = text::parse_uint(keyed("k"));
    for (std::size_t j = 0; j < k; ++j) {
        if (!text::next_line(in, line)) {
            throw std::runtime_error("concept model: truncated centroid block");
        }
        const auto f = text::split(line, ',');
        if (f.size() != 2 * kKpiCount) {
            throw std::runtime_error("concept model: centroid row needs 10 values");
        }
        KpiVector c{}, p{};
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            c[d] = text::parse_double(f[d]);
            p[d] = text::parse_double(f[kKpiCount + d]);
        }
        model.centroids.push_back(c);
        model.prior_means.push_back(p);
    }
    model.inertia = text::parse_double(keyed("inertia"));
    const auto n = text::parse_uint(keyed("assignments"));
    for (std::size_t i = 0; i < n; ++i) {
        if (!text::next_line(in, line)) {
            throw std::runtime_error("concept model: truncated assignment block");
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw std::runtime_error("concept model: malformed assignment '" + line + "'");
        }
        const auto c = text::parse_uint(std::string_view(line).substr(comma + 1));
        if (c >= k) {
            throw std::runtime_error("concept model: cluster index out of range");
        }
        model.assignment[line.substr(0, comma)] = c;
    }
    return model;
}

void save_concept_model(const std::filesystem::path& path, const ConceptModel& model) {
    auto out = text::open_output(path);
    write_concept_model(out, model);
}

ConceptModel load_concept_model(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read_concept_model(in);
}

void write_quality_csv(std::ostream& out, const ConceptModel& model,
                       const ClusterQuality& quality) {
    out << kQualityHeader << '\n';
    for (std::size_t j = 0; j < model.k(); ++j) {
        out << j << ',' << quality.size[j] << ',' << text::format_double(quality.variance[j])
            << ','
            << text::format_double(quality.variance[j] * static_cast<double>(quality.size[j]))
            << '\n';
    }
}

}  // namespace conceptvae
