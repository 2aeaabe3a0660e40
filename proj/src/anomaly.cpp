#include "conceptvae/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

constexpr std::string_view kLatentStatsTag = "conceptvae-latentstats v1";
constexpr std::string_view kLatentStatsColumns = "cluster,dim,mean,std,count,fallback";

DimStats moments(std::span<const double> values, double std_floor) {
    DimStats s;
    s.count = values.size();
    if (values.empty()) {
        s.std = std_floor;
        return s;
    }
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::max(std::sqrt(ss / n), std_floor);
    return s;
}

}  // namespace

const std::array<DimStats, kKpiCount>* LatentStats::find(std::size_t cluster) const {
    const auto it = clusters.find(cluster);
    return it == clusters.end() ? nullptr : &it->second;
}

LatentStats latent_stats_from_samples(
    const std::map<std::size_t, std::array<std::vector<double>, kKpiCount>>& samples,
    std::size_t min_steps, double std_floor) {
    LatentStats stats;
    stats.min_steps = min_steps;
    stats.std_floor = std_floor;
    std::array<std::vector<double>, kKpiCount> pooled;
    for (const auto& [cluster, dims] : samples) {
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            pooled[d].insert(pooled[d].end(), dims[d].begin(), dims[d].end());
        }
    }
    if (pooled[0].empty()) {
        throw std::invalid_argument("fit_latent_stats: no training timesteps");
    }
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        stats.global[d] = moments(pooled[d], std_floor);
    }
    for (const auto& [cluster, dims] : samples) {
        auto& entry = stats.clusters[cluster];
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            if (dims[d].size() < min_steps) {
                entry[d] = stats.global[d];
                entry[d].count = dims[d].size();
                entry[d].fallback = true;
            } else {
                entry[d] = moments(dims[d], std_floor);
            }
        }
    }
    return stats;
}

LatentStats fit_latent_stats(const VaeParams& params, std::span<const SequenceWindow> train,
                             const ConceptModel& concepts, std::size_t min_steps,
                             double std_floor, std::size_t burn_in) {
    if (train.empty()) {
        throw std::invalid_argument("fit_latent_stats: empty training set");
    }
    std::map<Eigen::Index, std::vector<const SequenceWindow*>> by_length;
    for (const auto& w : train) {
        by_length[w.values.rows()].push_back(&w);
    }
    std::map<std::size_t, std::array<std::vector<double>, kKpiCount>> samples;
    constexpr std::size_t kChunk = 256;
    for (const auto& [length, group] : by_length) {
        for (std::size_t start = 0; start < group.size(); start += kChunk) {
            const std::size_t n = std::min(kChunk, group.size() - start);
            const std::span<const SequenceWindow* const> chunk(group.data() + start, n);
            const auto encodings = encode_batch(params, chunk);
            for (std::size_t b = 0; b < n; ++b) {
                const auto c = concepts.cluster_of(chunk[b]->element_id);
                if (!c) {
                    throw std::invalid_argument("fit_latent_stats: element " +
                                                chunk[b]->element_id + " has no cluster");
                }
                auto& dims = samples[*c];
                const auto& mu = encodings[b].mu;
                const auto skip = static_cast<Eigen::Index>(std::max(burn_in, chunk[b]->context));
                for (Eigen::Index t = skip; t < mu.rows(); ++t) {
                    for (std::size_t d = 0; d < kKpiCount; ++d) {
                        dims[d].push_back(mu(t, static_cast<Eigen::Index>(d)));
                    }
                }
            }
        }
    }
    return latent_stats_from_samples(samples, min_steps, std_floor);
}

ZScores zscores(std::span<const double> mu, std::size_t cluster, const LatentStats& stats) {
    if (mu.size() < kKpiCount) {
        throw std::invalid_argument("zscores: need the five concept dimensions");
    }
    ZScores out;
    const auto* entry = stats.find(cluster);
    const auto& dims = entry ? *entry : stats.global;
    out.fallback = entry == nullptr;
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        out.z[d] = (mu[d] - dims[d].mean) / dims[d].std;
    }
    return out;
}

bool AnomalyReport::any_flag() const {
    return std::any_of(flagged.begin(), flagged.end(), [](bool f) { return f; });
}

bool is_flagged(double z, const DetectOptions& options) {
    return options.symmetric ? std::abs(z) > options.z_threshold : z > options.z_threshold;
}

std::pair<std::size_t, bool> resolve_cluster(const SequenceWindow& window,
                                             const ConceptModel& concepts) {
    if (const auto c = concepts.cluster_of(window.element_id)) {
        return {*c, false};
    }
    KpiVector profile{};
    const Eigen::RowVectorXd mean = window.values.colwise().mean();
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        profile[k] = mean(static_cast<Eigen::Index>(k));
    }
    return {assign_concept(profile, concepts), true};
}

std::vector<AnomalyReport> score_windows(const VaeParams& params,
                                         std::span<const SequenceWindow> windows,
                                         const ConceptModel& concepts, const LatentStats& stats,
                                         const DetectOptions& options, std::mt19937_64& rng) {
    std::vector<AnomalyReport> reports;
    for (const auto& w : windows) {
        const auto [cluster, inferred] = resolve_cluster(w, concepts);
        const PriorSpec prior = make_prior(concepts.prior_means.at(cluster), params.latent);
        const EvalResult eval = eval_loss(params, w, prior, options.eval_samples, rng);
        for (std::size_t t = w.context; t < w.length(); ++t) {
            const auto row = static_cast<Eigen::Index>(t);
            AnomalyReport r;
            r.element_id = w.element_id;
            r.date = w.date_at(t);
            r.cluster = cluster;
            r.cluster_inferred = inferred;
            r.kpis = w.raw[t];
            r.kl = eval.step_kl(row);
            r.loglik = eval.step_loglik(row);
            r.loss = eval.step_loss(row);
            std::array<double, kKpiCount> mu{};
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                mu[d] = eval.encoding.mu(row, static_cast<Eigen::Index>(d));
            }
            const ZScores z = zscores(mu, cluster, stats);
            r.zscores = z.z;
            r.stats_fallback = z.fallback;
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                r.flagged[d] = is_flagged(z.z[d], options);
            }
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

std::vector<AnomalyReport> rank_reports(std::vector<AnomalyReport> reports,
                                        const DetectOptions& options) {
    std::sort(reports.begin(), reports.end(), [](const AnomalyReport& a, const AnomalyReport& b) {
        if (a.loss != b.loss) {
            return a.loss > b.loss;
        }
        if (a.element_id != b.element_id) {
            return a.element_id < b.element_id;
        }
        return a.date < b.date;
    });
    for (std::size_t i = 0; i < reports.size(); ++i) {
        reports[i].rank = i + 1;
    }
    if (options.loss_floor) {
        const double floor = *options.loss_floor;
        reports.erase(std::find_if(reports.begin(), reports.end(),
                                   [floor](const AnomalyReport& r) { return !(r.loss > floor); }),
                      reports.end());
    }
    if (options.top_k && reports.size() > *options.top_k) {
        reports.resize(*options.top_k);
    }
    return reports;
}

std::vector<AnomalyReport> detect(const VaeParams& params,
                                  std::span<const SequenceWindow> windows,
                                  const ConceptModel& concepts, const LatentStats& stats,
                                  const DetectOptions& options, std::mt19937_64& rng) {
    return rank_reports(score_windows(params, windows, concepts, stats, options, rng), options);
}

std::vector<std::size_t> attributed_kpis(const AnomalyReport& report, bool symmetric) {
    std::vector<std::size_t> idx;
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        if (report.flagged[d]) {
            idx.push_back(d);
        }
    }
    auto key = [&](std::size_t d) {
        return symmetric ? std::abs(report.zscores[d]) : report.zscores[d];
    };
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
    return idx;
}

std::vector<std::string> attribute(const AnomalyReport& report, bool symmetric) {
    std::vector<std::string> names;
    for (std::size_t d : attributed_kpis(report, symmetric)) {
        names.emplace_back(kpi_display_name(d));
    }
    return names;
}

void write_report_csv(std::ostream& out, std::span<const AnomalyReport> reports,
                      bool symmetric) {
    out << kReportHeader << '\n';
    for (const auto& r : reports) {
        out << r.rank << ',' << r.element_id << ',' << r.date << ',' << r.cluster;
        for (double v : r.kpis) {
            out << ',' << text::format_double(v);
        }
        out << ',' << text::format_double(r.loss) << ',' << text::format_double(r.loglik) << ','
            << text::format_double(r.kl);
        for (double z : r.zscores) {
            out << ',' << text::format_double(z);
        }
        out << ',';
        const auto flagged = attributed_kpis(r, symmetric);
        for (std::size_t i = 0; i < flagged.size(); ++i) {
            out << (i ? ";" : "") << kpi_column(flagged[i]);
        }
        out << '\n';
    }
}

void write_latent_stats(std::ostream& out, const LatentStats& stats) {
    out << kLatentStatsTag << '\n';
    out << "min_steps " << stats.min_steps << '\n';
    out << "std_floor " << text::format_double(stats.std_floor) << '\n';
    out << kLatentStatsColumns << '\n';
    auto row = [&out](const std::string& cluster, std::size_t d, const DimStats& s) {
        out << cluster << ',' << d << ',' << text::format_double(s.mean) << ','
            << text::format_double(s.std) << ',' << s.count << ',' << (s.fallback ? 1 : 0)
            << '\n';
    };
    for (std::size_t d = 0; d < kKpiCount; ++d) {
        row("global", d, stats.global[d]);
    }
    for (const auto& [cluster, dims] : stats.clusters) {
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            row(std::to_string(cluster), d, dims[d]);
        }
    }
}

LatentStats read_latent_stats(std::istream& in) {
    text::expect_header(in, kLatentStatsTag, "latent stats");
    LatentStats stats;
    std::string line;
    auto keyed = [&](std::string_view key) {
        if (!text::next_line(in, line) || line.rfind(std::string(key) + " ", 0) != 0) {
            throw std::runtime_error("latent stats: expected '" + std::string(key) + "' line");
        }
        return std::string_view(line).substr(key.size() + 1);
    };
    stats.min_steps = text::parse_uint(keyed("min_steps"));
    stats.std_floor = text::parse_double(keyed("std_floor"));
    if (!text::next_line(in, line) || line != kLatentStatsColumns) {
        throw std::runtime_error("latent stats: missing column header");
    }
    std::array<bool, kKpiCount> have_global{};
    while (text::next_line(in, line)) {
        if (text::trim(line).empty()) {
            continue;
        }
        const auto f = text::split(line, ',');
        if (f.size() != 6) {
            throw std::runtime_error("latent stats: malformed row '" + line + "'");
        }
        const auto d = text::parse_uint(f[1]);
        if (d >= kKpiCount) {
            throw std::runtime_error("latent stats: dimension out of range");
        }
        DimStats s{text::parse_double(f[2]), text::parse_double(f[3]), text::parse_uint(f[4]),
                   text::parse_uint(f[5]) != 0};
        if (!(s.std > 0.0)) {
            throw std::runtime_error("latent stats: std must be positive");
        }
        if (f[0] == "global") {
            stats.global[d] = s;
            have_global[d] = true;
        } else {
            stats.clusters[text::parse_uint(f[0])][d] = s;
        }
    }
    if (!std::all_of(have_global.begin(), have_global.end(), [](bool b) { return b; })) {
        throw std::runtime_error("latent stats: missing global rows");
    }
    return stats;
}

void save_latent_stats(const std::filesystem::path& path, const LatentStats& stats) {
    auto out = text::open_output(path);
    write_latent_stats(out, stats);
}

LatentStats load_latent_stats(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read_latent_stats(in);
}

}  // namespace conceptvae
