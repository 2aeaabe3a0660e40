#include "conceptvae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

// Independent streams so that changing the anomaly settings never changes the
// clean part of a dataset.
enum class Stream : std::uint64_t { Layout = 1, Noise = 2, Injection = 3, Profiles = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

constexpr std::array<std::size_t, 3> kInjectable = {
    static_cast<std::size_t>(Kpi::EnodebDrops), static_cast<std::size_t>(Kpi::MmeDrops),
    static_cast<std::size_t>(Kpi::TotalCallAttempts)};

}  // namespace

void SynthConfig::validate() const {
    if (element_count < 1 || days < 1) {
        throw std::invalid_argument("synth: element_count and days must be >= 1");
    }
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) {
        throw std::invalid_argument("synth: anomaly_rate must lie in [0, 1]");
    }
    if (!(anomaly_magnitude > 1.0)) {
        throw std::invalid_argument("synth: anomaly_magnitude must be > 1");
    }
    if (cluster_profiles.empty()) {
        throw std::invalid_argument("synth: at least one cluster profile is required");
    }
    if (!(element_jitter >= 0.0)) {
        throw std::invalid_argument("synth: element_jitter must be >= 0");
    }
    for (const auto& p : cluster_profiles) {
        if (!(p.enodeb_drops >= 0 && p.mme_drops >= 0 && p.call_attempts > 0 &&
              p.noise_cv >= 0)) {
            throw std::invalid_argument("synth: cluster profile levels must be non-negative");
        }
    }
}

std::vector<ClusterProfile> default_cluster_profiles(std::size_t count, std::uint64_t seed) {
    auto rng = make_rng(seed, Stream::Profiles);
    auto log_uniform = [&rng](double lo, double hi) {
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        return std::exp(u(rng));
    };
    std::vector<ClusterProfile> profiles(count);
    for (auto& p : profiles) {
        p.enodeb_drops = log_uniform(2.0, 40.0);
        p.mme_drops = log_uniform(2.0, 40.0);
        p.call_attempts = log_uniform(150.0, 2000.0);
        p.noise_cv = 0.1;
    }
    return profiles;
}

void derive_kpis(KpiVector& kpis) {
    const auto enb = static_cast<std::size_t>(Kpi::EnodebDrops);
    const auto mme = static_cast<std::size_t>(Kpi::MmeDrops);
    const auto total = static_cast<std::size_t>(Kpi::TotalDrops);
    const auto attempts = static_cast<std::size_t>(Kpi::TotalCallAttempts);
    kpis[total] = kpis[enb] + kpis[mme];
    kpis[static_cast<std::size_t>(Kpi::CallDropRate)] =
        100.0 * kpis[total] / std::max(kpis[attempts], 1.0);
}

std::string synth_element_id(int index) {
    std::string digits = std::to_string(index);
    if (digits.size() < 4) {
        digits.insert(0, 4 - digits.size(), '0');
    }
    return "E" + digits;
}

SynthDataset synth_generate(const SynthConfig& config) {
    config.validate();
    const auto k = config.cluster_profiles.size();
    const auto elements = static_cast<std::size_t>(config.element_count);
    const auto days = static_cast<std::size_t>(config.days);

    SynthDataset out;
    out.element_cluster.resize(elements);

    auto layout = make_rng(config.rng_seed, Stream::Layout);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::array<double, 3>> element_levels(elements);
    for (std::size_t e = 0; e < elements; ++e) {
        const std::size_t c = e % k;
        out.element_cluster[e] = c;
        const auto& p = config.cluster_profiles[c];
        const std::array<double, 3> base = {p.enodeb_drops, p.mme_drops, p.call_attempts};
        for (std::size_t j = 0; j < 3; ++j) {
            element_levels[e][j] =
                std::max(0.0, base[j] * (1.0 + config.element_jitter * gauss(layout)));
        }
    }

    auto noise = make_rng(config.rng_seed, Stream::Noise);
    out.records.reserve(elements * days);
    for (std::size_t e = 0; e < elements; ++e) {
        const auto& p = config.cluster_profiles[out.element_cluster[e]];
        for (std::size_t d = 0; d < days; ++d) {
            KpiRecord r;
            r.element_id = synth_element_id(static_cast<int>(e));
            r.date = static_cast<std::int64_t>(d) + 1;
            for (std::size_t j = 0; j < 3; ++j) {
                const double level = element_levels[e][j] * (1.0 + p.noise_cv * gauss(noise));
                r.kpis[kInjectable[j]] = std::round(std::max(0.0, level));
            }
            derive_kpis(r.kpis);
            out.records.push_back(std::move(r));
        }
    }

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        if (out.records[i].date >= config.anomaly_first_day) {
            eligible.push_back(i);
        }
    }
    const auto n_anomalies = static_cast<std::size_t>(
        std::llround(config.anomaly_rate * static_cast<double>(eligible.size())));
    if (n_anomalies == 0) {
        return out;
    }

    auto inject = make_rng(config.rng_seed, Stream::Injection);
    // Partial Fisher-Yates so the chosen cells depend only on the seed.
    for (std::size_t i = 0; i < n_anomalies; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
        std::swap(eligible[i], eligible[pick(inject)]);
    }
    std::vector<std::size_t> chosen(eligible.begin(),
                                    eligible.begin() + static_cast<std::ptrdiff_t>(n_anomalies));
    std::sort(chosen.begin(), chosen.end());
    std::uniform_int_distribution<std::size_t> which(0, kInjectable.size() - 1);
    for (std::size_t idx : chosen) {
        auto& r = out.records[idx];
        const std::size_t kpi = kInjectable[which(inject)];
        r.kpis[kpi] *= config.anomaly_magnitude;
        derive_kpis(r.kpis);
        out.labels.push_back({r.element_id, r.date, kpi});
    }
    return out;
}

void write_labels(std::ostream& out, std::span<const AnomalyLabel> labels) {
    out << kLabelHeader << '\n';
    for (const auto& l : labels) {
        out << l.element_id << ',' << l.date << ',' << l.kpi_index << '\n';
    }
}

std::vector<AnomalyLabel> read_labels(std::istream& in) {
    std::string line;
    if (!text::next_line(in, line) || line != kLabelHeader) {
        throw ParseError(1, "expected label header '" + std::string(kLabelHeader) + "'");
    }
    std::vector<AnomalyLabel> labels;
    std::size_t line_no = 1;
    while (text::next_line(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) {
            continue;
        }
        const auto f = text::split(line, ',');
        if (f.size() != 3) {
            throw ParseError(line_no, "expected 3 fields");
        }
        try {
            AnomalyLabel l{std::string(f[0]), parse_date(f[1]), text::parse_uint(f[2])};
            if (l.kpi_index >= kKpiCount) {
                throw ParseError(line_no, "kpi_index out of range");
            }
            labels.push_back(std::move(l));
        } catch (const std::invalid_argument& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return labels;
}

void save_labels(const std::filesystem::path& path, std::span<const AnomalyLabel> labels) {
    auto out = text::open_output(path);
    write_labels(out, labels);
}

std::vector<AnomalyLabel> load_labels(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read_labels(in);
}

}  // namespace conceptvae
