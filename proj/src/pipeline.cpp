#include "conceptvae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

using text::format_double;

struct Field {
    std::string key;
    std::function<void(PipelineConfig&, std::string_view)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_as(std::string_view v);

template <>
double parse_as<double>(std::string_view v) {
    return text::parse_double(v);
}
template <>
int parse_as<int>(std::string_view v) {
    return static_cast<int>(text::parse_int(v));
}
template <>
std::size_t parse_as<std::size_t>(std::string_view v) {
    return static_cast<std::size_t>(text::parse_uint(v));
}
template <>
bool parse_as<bool>(std::string_view v) {
    v = text::trim(v);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("not a boolean: '" + std::string(v) + "'");
}
template <>
std::filesystem::path parse_as<std::filesystem::path>(std::string_view v) {
    return std::filesystem::path(std::string(text::trim(v)));
}

std::string show(double v) { return format_double(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::filesystem::path& v) { return v.string(); }

template <typename T>
Field field(std::string key, T PipelineConfig::*member) {
    return {std::move(key),
            [member](PipelineConfig& c, std::string_view v) { c.*member = parse_as<T>(v); },
            [member](const PipelineConfig& c) { return show(c.*member); }};
}

template <typename S, typename T>
Field nested(std::string key, S PipelineConfig::*outer, T S::*member) {
    return {std::move(key),
            [outer, member](PipelineConfig& c, std::string_view v) {
                (c.*outer).*member = parse_as<T>(v);
            },
            [outer, member](const PipelineConfig& c) { return show((c.*outer).*member); }};
}

template <typename T>
Field optional_field(std::string key, std::optional<T> PipelineConfig::*member) {
    return {std::move(key),
            [member](PipelineConfig& c, std::string_view v) {
                v = text::trim(v);
                if (v.empty() || v == "none") {
                    (c.*member).reset();
                } else {
                    c.*member = parse_as<T>(v);
                }
            },
            [member](const PipelineConfig& c) {
                return (c.*member) ? show(*(c.*member)) : std::string("none");
            }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"seed",
                     [](PipelineConfig& c, std::string_view v) { c.seed = text::parse_uint(v); },
                     [](const PipelineConfig& c) { return std::to_string(c.seed); }});
        f.push_back(field("data", &PipelineConfig::data));
        f.push_back(field("test_data", &PipelineConfig::test_data));
        f.push_back(field("labels", &PipelineConfig::labels));
        f.push_back(field("concepts", &PipelineConfig::concepts));
        f.push_back(field("norm_stats", &PipelineConfig::norm_stats));
        f.push_back(field("quality", &PipelineConfig::quality));
        f.push_back(field("checkpoint", &PipelineConfig::checkpoint));
        f.push_back(field("history", &PipelineConfig::history));
        f.push_back(field("latent_stats", &PipelineConfig::latent_stats));
        f.push_back(field("report", &PipelineConfig::report));
        f.push_back(field("latent_csv", &PipelineConfig::latent_csv));
        f.push_back(field("latent_svg_dir", &PipelineConfig::latent_svg_dir));
        f.push_back(field("elements", &PipelineConfig::elements));
        f.push_back(field("days", &PipelineConfig::days));
        f.push_back(field("split_day", &PipelineConfig::split_day));
        f.push_back(field("synth_clusters", &PipelineConfig::synth_clusters));
        f.push_back(field("noise_cv", &PipelineConfig::noise_cv));
        f.push_back(field("element_jitter", &PipelineConfig::element_jitter));
        f.push_back(field("anomaly_rate", &PipelineConfig::anomaly_rate));
        f.push_back(field("anomaly_magnitude", &PipelineConfig::anomaly_magnitude));
        f.push_back(field("k", &PipelineConfig::k));
        f.push_back(field("kmeans_max_iter", &PipelineConfig::kmeans_max_iter));
        f.push_back(field("kmeans_tol", &PipelineConfig::kmeans_tol));
        f.push_back(field("window_length", &PipelineConfig::window_length));
        f.push_back(field("window_stride", &PipelineConfig::window_stride));
        f.push_back(field("val_fraction", &PipelineConfig::val_fraction));
        f.push_back(nested("hidden", &PipelineConfig::arch, &ArchConfig::hidden));
        f.push_back(nested("layers", &PipelineConfig::arch, &ArchConfig::layers));
        f.push_back(nested("logvar_limit", &PipelineConfig::arch, &ArchConfig::logvar_limit));
        f.push_back(nested("free_dims", &PipelineConfig::latent, &LatentConfig::free_dims));
        f.push_back(nested("prior_std", &PipelineConfig::latent, &LatentConfig::prior_std));
        f.push_back(
            nested("learning_rate", &PipelineConfig::train, &TrainConfig::learning_rate));
        f.push_back(nested("recon_weight", &PipelineConfig::train, &TrainConfig::recon_weight));
        f.push_back(nested("batch_size", &PipelineConfig::train, &TrainConfig::batch_size));
        f.push_back(nested("max_epochs", &PipelineConfig::train, &TrainConfig::max_epochs));
        f.push_back(nested("patience", &PipelineConfig::train, &TrainConfig::patience));
        f.push_back(nested("eval_samples", &PipelineConfig::train, &TrainConfig::eval_samples));
        f.push_back(field("z_threshold", &PipelineConfig::z_threshold));
        f.push_back(field("symmetric", &PipelineConfig::symmetric));
        f.push_back(optional_field("top_k", &PipelineConfig::top_k));
        f.push_back(optional_field("loss_floor", &PipelineConfig::loss_floor));
        f.push_back(field("min_cluster_steps", &PipelineConfig::min_cluster_steps));
        f.push_back(field("stats_burn_in", &PipelineConfig::stats_burn_in));
        f.push_back(field("score_context", &PipelineConfig::score_context));
        f.push_back(optional_field("cluster", &PipelineConfig::cluster_filter));
        return f;
    }();
    return table;
}

void require_file(const std::filesystem::path& path, std::string_view artifact) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("missing " + std::string(artifact) + ": '" + path.string() +
                                 "'");
    }
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            try {
                f.set(*this, value);
            } catch (const std::invalid_argument& e) {
                throw std::invalid_argument("config key '" + std::string(key) + "': " + e.what());
            }
            return;
        }
    }
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) {
        out.emplace_back(f.key, f.get(*this));
    }
    return out;
}

std::vector<std::string> PipelineConfig::keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) {
        out.push_back(f.key);
    }
    return out;
}

void PipelineConfig::write(std::ostream& out) const {
    out << "# conceptvae pipeline config\n";
    for (const auto& [k, v] : entries()) {
        out << k << " = " << v << '\n';
    }
}

PipelineConfig PipelineConfig::read(std::istream& in) {
    PipelineConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (text::next_line(in, line)) {
        ++line_no;
        const std::string_view view = text::trim(line);
        if (view.empty() || view.front() == '#') {
            continue;
        }
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        cfg.set(text::trim(view.substr(0, eq)), text::trim(view.substr(eq + 1)));
    }
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read(in);
}

void PipelineConfig::save(const std::filesystem::path& path) const {
    auto out = text::open_output(path);
    write(out);
}

SynthConfig PipelineConfig::synth_config() const {
    SynthConfig s;
    s.element_count = elements;
    s.days = days;
    s.cluster_profiles = default_cluster_profiles(synth_clusters, seed);
    for (auto& p : s.cluster_profiles) {
        p.noise_cv = noise_cv;
    }
    s.anomaly_rate = anomaly_rate;
    s.anomaly_magnitude = anomaly_magnitude;
    s.rng_seed = seed;
    s.anomaly_first_day = split_day > 0 ? split_day + 1 : 1;
    s.element_jitter = element_jitter;
    return s;
}

DetectOptions PipelineConfig::detect_options() const {
    DetectOptions o;
    o.z_threshold = z_threshold;
    o.symmetric = symmetric;
    o.top_k = top_k;
    o.loss_floor = loss_floor;
    o.eval_samples = train.eval_samples;
    return o;
}

std::uint64_t element_hash(std::string_view element_id) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : element_id) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

bool is_validation_element(std::string_view element_id, double val_fraction) {
    const auto bucket = static_cast<double>(element_hash(element_id) % 10000);
    return bucket < val_fraction * 10000.0;
}

SynthSummary cmd_synth(const PipelineConfig& cfg) {
    const SynthDataset ds = synth_generate(cfg.synth_config());
    SynthSummary summary;
    summary.anomalies = ds.labels.size();
    if (cfg.split_day > 0) {
        Dataset train, test;
        for (const auto& r : ds.records) {
            (r.date <= cfg.split_day ? train : test).push_back(r);
        }
        save_records(cfg.data, train);
        save_records(cfg.test_data, test);
        summary.train_records = train.size();
        summary.test_records = test.size();
    } else {
        save_records(cfg.data, ds.records);
        summary.train_records = ds.records.size();
    }
    save_labels(cfg.labels, ds.labels);
    return summary;
}

ConceptsSummary cmd_concepts(const PipelineConfig& cfg) {
    require_file(cfg.data, "training data");
    const Dataset data = load_records(cfg.data);
    const NormStats stats = fit_normalization(data);
    const auto profiles = element_profiles(data, stats);
    KMeansOptions opts;
    opts.k = cfg.k;
    opts.seed = cfg.seed;
    opts.max_iter = cfg.kmeans_max_iter;
    opts.tol = cfg.kmeans_tol;
    const ConceptModel model = kmeans_fit(profiles, opts);
    save_concept_model(cfg.concepts, model);
    save_norm_stats(cfg.norm_stats, stats);
    auto q = text::open_output(cfg.quality);
    write_quality_csv(q, model, cluster_quality(model, profiles));
    return {profiles.size(), model.k(), model.inertia};
}

std::vector<SequenceWindow> scoring_windows(const Dataset& data, const NormStats& stats,
                                            const Dataset* history, std::size_t context_days) {
    auto windows = run_sequences(data, stats, 1);
    if (history != nullptr) {
        prepend_context(windows, *history, stats, context_days);
    }
    return windows;
}

SplitWindows split_windows(const Dataset& data, const NormStats& stats,
                           const PipelineConfig& cfg) {
    Dataset train, val;
    for (const auto& r : data) {
        (is_validation_element(r.element_id, cfg.val_fraction) ? val : train).push_back(r);
    }
    SplitWindows out;
    out.train = window_sequences(train, cfg.window_length, cfg.window_stride, stats);
    out.val = window_sequences(val, cfg.window_length, cfg.window_stride, stats);
    return out;
}

TrainSummary cmd_train(const PipelineConfig& cfg, std::ostream* log) {
    require_file(cfg.data, "training data");
    require_file(cfg.concepts, "concept model");
    require_file(cfg.norm_stats, "norm stats");
    const Dataset data = load_records(cfg.data);
    const ConceptModel concepts = load_concept_model(cfg.concepts);
    const NormStats stats = load_norm_stats(cfg.norm_stats);

    std::vector<std::string> missing;
    for (const auto& r : data) {
        if (!concepts.cluster_of(r.element_id) &&
            std::find(missing.begin(), missing.end(), r.element_id) == missing.end()) {
            missing.push_back(r.element_id);
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size(); ++i) {
            list += (i ? " " : "") + missing[i];
        }
        throw std::runtime_error("elements without a concept assignment: " + list);
    }

    const SplitWindows windows = split_windows(data, stats, cfg);
    if (windows.train.empty()) {
        throw std::runtime_error("no training windows of length " +
                                 std::to_string(cfg.window_length) + " in '" +
                                 cfg.data.string() + "'");
    }
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const TrainResult result =
        train(windows.train, windows.val, concepts, cfg.arch, cfg.latent, tc, log);
    save_checkpoint(cfg.checkpoint, result.params);
    {
        auto out = text::open_output(cfg.history);
        write_history_csv(out, result.history);
    }
    const LatentStats latent =
        fit_latent_stats(result.params, windows.train, concepts, cfg.min_cluster_steps, 1e-6,
                         cfg.stats_burn_in);
    save_latent_stats(cfg.latent_stats, latent);
    return {windows.train.size(), windows.val.size(), result.history.size(), result.best_epoch,
            result.best_val_loss};
}

ScoreSummary cmd_score(const PipelineConfig& cfg) {
    require_file(cfg.checkpoint, "checkpoint");
    require_file(cfg.concepts, "concept model");
    require_file(cfg.norm_stats, "norm stats");
    require_file(cfg.latent_stats, "latent stats");
    require_file(cfg.test_data, "test data");
    const VaeParams params = load_checkpoint(cfg.checkpoint);
    const ConceptModel concepts = load_concept_model(cfg.concepts);
    const NormStats stats = load_norm_stats(cfg.norm_stats);
    const LatentStats latent = load_latent_stats(cfg.latent_stats);
    const Dataset test = load_records(cfg.test_data);

    Dataset history;
    if (cfg.score_context > 0) {
        require_file(cfg.data, "context data");
        history = load_records(cfg.data);
    }
    const auto windows = scoring_windows(test, stats, &history, cfg.score_context);
    const DetectOptions options = cfg.detect_options();
    std::mt19937_64 rng(cfg.seed);
    auto scored = score_windows(params, windows, concepts, latent, options, rng);
    ScoreSummary summary;
    summary.scored = scored.size();
    const auto reports = rank_reports(std::move(scored), options);
    summary.emitted = reports.size();
    summary.flagged = static_cast<std::size_t>(std::count_if(
        reports.begin(), reports.end(), [](const AnomalyReport& r) { return r.any_flag(); }));
    auto out = text::open_output(cfg.report);
    write_report_csv(out, reports, options.symmetric);
    return summary;
}

ExportSummary cmd_export_latent(const PipelineConfig& cfg) {
    require_file(cfg.checkpoint, "checkpoint");
    require_file(cfg.concepts, "concept model");
    require_file(cfg.norm_stats, "norm stats");
    require_file(cfg.data, "data");
    const VaeParams params = load_checkpoint(cfg.checkpoint);
    const ConceptModel concepts = load_concept_model(cfg.concepts);
    const NormStats stats = load_norm_stats(cfg.norm_stats);
    const Dataset data = load_records(cfg.data);
    if (cfg.cluster_filter && *cfg.cluster_filter >= concepts.k()) {
        throw std::invalid_argument("unknown cluster id " + std::to_string(*cfg.cluster_filter) +
                                    " (model has " + std::to_string(concepts.k()) + ")");
    }

    struct Point {
        double mu, logvar, value;
    };
    std::array<std::vector<Point>, kKpiCount> points;
    ExportSummary summary;
    auto out = text::open_output(cfg.latent_csv);
    out << kLatentHeader << '\n';
    for (const auto& w : scoring_windows(data, stats)) {
        const auto [cluster, inferred] = resolve_cluster(w, concepts);
        if (cfg.cluster_filter && cluster != *cfg.cluster_filter) {
            continue;
        }
        const Encoding enc = encode(params, w);
        for (std::size_t t = 0; t < w.length(); ++t) {
            const auto row = static_cast<Eigen::Index>(t);
            for (std::size_t d = 0; d < kKpiCount; ++d) {
                const auto col = static_cast<Eigen::Index>(d);
                out << w.element_id << ',' << w.date_at(t) << ',' << cluster << ',' << d << ','
                    << format_double(enc.mu(row, col)) << ','
                    << format_double(enc.logvar(row, col)) << ',' << format_double(w.raw[t][d])
                    << '\n';
                points[d].push_back({enc.mu(row, col), enc.logvar(row, col), w.raw[t][d]});
                ++summary.rows;
            }
        }
    }

    if (!cfg.latent_svg_dir.empty()) {
        for (std::size_t d = 0; d < kKpiCount; ++d) {
            std::vector<double> x, y, v;
            for (const auto& p : points[d]) {
                x.push_back(p.mu);
                y.push_back(p.logvar);
                v.push_back(p.value);
            }
            const auto path = cfg.latent_svg_dir / ("latent_z" + std::to_string(d) + ".svg");
            auto svg = text::open_output(path);
            std::string title = "z" + std::to_string(d) + " colored by " +
                                std::string(kpi_display_name(d));
            if (cfg.cluster_filter) {
                title += ", cluster " + std::to_string(*cfg.cluster_filter);
            }
            write_scatter_svg(svg, x, y, v, title, "encoder mean", "encoder log-variance");
            summary.svgs.push_back(path);
        }
    }
    return summary;
}

void write_scatter_svg(std::ostream& out, std::span<const double> x, std::span<const double> y,
                       std::span<const double> value, std::string_view title,
                       std::string_view x_label, std::string_view y_label) {
    constexpr double W = 640, H = 480, M = 60;
    auto range = [](std::span<const double> v) {
        if (v.empty()) {
            return std::pair{0.0, 1.0};
        }
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        double a = *lo, b = *hi;
        if (!(b > a)) {
            a -= 0.5;
            b += 0.5;
        }
        return std::pair{a, b};
    };
    const auto [x0, x1] = range(x);
    const auto [y0, y1] = range(y);
    const auto [v0, v1] = range(value);

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    svg << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\""
        << H - M << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 20
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << " [" << x0 << ", " << x1
        << "]</text>\n";
    svg << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
        << ")\" text-anchor=\"middle\" font-size=\"12\">" << y_label << " [" << y0 << ", " << y1
        << "]</text>\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double px = M + (x[i] - x0) / (x1 - x0) * (W - 2 * M);
        const double py = H - M - (y[i] - y0) / (y1 - y0) * (H - 2 * M);
        const double t = (value[i] - v0) / (v1 - v0);
        const int red = static_cast<int>(std::lround(255 * t));
        const int blue = 255 - red;
        svg << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2\" fill=\"rgb(" << red
            << ",40," << blue << ")\" fill-opacity=\"0.6\"/>\n";
    }
    svg << "</svg>\n";
    out << svg.str();
}

}  // namespace conceptvae
