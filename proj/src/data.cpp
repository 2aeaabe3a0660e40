#include "conceptvae/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

constexpr std::array<std::string_view, kKpiCount> kColumns = {
    "call_drop_rate", "total_drops", "enodeb_drops", "mme_drops", "total_call_attempts"};

constexpr std::array<std::string_view, kKpiCount> kDisplayNames = {
    "Call Drop Rate", "Total Drops", "eNodeB Drops", "MME Drops", "Total Call Attempts"};

constexpr std::string_view kNormStatsTag = "conceptvae-normstats v1";

}  // namespace

std::string_view kpi_column(std::size_t index) { return kColumns.at(index); }
std::string_view kpi_display_name(std::size_t index) { return kDisplayNames.at(index); }

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

std::int64_t parse_date(std::string_view text) {
    text = text::trim(text);
    if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
        const auto y = static_cast<int>(text::parse_int(text.substr(0, 4)));
        const auto m = static_cast<unsigned>(text::parse_int(text.substr(5, 2)));
        const auto d = static_cast<unsigned>(text::parse_int(text.substr(8, 2)));
        const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                              std::chrono::day{d}};
        if (!ymd.ok()) {
            throw std::invalid_argument("invalid calendar date '" + std::string(text) + "'");
        }
        return std::chrono::sys_days{ymd}.time_since_epoch().count();
    }
    return text::parse_int(text);
}

Dataset parse_records(std::istream& in) {
    std::string line;
    if (!text::next_line(in, line)) {
        throw ParseError(1, "missing header row");
    }
    if (line != kRecordHeader) {
        throw ParseError(1, "unexpected header '" + line + "'");
    }

    Dataset records;
    std::set<std::pair<std::string, std::int64_t>> seen;
    std::size_t line_no = 1;
    while (text::next_line(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) {
            continue;
        }
        const auto fields = text::split(line, ',');
        if (fields.size() != 2 + kKpiCount) {
            throw ParseError(line_no, "expected " + std::to_string(2 + kKpiCount) +
                                          " fields, got " + std::to_string(fields.size()));
        }
        KpiRecord record;
        record.element_id = std::string(text::trim(fields[0]));
        if (record.element_id.empty()) {
            throw ParseError(line_no, "empty element_id");
        }
        try {
            record.date = parse_date(fields[1]);
            for (std::size_t k = 0; k < kKpiCount; ++k) {
                record.kpis[k] = text::parse_double(fields[2 + k]);
            }
        } catch (const std::invalid_argument& e) {
            throw ParseError(line_no, e.what());
        }
        for (std::size_t k = 0; k < kKpiCount; ++k) {
            if (!std::isfinite(record.kpis[k]) || record.kpis[k] < 0.0) {
                throw ValidationError("line " + std::to_string(line_no) + ": " +
                                      std::string(kColumns[k]) +
                                      " must be finite and non-negative");
            }
        }
        if (!seen.emplace(record.element_id, record.date).second) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": duplicate (element_id, date) = (" + record.element_id +
                                  ", " + std::to_string(record.date) + ")");
        }
        records.push_back(std::move(record));
    }
    return records;
}

Dataset load_records(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return parse_records(in);
}

void write_records(std::ostream& out, std::span<const KpiRecord> records) {
    out << kRecordHeader << '\n';
    for (const auto& r : records) {
        out << r.element_id << ',' << r.date;
        for (double v : r.kpis) {
            out << ',' << text::format_double(v);
        }
        out << '\n';
    }
}

void save_records(const std::filesystem::path& path, std::span<const KpiRecord> records) {
    auto out = text::open_output(path);
    write_records(out, records);
}

NormStats fit_normalization(std::span<const KpiRecord> train) {
    if (train.empty()) {
        throw std::invalid_argument("fit_normalization: empty training set");
    }
    NormStats stats;
    stats.min = train.front().kpis;
    stats.max = train.front().kpis;
    for (const auto& r : train) {
        for (std::size_t k = 0; k < kKpiCount; ++k) {
            stats.min[k] = std::min(stats.min[k], r.kpis[k]);
            stats.max[k] = std::max(stats.max[k], r.kpis[k]);
        }
    }
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        stats.degenerate[k] = !(stats.max[k] > stats.min[k]);
        if (stats.degenerate[k]) {
            std::clog << "warning: KPI " << kColumns[k]
                      << " is constant in the training data; it normalizes to 0\n";
        }
    }
    return stats;
}

KpiVector normalize(const KpiVector& values, const NormStats& stats) {
    KpiVector out{};
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        if (stats.degenerate[k]) {
            out[k] = 0.0;
            continue;
        }
        const double scaled = (values[k] - stats.min[k]) / (stats.max[k] - stats.min[k]);
        out[k] = std::clamp(scaled, 0.0, 1.0);
    }
    return out;
}

void write_norm_stats(std::ostream& out, const NormStats& stats) {
    out << kNormStatsTag << '\n';
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        out << kColumns[k] << '=' << text::format_double(stats.min[k]) << ','
            << text::format_double(stats.max[k]) << '\n';
    }
}

NormStats read_norm_stats(std::istream& in) {
    text::expect_header(in, kNormStatsTag, "norm stats");
    NormStats stats;
    std::array<bool, kKpiCount> found{};
    std::string line;
    while (text::next_line(in, line)) {
        if (text::trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("norm stats: malformed line '" + line + "'");
        }
        const std::string_view key = text::trim(std::string_view(line).substr(0, eq));
        const auto it = std::find(kColumns.begin(), kColumns.end(), key);
        if (it == kColumns.end()) {
            throw std::runtime_error("norm stats: unknown KPI '" + std::string(key) + "'");
        }
        const auto k = static_cast<std::size_t>(it - kColumns.begin());
        const auto values = text::split(std::string_view(line).substr(eq + 1), ',');
        if (values.size() != 2) {
            throw std::runtime_error("norm stats: expected min,max for " + std::string(key));
        }
        stats.min[k] = text::parse_double(values[0]);
        stats.max[k] = text::parse_double(values[1]);
        if (stats.min[k] > stats.max[k]) {
            throw std::runtime_error("norm stats: min > max for " + std::string(key));
        }
        stats.degenerate[k] = !(stats.max[k] > stats.min[k]);
        found[k] = true;
    }
    for (std::size_t k = 0; k < kKpiCount; ++k) {
        if (!found[k]) {
            throw std::runtime_error("norm stats: missing " + std::string(kColumns[k]));
        }
    }
    return stats;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    auto out = text::open_output(path);
    write_norm_stats(out, stats);
}

NormStats load_norm_stats(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read_norm_stats(in);
}

std::vector<ElementRun> consecutive_runs(std::span<const KpiRecord> records) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<const KpiRecord*>> by_element;
    for (const auto& r : records) {
        auto [it, inserted] = by_element.try_emplace(r.element_id);
        if (inserted) {
            order.push_back(r.element_id);
        }
        it->second.push_back(&r);
    }

    std::vector<ElementRun> runs;
    for (const auto& id : order) {
        auto& rows = by_element[id];
        std::stable_sort(rows.begin(), rows.end(),
                         [](const KpiRecord* a, const KpiRecord* b) { return a->date < b->date; });
        ElementRun current{id, {}};
        for (const KpiRecord* row : rows) {
            if (!current.records.empty() && row->date != current.records.back()->date + 1) {
                runs.push_back(std::move(current));
                current = ElementRun{id, {}};
            }
            current.records.push_back(row);
        }
        if (!current.records.empty()) {
            runs.push_back(std::move(current));
        }
    }
    return runs;
}

std::size_t window_count(std::size_t run_length, std::size_t length, std::size_t stride) {
    if (run_length < length) {
        return 0;
    }
    return (run_length - length) / stride + 1;
}

namespace {

SequenceWindow make_window(const ElementRun& run, std::size_t first, std::size_t length,
                           const NormStats& stats) {
    SequenceWindow w;
    w.element_id = run.element_id;
    w.start_date = run.records[first]->date;
    w.values.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(kKpiCount));
    w.raw.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
        const KpiRecord& r = *run.records[first + t];
        const KpiVector n = normalize(r, stats);
        for (std::size_t k = 0; k < kKpiCount; ++k) {
            w.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = n[k];
        }
        w.raw.push_back(r.kpis);
    }
    return w;
}

}  // namespace

std::vector<SequenceWindow> window_sequences(std::span<const KpiRecord> records,
                                             std::size_t length, std::size_t stride,
                                             const NormStats& stats) {
    if (length == 0 || stride == 0) {
        throw std::invalid_argument("window_sequences: length and stride must be >= 1");
    }
    std::vector<SequenceWindow> windows;
    for (const auto& run : consecutive_runs(records)) {
        const std::size_t n = window_count(run.records.size(), length, stride);
        for (std::size_t i = 0; i < n; ++i) {
            windows.push_back(make_window(run, i * stride, length, stats));
        }
    }
    return windows;
}

std::vector<SequenceWindow> run_sequences(std::span<const KpiRecord> records,
                                          const NormStats& stats, std::size_t min_length) {
    std::vector<SequenceWindow> windows;
    for (const auto& run : consecutive_runs(records)) {
        if (run.records.size() >= std::max<std::size_t>(min_length, 1)) {
            windows.push_back(make_window(run, 0, run.records.size(), stats));
        }
    }
    return windows;
}

void prepend_context(std::vector<SequenceWindow>& windows, std::span<const KpiRecord> history,
                     const NormStats& stats, std::size_t max_days) {
    if (max_days == 0) {
        return;
    }
    std::map<std::pair<std::string_view, std::int64_t>, const KpiRecord*> index;
    for (const auto& r : history) {
        index[{r.element_id, r.date}] = &r;
    }
    for (auto& w : windows) {
        std::vector<const KpiRecord*> before;
        while (before.size() < max_days) {
            const auto date = w.start_date - static_cast<std::int64_t>(before.size()) - 1;
            const auto it = index.find({w.element_id, date});
            if (it == index.end()) {
                break;
            }
            before.push_back(it->second);
        }
        if (before.empty()) {
            continue;
        }
        std::reverse(before.begin(), before.end());
        const auto extra = static_cast<Eigen::Index>(before.size());
        Eigen::MatrixXd values(w.values.rows() + extra, w.values.cols());
        values.bottomRows(w.values.rows()) = w.values;
        std::vector<KpiVector> raw;
        for (Eigen::Index i = 0; i < extra; ++i) {
            const auto& r = *before[static_cast<std::size_t>(i)];
            const KpiVector n = normalize(r, stats);
            for (Eigen::Index k = 0; k < values.cols(); ++k) {
                values(i, k) = n[static_cast<std::size_t>(k)];
            }
            raw.push_back(r.kpis);
        }
        raw.insert(raw.end(), w.raw.begin(), w.raw.end());
        w.values = std::move(values);
        w.raw = std::move(raw);
        w.start_date -= extra;
        w.context += before.size();
    }
}

}  // namespace conceptvae
