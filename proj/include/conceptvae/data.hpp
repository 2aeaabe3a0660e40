#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace conceptvae {

inline constexpr std::size_t kKpiCount = 5;

using KpiVector = std::array<double, kKpiCount>;

/// Column order of the five monitored KPIs. Total Drops is the sum of the
/// eNodeB and MME drop counters; Call Drop Rate is a percentage.
enum class Kpi : std::size_t {
    CallDropRate = 0,
    TotalDrops = 1,
    EnodebDrops = 2,
    MmeDrops = 3,
    TotalCallAttempts = 4,
};

/// snake_case column name used in every CSV artifact.
std::string_view kpi_column(std::size_t index);
/// Human-readable name used in attribution output.
std::string_view kpi_display_name(std::size_t index);

/// Raised when an input file does not follow its documented format.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Raised when parsed content violates a domain invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One network element's KPI vector for one day. `date` is a day ordinal;
/// ISO dates are converted to days since 1970-01-01 on load.
struct KpiRecord {
    std::string element_id;
    std::int64_t date = 0;
    KpiVector kpis{};

    bool operator==(const KpiRecord&) const = default;
};

using Dataset = std::vector<KpiRecord>;

inline constexpr std::string_view kRecordHeader =
    "element_id,date,call_drop_rate,total_drops,enodeb_drops,mme_drops,total_call_attempts";

Dataset parse_records(std::istream& in);
Dataset load_records(const std::filesystem::path& path);
void write_records(std::ostream& out, std::span<const KpiRecord> records);
void save_records(const std::filesystem::path& path, std::span<const KpiRecord> records);

/// Parses "YYYY-MM-DD" or a plain integer ordinal. Throws std::invalid_argument.
std::int64_t parse_date(std::string_view text);

/// Per-KPI min/max fit on training data. A KPI whose min equals its max is
/// degenerate and normalizes to 0.
struct NormStats {
    KpiVector min{};
    KpiVector max{};
    std::array<bool, kKpiCount> degenerate{};

    bool operator==(const NormStats&) const = default;
};

NormStats fit_normalization(std::span<const KpiRecord> train);

/// clip((v - min) / (max - min), 0, 1) per KPI.
KpiVector normalize(const KpiVector& values, const NormStats& stats);
inline KpiVector normalize(const KpiRecord& record, const NormStats& stats) {
    return normalize(record.kpis, stats);
}

void write_norm_stats(std::ostream& out, const NormStats& stats);
NormStats read_norm_stats(std::istream& in);
void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

/// T consecutive days of one element. `values` is T x 5 normalized KPIs;
/// `raw` keeps the original units for reporting.
struct SequenceWindow {
    std::string element_id;
    std::int64_t start_date = 0;
    Eigen::MatrixXd values;
    std::vector<KpiVector> raw;
    /// Leading rows that only warm up the encoder state and are not scored.
    std::size_t context = 0;

    std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
    std::int64_t date_at(std::size_t step) const {
        return start_date + static_cast<std::int64_t>(step);
    }
};

/// Consecutive-date runs of one element, in date order.
struct ElementRun {
    std::string element_id;
    std::vector<const KpiRecord*> records;
};

/// Groups records by element (first-appearance order) and splits each
/// element's date-sorted records wherever a day is missing.
std::vector<ElementRun> consecutive_runs(std::span<const KpiRecord> records);

/// Slides a window of `length` days with the given stride over every
/// consecutive run. Runs shorter than `length` contribute nothing.
std::vector<SequenceWindow> window_sequences(std::span<const KpiRecord> records,
                                             std::size_t length, std::size_t stride,
                                             const NormStats& stats);

/// Each consecutive run of at least `min_length` days as one window. Used for
/// per-day scoring, where every day should be covered exactly once.
std::vector<SequenceWindow> run_sequences(std::span<const KpiRecord> records,
                                          const NormStats& stats,
                                          std::size_t min_length = 1);

/// Prepends to each window up to `max_days` records of the same element from
/// `history` whose dates lead consecutively into the window's first day. The
/// prepended rows are marked as context.
void prepend_context(std::vector<SequenceWindow>& windows, std::span<const KpiRecord> history,
                     const NormStats& stats, std::size_t max_days);

/// Number of windows a run of `run_length` days yields.
std::size_t window_count(std::size_t run_length, std::size_t length, std::size_t stride);

}  // namespace conceptvae
