#ifndef CDRA_TABLE_HPP
#define CDRA_TABLE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdra/graph.hpp"

namespace cdra {

/// Ordered, strictly increasing set of integer severity levels.
class SeverityDomain {
public:
    /// {0, 1, 2}
    SeverityDomain();
    /// Throws InvalidArgument unless non-empty and strictly increasing.
    explicit SeverityDomain(std::vector<int> levels);

    const std::vector<int>& levels() const noexcept { return levels_; }
    std::size_t size() const noexcept { return levels_.size(); }
    int level(std::size_t index) const { return levels_.at(index); }
    std::optional<std::size_t> index_of(int level) const;
    bool contains(int level) const { return index_of(level).has_value(); }

    bool operator==(const SeverityDomain&) const = default;

private:
    std::vector<int> levels_;
};

enum class TableSource { Simulated, Ingested };

std::string_view to_string(TableSource source);

/// Rectangular table of factor levels plus one real metric per row. Levels are
/// stored as indices into each column's domain.
class ObservationTable {
public:
    ObservationTable() = default;
    ObservationTable(std::vector<FactorId> factors, std::vector<SeverityDomain> domains,
                     std::string metric_name = "M");

    const std::vector<FactorId>& factors() const noexcept { return factors_; }
    const std::vector<SeverityDomain>& domains() const noexcept { return domains_; }
    const std::string& metric_name() const noexcept { return metric_name_; }
    std::size_t columns() const noexcept { return factors_.size(); }
    std::size_t rows() const noexcept { return metric_.size(); }
    bool empty() const noexcept { return metric_.empty(); }

    /// Throws MissingColumn.
    std::size_t column_index(std::string_view factor) const;
    std::optional<std::size_t> find_column(std::string_view factor) const;

    std::uint32_t code(std::size_t row, std::size_t col) const { return codes_[row * factors_.size() + col]; }
    int level(std::size_t row, std::size_t col) const { return domains_[col].level(code(row, col)); }
    double metric(std::size_t row) const { return metric_[row]; }
    std::span<const double> metric_column() const noexcept { return metric_; }
    std::span<const std::uint32_t> row_codes(std::size_t row) const {
        return {codes_.data() + row * factors_.size(), factors_.size()};
    }

    /// Appends a row given level values. Throws LevelOutOfDomain or
    /// InvalidArgument (wrong width, non-finite metric).
    void add_row(std::span<const int> levels, double metric);
    /// Appends a row given level indices; no domain check beyond bounds.
    void add_row_codes(std::span<const std::uint32_t> codes, double metric);
    void append(const ObservationTable& other);
    void reserve(std::size_t rows);

    std::optional<std::uint64_t> seed;
    TableSource source = TableSource::Simulated;

    /// Sequential sum / n. Throws EmptyData.
    double mean_metric() const;

    /// Equal schema and identical rows; metadata is ignored.
    bool same_data(const ObservationTable& other) const;

private:
    std::vector<FactorId> factors_;
    std::vector<SeverityDomain> domains_;
    std::string metric_name_ = "M";
    std::vector<std::uint32_t> codes_;
    std::vector<double> metric_;
};

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// Header row of factor names then the metric name; LF line endings.
void write_csv(const ObservationTable& table, std::ostream& out);
void write_csv(const ObservationTable& table, const std::filesystem::path& path);

struct IngestSchema {
    std::vector<FactorId> factors;
    std::vector<SeverityDomain> domains;
    std::string metric = "M";
};

struct IngestResult {
    ObservationTable table;
    std::size_t rejected = 0;
};

/// Reads a metric CSV. Columns may appear in any order and extra columns are
/// ignored. Rows with out-of-domain levels are dropped and counted. Throws
/// ParseError (with line), SchemaMismatch, EmptyTable, IoError.
IngestResult ingest_metrics(std::istream& in, const IngestSchema& schema);
IngestResult ingest_metrics(const std::filesystem::path& path, const IngestSchema& schema);

}  // namespace cdra

#endif  // CDRA_TABLE_HPP
