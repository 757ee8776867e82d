#include "cdra/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "cdra/error.hpp"

namespace cdra {

SeverityDomain::SeverityDomain() : levels_{0, 1, 2} {}

SeverityDomain::SeverityDomain(std::vector<int> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw Error(ErrorCode::InvalidArgument, "severity domain is empty");
    for (std::size_t i = 1; i < levels_.size(); ++i)
        if (levels_[i] <= levels_[i - 1])
            throw Error(ErrorCode::InvalidArgument, "severity levels must be strictly increasing");
}

std::optional<std::size_t> SeverityDomain::index_of(int level) const {
    auto it = std::lower_bound(levels_.begin(), levels_.end(), level);
    if (it == levels_.end() || *it != level) return std::nullopt;
    return static_cast<std::size_t>(it - levels_.begin());
}

std::string_view to_string(TableSource source) {
    return source == TableSource::Simulated ? "simulated" : "ingested";
}

ObservationTable::ObservationTable(std::vector<FactorId> factors,
                                   std::vector<SeverityDomain> domains, std::string metric_name)
    : factors_(std::move(factors)), domains_(std::move(domains)), metric_name_(std::move(metric_name)) {
    if (factors_.size() != domains_.size())
        throw Error(ErrorCode::InvalidArgument, "one domain per factor column required");
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        if (factors_[i] == metric_name_)
            throw Error(ErrorCode::InvalidArgument, "factor column collides with metric name");
        for (std::size_t j = 0; j < i; ++j)
            if (factors_[i] == factors_[j])
                throw Error(ErrorCode::DuplicateNode, "duplicate column: " + factors_[i]);
    }
}

std::optional<std::size_t> ObservationTable::find_column(std::string_view factor) const {
    auto it = std::find(factors_.begin(), factors_.end(), factor);
    if (it == factors_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - factors_.begin());
}

std::size_t ObservationTable::column_index(std::string_view factor) const {
    if (auto i = find_column(factor)) return *i;
    throw Error(ErrorCode::MissingColumn, "missing column: " + std::string(factor));
}

void ObservationTable::add_row(std::span<const int> levels, double metric) {
    if (levels.size() != factors_.size())
        throw Error(ErrorCode::InvalidArgument, "row width does not match table");
    if (!std::isfinite(metric)) throw Error(ErrorCode::InvalidArgument, "metric must be finite");
    for (std::size_t c = 0; c < levels.size(); ++c) {
        auto idx = domains_[c].index_of(levels[c]);
        if (!idx)
            throw Error(ErrorCode::LevelOutOfDomain,
                        "level " + std::to_string(levels[c]) + " outside domain of " + factors_[c]);
        codes_.push_back(static_cast<std::uint32_t>(*idx));
    }
    metric_.push_back(metric);
}

void ObservationTable::add_row_codes(std::span<const std::uint32_t> codes, double metric) {
    if (codes.size() != factors_.size())
        throw Error(ErrorCode::InvalidArgument, "row width does not match table");
    for (std::size_t c = 0; c < codes.size(); ++c)
        if (codes[c] >= domains_[c].size())
            throw Error(ErrorCode::LevelOutOfDomain, "level index outside domain of " + factors_[c]);
    codes_.insert(codes_.end(), codes.begin(), codes.end());
    metric_.push_back(metric);
}

void ObservationTable::append(const ObservationTable& other) {
    if (other.factors_ != factors_ || other.domains_ != domains_)
        throw Error(ErrorCode::SchemaMismatch, "cannot append tables with different schemas");
    codes_.insert(codes_.end(), other.codes_.begin(), other.codes_.end());
    metric_.insert(metric_.end(), other.metric_.begin(), other.metric_.end());
}

void ObservationTable::reserve(std::size_t rows) {
    codes_.reserve(rows * factors_.size());
    metric_.reserve(rows);
}

double ObservationTable::mean_metric() const {
    if (metric_.empty()) throw Error(ErrorCode::EmptyData, "table has no rows");
    double sum = 0.0;
    for (double m : metric_) sum += m;
    return sum / static_cast<double>(metric_.size());
}

bool ObservationTable::same_data(const ObservationTable& other) const {
    return factors_ == other.factors_ && domains_ == other.domains_ &&
           metric_name_ == other.metric_name_ && codes_ == other.codes_ && metric_ == other.metric_;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

void write_csv(const ObservationTable& table, std::ostream& out) {
    for (const auto& f : table.factors()) out << f << ',';
    out << table.metric_name() << '\n';
    std::string line;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        line.clear();
        for (std::size_t c = 0; c < table.columns(); ++c) {
            line += std::to_string(table.level(r, c));
            line += ',';
        }
        line += format_double(table.metric(r));
        line += '\n';
        out << line;
    }
}

void write_csv(const ObservationTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    write_csv(table, out);
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

IngestResult ingest_metrics(std::istream& in, const IngestSchema& schema) {
    if (schema.factors.size() != schema.domains.size())
        throw Error(ErrorCode::InvalidArgument, "schema needs one domain per factor");
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next_line()) throw Error(ErrorCode::EmptyTable, "input has no header row");

    const auto header = split_fields(line);
    std::unordered_map<std::string_view, std::size_t> position;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (!position.emplace(header[i], i).second)
            throw ParseError(line_no, "duplicate column " + std::string(header[i]));
    std::vector<std::size_t> factor_pos;
    for (const auto& f : schema.factors) {
        auto it = position.find(f);
        if (it == position.end()) throw Error(ErrorCode::SchemaMismatch, "missing factor column: " + f);
        factor_pos.push_back(it->second);
    }
    auto metric_it = position.find(schema.metric);
    if (metric_it == position.end())
        throw Error(ErrorCode::SchemaMismatch, "missing metric column: " + schema.metric);
    const std::size_t metric_pos = metric_it->second;

    IngestResult result{ObservationTable(schema.factors, schema.domains, schema.metric), 0};
    result.table.source = TableSource::Ingested;
    std::vector<int> levels(schema.factors.size());
    while (next_line()) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size()));
        bool in_domain = true;
        for (std::size_t c = 0; c < factor_pos.size(); ++c) {
            const auto field = fields[factor_pos[c]];
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), levels[c]);
            if (ec != std::errc{} || ptr != field.data() + field.size())
                throw ParseError(line_no, "invalid level '" + std::string(field) + "' in column " +
                                              schema.factors[c]);
            if (!schema.domains[c].contains(levels[c])) in_domain = false;
        }
        const auto field = fields[metric_pos];
        double metric = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), metric);
        if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(metric))
            throw ParseError(line_no, "invalid metric '" + std::string(field) + "'");
        if (!in_domain) {
            ++result.rejected;
            continue;
        }
        result.table.add_row(levels, metric);
    }
    if (result.table.empty()) throw Error(ErrorCode::EmptyTable, "no usable rows");
    return result;
}

IngestResult ingest_metrics(const std::filesystem::path& path, const IngestSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open: " + path.string());
    return ingest_metrics(in, schema);
}

}  // namespace cdra
