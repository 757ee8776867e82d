#ifndef CDRA_ESTIMATE_HPP
#define CDRA_ESTIMATE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdra/identify.hpp"
#include "cdra/table.hpp"

namespace cdra {

enum class EstimatorKind { Stratified, Forest };

std::string_view to_string(EstimatorKind kind);
/// Accepts "stratified" and "forest". Throws InvalidArgument.
EstimatorKind parse_estimator(std::string_view name);

/// Bagged regression trees over one-hot encoded strata.
struct ForestOptions {
    std::size_t trees = 100;
    std::size_t max_depth = 8;
    double subsample = 0.8;
    std::size_t min_leaf = 5;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

inline constexpr double kDefaultCoverageFloor = 0.95;

/// S-learner outcome model mu(w, v) = E[M | W = w, V = v].
class OutcomeModel {
public:
    struct Cell {
        double sum = 0.0;
        std::size_t count = 0;
    };

    struct TreeNode {
        // Split tests variable `var` (0 = target, k = k-th adjustment
        // variable) for equality with level index `code`; leaves have var < 0.
        int var = -1;
        std::uint32_t code = 0;
        std::uint32_t left = 0;   // taken when equal
        std::uint32_t right = 0;
        double value = 0.0;
    };
    using Tree = std::vector<TreeNode>;

    const FactorId& target() const noexcept { return target_; }
    const AdjustmentSet& adjustment() const noexcept { return adjustment_; }
    EstimatorKind kind() const noexcept { return kind_; }
    std::size_t rows() const noexcept { return rows_; }
    const std::vector<Tree>& trees() const noexcept { return trees_; }

    /// Prediction at adjustment levels `w` (ordered as adjustment().variables)
    /// and target level `v`. The stratified kind returns nullopt for strata
    /// with no training rows.
    std::optional<double> predict(std::span<const int> w, int v) const;
    /// Training rows in stratum (w, v).
    std::size_t support(std::span<const int> w, int v) const;

    // Internal encoding, exposed for the estimation routines.
    std::uint64_t encode_w(const ObservationTable& data, std::size_t row) const;
    std::uint32_t target_code(const ObservationTable& data, std::size_t row) const {
        return data.code(row, target_col_);
    }
    std::optional<double> predict_code(std::uint64_t w_key, std::uint32_t v_code) const;
    std::size_t support_code(std::uint64_t w_key, std::uint32_t v_code) const;
    const SeverityDomain& target_domain() const noexcept { return target_domain_; }

private:
    friend OutcomeModel fit_outcome_rows(const ObservationTable&, const FactorId&, const AdjustmentSet&,
                                         EstimatorKind, const ForestOptions&,
                                         const std::vector<std::size_t>*);

    double predict_tree(const Tree& tree, std::uint64_t w_key, std::uint32_t v_code) const;
    std::uint64_t encode_levels(std::span<const int> w) const;

    FactorId target_;
    AdjustmentSet adjustment_;
    EstimatorKind kind_ = EstimatorKind::Stratified;
    std::size_t rows_ = 0;
    std::size_t target_col_ = 0;
    SeverityDomain target_domain_;
    std::vector<std::size_t> w_cols_;
    std::vector<SeverityDomain> w_domains_;
    std::vector<std::uint64_t> w_radix_;
    std::vector<std::uint64_t> w_stride_;
    std::unordered_map<std::uint64_t, std::vector<Cell>> cells_;
    std::vector<Tree> trees_;
};

/// Throws EmptyData, MissingColumn, InvalidArgument (target inside the
/// adjustment set).
OutcomeModel fit_outcome_model(const ObservationTable& data, const FactorId& target,
                               const AdjustmentSet& adjustment, EstimatorKind kind,
                               const ForestOptions& forest = {});

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
    double level = 0.95;
    std::size_t replicates = 0;
    /// Standard deviation of the replicate estimates.
    double std_error = 0.0;
};

struct AceEstimate {
    FactorId target;
    int from = 0;
    int to = 1;
    double value = 0.0;
    std::optional<ConfidenceInterval> ci;
    double coverage = 0.0;
    std::size_t n = 0;
    std::vector<FactorId> adjustment;
    EstimatorKind estimator = EstimatorKind::Stratified;
};

/// Averages mu(w, to) - mu(w, from) over the rows of `data`. With the
/// stratified model, rows whose (w, from) or (w, to) stratum has no training
/// rows are skipped; the kept fraction is the coverage. Throws SupportError
/// when coverage falls below `coverage_floor`, LevelOutOfDomain for bad levels.
AceEstimate estimate_ace(const ObservationTable& data, const OutcomeModel& model, int from, int to,
                         double coverage_floor = kDefaultCoverageFloor);

struct BootstrapOptions {
    std::size_t replicates = 200;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Point estimate on the full data plus a percentile interval from row
/// resampling with a refit per replicate. Replicate r draws from the r-th
/// child of `options.seed`. Throws InvalidArgument when replicates < 50.
AceEstimate bootstrap_ci(const ObservationTable& data, const FactorId& target,
                         const AdjustmentSet& adjustment, int from, int to,
                         const BootstrapOptions& options, EstimatorKind kind = EstimatorKind::Stratified,
                         const ForestOptions& forest = {},
                         double coverage_floor = kDefaultCoverageFloor);

struct AceError {
    AceEstimate estimate;
    double truth = 0.0;
    double delta = 0.0;
};

AceError delta_ace(const AceEstimate& estimate, double truth);

}  // namespace cdra

#endif  // CDRA_ESTIMATE_HPP
