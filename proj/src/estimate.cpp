#include "cdra/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "cdra/error.hpp"
#include "cdra/parallel.hpp"
#include "cdra/rng.hpp"

namespace cdra {

namespace {

// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            carry_ += (sum_ - t) + x;
        else
            carry_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

struct TrainingCell {
    std::vector<std::uint32_t> codes;  // target first, then adjustment variables
    double sum = 0.0;
    double count = 0.0;
};

class TreeGrower {
public:
    TreeGrower(const std::vector<TrainingCell>& cells, const std::vector<std::uint64_t>& levels,
               const ForestOptions& options)
        : cells_(cells), levels_(levels), options_(options) {}

    OutcomeModel::Tree grow() {
        std::vector<std::size_t> all(cells_.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        grow_node(all, 0);
        return std::move(tree_);
    }

private:
    std::uint32_t grow_node(const std::vector<std::size_t>& members, std::size_t depth) {
        double s = 0.0, n = 0.0;
        for (auto i : members) {
            s += cells_[i].sum;
            n += cells_[i].count;
        }
        const auto id = static_cast<std::uint32_t>(tree_.size());
        tree_.push_back({-1, 0, 0, 0, s / n});
        if (depth >= options_.max_depth || members.size() < 2) return id;

        const double min_leaf = static_cast<double>(std::max<std::size_t>(options_.min_leaf, 1));
        const double parent_score = s * s / n;
        double best_gain = 1e-12;
        int best_var = -1;
        std::uint32_t best_code = 0;
        for (std::size_t var = 0; var < levels_.size(); ++var) {
            for (std::uint32_t code = 0; code < levels_[var]; ++code) {
                double sl = 0.0, nl = 0.0;
                for (auto i : members)
                    if (cells_[i].codes[var] == code) {
                        sl += cells_[i].sum;
                        nl += cells_[i].count;
                    }
                const double nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double sr = s - sl;
                const double gain = sl * sl / nl + sr * sr / nr - parent_score;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_var = static_cast<int>(var);
                    best_code = code;
                }
            }
        }
        if (best_var < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : members)
            (cells_[i].codes[best_var] == best_code ? left : right).push_back(i);
        const auto l = grow_node(left, depth + 1);
        const auto r = grow_node(right, depth + 1);
        tree_[id].var = best_var;
        tree_[id].code = best_code;
        tree_[id].left = l;
        tree_[id].right = r;
        return id;
    }

    const std::vector<TrainingCell>& cells_;
    const std::vector<std::uint64_t>& levels_;
    const ForestOptions& options_;
    OutcomeModel::Tree tree_;
};

template <typename Fn>
void for_each_row(const ObservationTable& data, const std::vector<std::size_t>* rows, Fn&& fn) {
    if (rows) {
        for (auto r : *rows) fn(r);
    } else {
        for (std::size_t r = 0; r < data.rows(); ++r) fn(r);
    }
}

std::uint32_t level_code(const SeverityDomain& domain, const FactorId& target, int level) {
    auto c = domain.index_of(level);
    if (!c)
        throw Error(ErrorCode::LevelOutOfDomain,
                    "level " + std::to_string(level) + " outside domain of " + target);
    return static_cast<std::uint32_t>(*c);
}

struct RowEstimate {
    double value = 0.0;
    std::size_t supported = 0;
    std::size_t n = 0;
};

RowEstimate estimate_rows(const ObservationTable& data, const OutcomeModel& model,
                          std::uint32_t from, std::uint32_t to, const std::vector<std::size_t>* rows) {
    // Rows sharing adjustment values contribute identical terms, so the
    // average is taken over distinct strata weighted by row counts. Ordered
    // keys make the summation order independent of row order.
    std::map<std::uint64_t, std::size_t> weight;
    std::size_t n = 0;
    for_each_row(data, rows, [&](std::size_t r) {
        ++weight[model.encode_w(data, r)];
        ++n;
    });
    CompensatedSum total;
    std::size_t supported = 0;
    for (const auto& [key, count] : weight) {
        auto hi = model.predict_code(key, to);
        auto lo = model.predict_code(key, from);
        if (!hi || !lo) continue;
        supported += count;
        total.add(static_cast<double>(count) * (*hi - *lo));
    }
    RowEstimate out;
    out.n = n;
    out.supported = supported;
    if (supported > 0) out.value = total.value() / static_cast<double>(supported);
    return out;
}

double quantile(const std::vector<double>& sorted_values, double q) {
    // Linear interpolation between order statistics (Hyndman-Fan type 7).
    const double h = (static_cast<double>(sorted_values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted_values.size() - 1);
    return sorted_values[lo] + (h - static_cast<double>(lo)) * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace

std::string_view to_string(EstimatorKind kind) {
    return kind == EstimatorKind::Stratified ? "stratified" : "forest";
}

EstimatorKind parse_estimator(std::string_view name) {
    if (name == "stratified") return EstimatorKind::Stratified;
    if (name == "forest") return EstimatorKind::Forest;
    throw Error(ErrorCode::InvalidArgument, "unknown estimator: " + std::string(name));
}

std::uint64_t OutcomeModel::encode_w(const ObservationTable& data, std::size_t row) const {
    std::uint64_t key = 0;
    for (std::size_t j = 0; j < w_cols_.size(); ++j) key += data.code(row, w_cols_[j]) * w_stride_[j];
    return key;
}

double OutcomeModel::predict_tree(const Tree& tree, std::uint64_t w_key, std::uint32_t v_code) const {
    std::size_t node = 0;
    while (tree[node].var >= 0) {
        const auto var = static_cast<std::size_t>(tree[node].var);
        const std::uint64_t code =
            var == 0 ? v_code : (w_key / w_stride_[var - 1]) % w_radix_[var - 1];
        node = code == tree[node].code ? tree[node].left : tree[node].right;
    }
    return tree[node].value;
}

std::optional<double> OutcomeModel::predict_code(std::uint64_t w_key, std::uint32_t v_code) const {
    if (kind_ == EstimatorKind::Forest) {
        CompensatedSum total;
        for (const auto& t : trees_) total.add(predict_tree(t, w_key, v_code));
        return total.value() / static_cast<double>(trees_.size());
    }
    auto it = cells_.find(w_key);
    if (it == cells_.end() || v_code >= it->second.size() || it->second[v_code].count == 0)
        return std::nullopt;
    const auto& cell = it->second[v_code];
    return cell.sum / static_cast<double>(cell.count);
}

std::size_t OutcomeModel::support_code(std::uint64_t w_key, std::uint32_t v_code) const {
    auto it = cells_.find(w_key);
    if (it == cells_.end() || v_code >= it->second.size()) return 0;
    return it->second[v_code].count;
}

std::uint64_t OutcomeModel::encode_levels(std::span<const int> w) const {
    if (w.size() != w_domains_.size())
        throw Error(ErrorCode::InvalidArgument, "expected one level per adjustment variable");
    std::uint64_t key = 0;
    for (std::size_t j = 0; j < w.size(); ++j)
        key += level_code(w_domains_[j], adjustment_.variables[j], w[j]) * w_stride_[j];
    return key;
}

std::optional<double> OutcomeModel::predict(std::span<const int> w, int v) const {
    return predict_code(encode_levels(w), level_code(target_domain_, target_, v));
}

std::size_t OutcomeModel::support(std::span<const int> w, int v) const {
    return support_code(encode_levels(w), level_code(target_domain_, target_, v));
}

OutcomeModel fit_outcome_rows(const ObservationTable& data, const FactorId& target,
                              const AdjustmentSet& adjustment, EstimatorKind kind,
                              const ForestOptions& forest, const std::vector<std::size_t>* rows) {
    const std::size_t n = rows ? rows->size() : data.rows();
    if (n == 0) throw Error(ErrorCode::EmptyData, "cannot fit an outcome model on zero rows");
    OutcomeModel m;
    m.target_ = target;
    m.adjustment_ = adjustment;
    m.kind_ = kind;
    m.rows_ = n;
    m.target_col_ = data.column_index(target);
    m.target_domain_ = data.domains()[m.target_col_];
    for (const auto& w : adjustment.variables) {
        if (w == target)
            throw Error(ErrorCode::InvalidArgument, "adjustment set contains the target " + target);
        m.w_cols_.push_back(data.column_index(w));
        m.w_domains_.push_back(data.domains()[m.w_cols_.back()]);
        m.w_radix_.push_back(m.w_domains_.back().size());
    }
    m.w_stride_.assign(m.w_cols_.size(), 1);
    std::uint64_t span = 1;
    for (std::size_t j = m.w_cols_.size(); j-- > 0;) {
        m.w_stride_[j] = span;
        if (span > std::numeric_limits<std::uint64_t>::max() / m.w_radix_[j])
            throw Error(ErrorCode::InvalidArgument, "adjustment strata exceed 64-bit encoding");
        span *= m.w_radix_[j];
    }

    const std::size_t v_levels = m.target_domain_.size();
    for_each_row(data, rows, [&](std::size_t r) {
        auto& cells = m.cells_[m.encode_w(data, r)];
        if (cells.empty()) cells.resize(v_levels);
        auto& cell = cells[m.target_code(data, r)];
        cell.sum += data.metric(r);
        ++cell.count;
    });

    if (kind == EstimatorKind::Forest) {
        if (forest.trees == 0) throw Error(ErrorCode::InvalidArgument, "forest needs at least one tree");
        if (!(forest.subsample > 0.0 && forest.subsample <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "forest subsample must lie in (0, 1]");
        std::vector<std::size_t> pool;
        pool.reserve(n);
        for_each_row(data, rows, [&](std::size_t r) { pool.push_back(r); });
        const auto take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(forest.subsample * static_cast<double>(n))));
        std::vector<std::uint64_t> levels{v_levels};
        levels.insert(levels.end(), m.w_radix_.begin(), m.w_radix_.end());

        m.trees_.resize(forest.trees);
        parallel_for(forest.trees, forest.workers, [&](std::size_t t) {
            Rng rng(derive_seed(forest.seed, t));
            std::vector<std::size_t> sample = pool;
            for (std::size_t i = 0; i < take; ++i)
                std::swap(sample[i], sample[i + rng.below(sample.size() - i)]);
            std::map<std::pair<std::uint64_t, std::uint32_t>, std::pair<double, double>> agg;
            for (std::size_t i = 0; i < take; ++i) {
                const auto r = sample[i];
                auto& a = agg[{m.encode_w(data, r), m.target_code(data, r)}];
                a.first += data.metric(r);
                a.second += 1.0;
            }
            std::vector<TrainingCell> cells;
            cells.reserve(agg.size());
            for (const auto& [key, a] : agg) {
                TrainingCell c;
                c.codes.push_back(key.second);
                for (std::size_t j = 0; j < m.w_radix_.size(); ++j)
                    c.codes.push_back(static_cast<std::uint32_t>((key.first / m.w_stride_[j]) % m.w_radix_[j]));
                c.sum = a.first;
                c.count = a.second;
                cells.push_back(std::move(c));
            }
            m.trees_[t] = TreeGrower(cells, levels, forest).grow();
        });
    }
    return m;
}

OutcomeModel fit_outcome_model(const ObservationTable& data, const FactorId& target,
                               const AdjustmentSet& adjustment, EstimatorKind kind,
                               const ForestOptions& forest) {
    return fit_outcome_rows(data, target, adjustment, kind, forest, nullptr);
}

AceEstimate estimate_ace(const ObservationTable& data, const OutcomeModel& model, int from, int to,
                         double coverage_floor) {
    if (data.empty()) throw Error(ErrorCode::EmptyData, "cannot estimate on zero rows");
    const auto c_from = level_code(model.target_domain(), model.target(), from);
    const auto c_to = level_code(model.target_domain(), model.target(), to);
    const RowEstimate r = estimate_rows(data, model, c_from, c_to, nullptr);
    AceEstimate out;
    out.target = model.target();
    out.from = from;
    out.to = to;
    out.n = r.n;
    out.adjustment = model.adjustment().variables;
    out.estimator = model.kind();
    // Coverage counts rows whose contrast strata were both observed in training.
    std::size_t observed = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto key = model.encode_w(data, i);
        if (model.support_code(key, c_from) > 0 && model.support_code(key, c_to) > 0) ++observed;
    }
    out.coverage = static_cast<double>(observed) / static_cast<double>(r.n);
    if (r.supported == 0 || out.coverage < coverage_floor)
        throw SupportError(model.target(), out.coverage, coverage_floor);
    out.value = r.value;
    return out;
}

AceEstimate bootstrap_ci(const ObservationTable& data, const FactorId& target,
                         const AdjustmentSet& adjustment, int from, int to,
                         const BootstrapOptions& options, EstimatorKind kind,
                         const ForestOptions& forest, double coverage_floor) {
    if (options.replicates < 50)
        throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 50 replicates");
    if (!(options.level > 0.0 && options.level < 1.0))
        throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
    const OutcomeModel full = fit_outcome_model(data, target, adjustment, kind, forest);
    AceEstimate point = estimate_ace(data, full, from, to, coverage_floor);
    const auto c_from = level_code(full.target_domain(), target, from);
    const auto c_to = level_code(full.target_domain(), target, to);

    ForestOptions inner = forest;
    inner.workers = 1;
    const std::size_t n = data.rows();
    std::vector<double> values(options.replicates, std::numeric_limits<double>::quiet_NaN());
    parallel_for(options.replicates, options.workers, [&](std::size_t b) {
        Rng rng(derive_seed(options.seed, b));
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = rng.below(n);
        ForestOptions opts = inner;
        opts.seed = derive_seed(forest.seed, b + 1);
        const OutcomeModel model = fit_outcome_rows(data, target, adjustment, kind, opts, &rows);
        const RowEstimate r = estimate_rows(data, model, c_from, c_to, &rows);
        if (r.supported > 0) values[b] = r.value;
    });
    std::erase_if(values, [](double v) { return std::isnan(v); });
    if (values.size() < 2)
        throw SupportError(target, 0.0, coverage_floor);
    std::sort(values.begin(), values.end());

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);

    ConfidenceInterval ci;
    const double alpha = 1.0 - options.level;
    ci.lo = std::min(quantile(values, alpha / 2.0), point.value);
    ci.hi = std::max(quantile(values, 1.0 - alpha / 2.0), point.value);
    ci.level = options.level;
    ci.replicates = values.size();
    ci.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1));
    point.ci = ci;
    return point;
}

AceError delta_ace(const AceEstimate& estimate, double truth) {
    return {estimate, truth, std::abs(estimate.value - truth)};
}

}  // namespace cdra
