#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ladder/data.hpp"
#include "ladder/models.hpp"

namespace ladder {

/// Percentage of samples whose argmax prediction matches the label.
float accuracy(const Classifier& model, const Dataset& ds);
float accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Accuracy matrix in percent. Masked cells (a defence evaluated against the
/// attack it was trained on) carry no value.
class RobustnessTable {
   public:
    RobustnessTable() = default;
    RobustnessTable(std::vector<std::string> rows, std::vector<std::string> columns);

    std::size_t row_count() const noexcept { return rows_.size(); }
    std::size_t column_count() const noexcept { return columns_.size(); }
    const std::vector<std::string>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& columns() const noexcept { return columns_; }

    void set(std::size_t r, std::size_t c, float value);
    void mask(std::size_t r, std::size_t c);
    bool masked(std::size_t r, std::size_t c) const { return !cells_.at(r * columns_.size() + c).has_value(); }
    std::optional<float> at(std::size_t r, std::size_t c) const { return cells_.at(r * columns_.size() + c); }
    std::size_t masked_count() const;

    /// First line after the header is the mask row (1 = masked).
    std::string csv() const;
    static RobustnessTable from_csv(std::string_view text);

   private:
    std::vector<std::string> rows_, columns_;
    std::vector<std::optional<float>> cells_;
};

enum class TieRule {
    competition,  // equal accuracies share the best rank (1, 2, 2, 4)
    row_order,    // equal accuracies ranked by row position (1, 2, 3, 4)
};

struct RankReport {
    std::vector<float> average;                // per row
    std::vector<std::optional<int>> ranks;     // row-major, empty where masked
    std::size_t columns = 0;

    std::optional<int> rank(std::size_t r, std::size_t c) const { return ranks.at(r * columns + c); }
    std::string csv(const RobustnessTable& table) const;
};

/// Per column, rank valued cells by descending accuracy; per row, average
/// over its valued cells. Columns with fewer than two values are rejected.
RankReport average_rank(const RobustnessTable& table, TieRule rule = TieRule::competition);

struct DefenceModel {
    std::string name;
    const Classifier* model = nullptr;
    std::string trained_against;  // column it must not be scored on; empty for the vanilla model
};

/// Columns: "clean" followed by every attack name. Adversarial sets are
/// pre-generated against the vanilla model.
RobustnessTable robustness_matrix(std::span<const DefenceModel> models, std::span<const std::string> attacks,
                                  const Dataset& clean, const std::map<std::string, Dataset>& adv_sets);

struct SweepPoint {
    float epsilon = 0.0f;
    float clean_accuracy = 0.0f;
    float robust_accuracy = 0.0f;
};

/// Runs `run(eps)` (clean accuracy, robustness) for each epsilon in order.
std::vector<SweepPoint> epsilon_sweep(std::span<const float> epsilons,
                                      const std::function<std::pair<float, float>(float)>& run);
std::string sweep_csv(std::span<const SweepPoint> points);
/// Standalone line chart of both accuracies against epsilon.
std::string sweep_svg(std::span<const SweepPoint> points, std::string_view title);

}  // namespace ladder
