#include "ladder/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ladder/csv.hpp"
#include "ladder/parallel.hpp"

namespace ladder {

float accuracy(std::span<const int> predictions, std::span<const int> labels) {
    require(!labels.empty(), ErrorKind::contract, "accuracy of an empty dataset");
    require(predictions.size() == labels.size(), ErrorKind::dimension, "one prediction per label required");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
    return 100.0f * static_cast<float>(correct) / static_cast<float>(labels.size());
}

float accuracy(const Classifier& model, const Dataset& ds) {
    require(!ds.empty(), ErrorKind::contract, "accuracy of an empty dataset");
    return accuracy(model.predict(ds), ds.labels());
}

// ---- RobustnessTable ----

RobustnessTable::RobustnessTable(std::vector<std::string> rows, std::vector<std::string> columns)
    : rows_(std::move(rows)), columns_(std::move(columns)), cells_(rows_.size() * columns_.size()) {
    require(!rows_.empty() && !columns_.empty(), ErrorKind::contract, "table needs rows and columns");
}

void RobustnessTable::set(std::size_t r, std::size_t c, float value) {
    require(r < rows_.size() && c < columns_.size(), ErrorKind::contract, "table cell out of range");
    require(std::isfinite(value) && value >= 0.0f && value <= 100.0f, ErrorKind::contract,
            "accuracy must lie in [0, 100]");
    cells_[r * columns_.size() + c] = value;
}

void RobustnessTable::mask(std::size_t r, std::size_t c) {
    require(r < rows_.size() && c < columns_.size(), ErrorKind::contract, "table cell out of range");
    cells_[r * columns_.size() + c].reset();
}

std::size_t RobustnessTable::masked_count() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& v) { return !v; }));
}

std::string RobustnessTable::csv() const {
    std::vector<std::string> header{"defence"};
    header.insert(header.end(), columns_.begin(), columns_.end());
    CsvWriter out(header);
    std::vector<std::string> mask_row{"mask"};
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        std::string names;
        for (std::size_t r = 0; r < rows_.size(); ++r)
            if (masked(r, c)) names += (names.empty() ? "" : ";") + rows_[r];
        mask_row.push_back(names);
    }
    out.row(mask_row);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        std::vector<std::string> fields{rows_[r]};
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            const auto v = at(r, c);
            fields.push_back(v ? format_float(*v, 2) : std::string());
        }
        out.row(fields);
    }
    return out.text();
}

RobustnessTable RobustnessTable::from_csv(std::string_view text) {
    const auto lines = parse_csv(text);
    require(lines.size() >= 3 && lines[0].size() >= 2 && lines[1].size() == lines[0].size() && lines[1][0] == "mask",
            ErrorKind::format, "robustness csv needs a header, a mask row and at least one defence row");
    std::vector<std::string> columns(lines[0].begin() + 1, lines[0].end()), rows;
    for (std::size_t i = 2; i < lines.size(); ++i) rows.push_back(lines[i].at(0));
    RobustnessTable table(rows, columns);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& line = lines[r + 2];
        require(line.size() == columns.size() + 1, ErrorKind::format, "robustness csv row has the wrong width");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            const std::string& mask_names = lines[1][c + 1];
            std::istringstream names(mask_names);
            bool is_masked = false;
            for (std::string name; std::getline(names, name, ';');) is_masked = is_masked || name == rows[r];
            require(is_masked == line[c + 1].empty(), ErrorKind::consistency,
                    "mask row disagrees with cell (" + rows[r] + ", " + columns[c] + ")");
            if (!is_masked) table.set(r, c, std::stof(line[c + 1]));
        }
    }
    return table;
}

// ---- ranks ----

RankReport average_rank(const RobustnessTable& table, TieRule rule) {
    const std::size_t rows = table.row_count(), cols = table.column_count();
    RankReport report;
    report.columns = cols;
    report.ranks.resize(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
        std::vector<std::size_t> valued;
        for (std::size_t r = 0; r < rows; ++r)
            if (!table.masked(r, c)) valued.push_back(r);
        require(valued.size() >= 2, ErrorKind::degeneracy,
                "column '" + table.columns()[c] + "' has fewer than two valued cells");
        if (rule == TieRule::competition) {
            for (std::size_t r : valued) {
                int better = 0;
                for (std::size_t o : valued) better += *table.at(o, c) > *table.at(r, c);
                report.ranks[r * cols + c] = better + 1;
            }
        } else {
            std::stable_sort(valued.begin(), valued.end(),
                             [&](std::size_t a, std::size_t b) { return *table.at(a, c) > *table.at(b, c); });
            for (std::size_t k = 0; k < valued.size(); ++k) report.ranks[valued[k] * cols + c] = static_cast<int>(k + 1);
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        int total = 0, count = 0;
        for (std::size_t c = 0; c < cols; ++c)
            if (const auto rank = report.ranks[r * cols + c]) {
                total += *rank;
                ++count;
            }
        require(count > 0, ErrorKind::degeneracy, "row '" + table.rows()[r] + "' has no valued cells");
        report.average.push_back(static_cast<float>(total) / static_cast<float>(count));
    }
    return report;
}

std::string RankReport::csv(const RobustnessTable& table) const {
    std::vector<std::string> header{"defence"};
    header.insert(header.end(), table.columns().begin(), table.columns().end());
    header.push_back("avg_rank");
    CsvWriter out(header);
    for (std::size_t r = 0; r < average.size(); ++r) {
        std::vector<std::string> fields{table.rows()[r]};
        for (std::size_t c = 0; c < columns; ++c) {
            const auto v = rank(r, c);
            fields.push_back(v ? std::to_string(*v) : std::string());
        }
        fields.push_back(format_float(average[r], 2));
        out.row(fields);
    }
    return out.text();
}

RobustnessTable robustness_matrix(std::span<const DefenceModel> models, std::span<const std::string> attacks,
                                  const Dataset& clean, const std::map<std::string, Dataset>& adv_sets) {
    require(!models.empty(), ErrorKind::contract, "robustness matrix needs at least one model");
    std::vector<std::string> columns{"clean"};
    for (const auto& a : attacks) {
        require(adv_sets.contains(a), ErrorKind::configuration, "no adversarial set for attack '" + a + "'");
        columns.push_back(a);
    }
    std::vector<std::string> rows;
    for (const auto& m : models) {
        require(m.model != nullptr, ErrorKind::contract, "defence '" + m.name + "' has no model");
        rows.push_back(m.name);
    }
    RobustnessTable table(rows, columns);
    const std::size_t cols = columns.size();
    std::vector<std::optional<float>> values(rows.size() * cols);
    parallel_for(values.size(), [&](std::size_t cell) {
        const std::size_t r = cell / cols, c = cell % cols;
        if (c > 0 && models[r].trained_against == columns[c]) return;
        const Dataset& ds = c == 0 ? clean : adv_sets.at(columns[c]);
        values[cell] = accuracy(*models[r].model, ds);
    });
    for (std::size_t cell = 0; cell < values.size(); ++cell) {
        if (values[cell])
            table.set(cell / cols, cell % cols, *values[cell]);
        else
            table.mask(cell / cols, cell % cols);
    }
    return table;
}

// ---- sweep ----

std::vector<SweepPoint> epsilon_sweep(std::span<const float> epsilons,
                                      const std::function<std::pair<float, float>(float)>& run) {
    require(!epsilons.empty(), ErrorKind::configuration, "sweep needs at least one epsilon");
    for (std::size_t i = 1; i < epsilons.size(); ++i)
        require(epsilons[i - 1] < epsilons[i], ErrorKind::configuration, "sweep epsilons must be ascending");
    std::vector<SweepPoint> out;
    for (float eps : epsilons) {
        const auto [clean, robust] = run(eps);
        out.push_back({eps, clean, robust});
    }
    return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
    CsvWriter out({"epsilon", "clean_accuracy", "robust_accuracy"});
    for (const auto& p : points)
        out.row({format_float(p.epsilon), format_float(p.clean_accuracy, 2), format_float(p.robust_accuracy, 2)});
    return out.text();
}

namespace {

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string sweep_svg(std::span<const SweepPoint> points, std::string_view title) {
    require(!points.empty(), ErrorKind::contract, "nothing to plot");
    constexpr double width = 640, height = 400, left = 70, right = 160, top = 40, bottom = 60;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    double x_min = points.front().epsilon, x_max = points.back().epsilon;
    if (x_max == x_min) x_max = x_min + 1.0;
    auto px = [&](double eps) { return left + (eps - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double acc) { return top + (1.0 - acc / 100.0) * plot_h; };
    auto f = [](float v) { return format_float(v, 2); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << f(left + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
        << escape_xml(title) << "</text>\n";
    svg << "<line x1=\"" << f(left) << "\" y1=\"" << f(top + plot_h) << "\" x2=\"" << f(left + plot_w) << "\" y2=\""
        << f(top + plot_h) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << f(left) << "\" y1=\"" << f(top) << "\" x2=\"" << f(left) << "\" y2=\"" << f(top + plot_h)
        << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 100; tick += 20) {
        svg << "<line x1=\"" << f(left - 4) << "\" y1=\"" << f(py(tick)) << "\" x2=\"" << f(left) << "\" y2=\""
            << f(py(tick)) << "\" stroke=\"black\"/>";
        svg << "<text x=\"" << f(left - 8) << "\" y=\"" << f(py(tick) + 4) << "\" text-anchor=\"end\">" << tick
            << "</text>\n";
    }
    for (const auto& p : points) {
        svg << "<line x1=\"" << f(px(p.epsilon)) << "\" y1=\"" << f(top + plot_h) << "\" x2=\"" << f(px(p.epsilon))
            << "\" y2=\"" << f(top + plot_h + 4) << "\" stroke=\"black\"/>";
        svg << "<text x=\"" << f(px(p.epsilon)) << "\" y=\"" << f(top + plot_h + 18) << "\" text-anchor=\"middle\">"
            << format_float(p.epsilon) << "</text>\n";
    }
    svg << "<text x=\"" << f(left + plot_w / 2) << "\" y=\"" << f(height - 16)
        << "\" text-anchor=\"middle\">epsilon</text>\n";
    svg << "<text x=\"18\" y=\"" << f(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << f(top + plot_h / 2) << ")\">accuracy (%)</text>\n";

    const struct {
        const char* label;
        const char* color;
        float SweepPoint::*field;
    } series[] = {{"clean accuracy", "#1f77b4", &SweepPoint::clean_accuracy},
                  {"robust accuracy", "#d62728", &SweepPoint::robust_accuracy}};
    int legend_row = 0;
    for (const auto& s : series) {
        svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < points.size(); ++i)
            svg << (i ? " " : "") << f(px(points[i].epsilon)) << ',' << f(py(points[i].*s.field));
        svg << "\"/>\n";
        for (const auto& p : points)
            svg << "<circle cx=\"" << f(px(p.epsilon)) << "\" cy=\"" << f(py(p.*s.field)) << "\" r=\"3\" fill=\""
                << s.color << "\"/>";
        svg << '\n';
        const double ly = top + 10 + 20 * legend_row++;
        svg << "<line x1=\"" << f(left + plot_w + 16) << "\" y1=\"" << f(ly) << "\" x2=\"" << f(left + plot_w + 40)
            << "\" y2=\"" << f(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>";
        svg << "<text x=\"" << f(left + plot_w + 46) << "\" y=\"" << f(ly + 4) << "\">" << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace ladder
