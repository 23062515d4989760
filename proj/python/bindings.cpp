#include <optional>
#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ladder/data.hpp"
#include "ladder/error.hpp"
#include "ladder/eval.hpp"
#include "ladder/ladder_gen.hpp"
#include "ladder/pipeline.hpp"

namespace py = pybind11;

namespace {

py::tuple run_command(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = ladder::run_command(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

// table[r][c] is an accuracy or None for a masked cell.
py::tuple average_rank(const std::vector<std::string>& rows, const std::vector<std::string>& columns,
                       const std::vector<std::vector<std::optional<float>>>& table, const std::string& tie_rule) {
    ladder::RobustnessTable t(rows, columns);
    ladder::require(table.size() == rows.size(), ladder::ErrorKind::dimension, "one table row per row label");
    for (std::size_t r = 0; r < rows.size(); ++r) {
        ladder::require(table[r].size() == columns.size(), ladder::ErrorKind::dimension,
                        "one cell per column label");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (table[r][c])
                t.set(r, c, *table[r][c]);
            else
                t.mask(r, c);
        }
    }
    const auto rule = tie_rule == "row_order" ? ladder::TieRule::row_order : ladder::TieRule::competition;
    const auto report = ladder::average_rank(t, rule);
    std::vector<std::vector<std::optional<int>>> ranks(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < columns.size(); ++c) ranks[r].push_back(report.rank(r, c));
    return py::make_tuple(report.average, ranks);
}

py::dict load_idx(const std::string& images, const std::string& labels) {
    const auto ds = ladder::load_idx(images, labels);
    std::vector<float> features;
    features.reserve(ds.size() * ds.sample_size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto x = ds.features(i);
        features.insert(features.end(), x.begin(), x.end());
    }
    py::dict d;
    d["shape"] = ds.sample_shape();
    d["features"] = std::move(features);
    d["labels"] = std::vector<int>(ds.labels().begin(), ds.labels().end());
    return d;
}

}  // namespace

PYBIND11_MODULE(_ladder, m) {
    m.doc() = "LADDER adversarial training pipeline";
    m.attr("__version__") = std::string(ladder::kVersion);

    static py::handle error = py::exception<ladder::Error>(m, "LadderError").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ladder::Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("run_command", &run_command, py::arg("args"),
          "Run one CLI subcommand in-process; returns (exit_code, stdout, stderr).");
    m.def("average_rank", &average_rank, py::arg("rows"), py::arg("columns"), py::arg("table"),
          py::arg("tie_rule") = "competition", "Per-row average rank and per-cell ranks of an accuracy table.");
    m.def(
        "perturb_along",
        [](const std::vector<float>& z, const std::vector<float>& beta, const std::vector<float>& direction,
           float eps) { return ladder::perturb_along(z, beta, direction, eps); },
        py::arg("z"), py::arg("beta"), py::arg("direction"), py::arg("eps"));
    m.def("sweep_epsilons", &ladder::sweep_epsilons);
    m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"));
}
