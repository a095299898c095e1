#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "kcheck/baselines.hpp"
#include "kcheck/checker.hpp"
#include "kcheck/cli.hpp"
#include "kcheck/error.hpp"
#include "kcheck/metrics.hpp"
#include "kcheck/rag.hpp"

namespace py = pybind11;
using namespace kcheck;

namespace {

std::vector<Vec> rows_of(const Mat& m) {
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
    return out;
}

TokenScoreRecord token_record(const std::vector<double>& logprobs) {
    TokenScoreRecord r;
    r.id = "x";
    r.logprobs = logprobs;
    r.tokens.assign(logprobs.size(), "");
    if (logprobs.empty()) throw InputError("logprobs must be nonempty");
    for (double lp : logprobs) {
        if (lp > 0.0) throw InputError("logprobs must be <= 0");
    }
    return r;
}

struct PyChecker {
    AnyChecker checker;

    std::pair<int, double> classify_one(const Vec& v) const {
        const Decision d = kcheck::classify(checker, v);
        return {d.label, d.score};
    }

    std::pair<std::vector<int>, std::vector<double>> classify_rows(const Mat& rows) const {
        std::vector<int> labels;
        std::vector<double> scores;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            const Decision d = kcheck::classify(checker, rows.row(i).transpose());
            labels.push_back(d.label);
            scores.push_back(d.score);
        }
        return {labels, scores};
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Representation-based knowledge checking core.";

    static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
    static py::exception<ModelError> model_error(m, "ModelError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const InputError& e) {
            py::set_error(input_error, e.what());
        } catch (const ModelError& e) {
            py::set_error(model_error, e.what());
        }
    });

    m.attr("__version__") = toolkit_version();

    py::class_<PyChecker>(m, "Checker")
        .def_property_readonly("kind", [](const PyChecker& c) { return std::string(checker_kind(c.checker)); })
        .def_property_readonly("task", [](const PyChecker& c) { return std::string(task_code(checker_task(c.checker))); })
        .def_property_readonly("dim", [](const PyChecker& c) { return checker_dim(c.checker); })
        .def("classify", &PyChecker::classify_one, py::arg("vec"), "(label, score) for one vector")
        .def("classify_rows", &PyChecker::classify_rows, py::arg("rows"), "(labels, scores) for each row")
        .def("to_json", [](const PyChecker& c) { return checker_to_json(c.checker).dump(); })
        .def_static("from_json",
                    [](const std::string& text) {
                        nlohmann::ordered_json doc;
                        try {
                            doc = nlohmann::ordered_json::parse(text);
                        } catch (const nlohmann::json::parse_error& e) {
                            throw InputError(std::string("malformed checker JSON: ") + e.what());
                        }
                        return PyChecker{checker_from_json(doc)};
                    })
        .def("save", [](const PyChecker& c, const std::string& path) { save_checker(c.checker, path); })
        .def_static("load", [](const std::string& path) { return PyChecker{load_checker(path)}; });

    m.def(
        "train_pca_checker",
        [](const Mat& pos, const Mat& neg, std::uint64_t seed, const std::string& task, bool center) {
            PcaCheckerConfig cfg;
            cfg.seed = seed;
            cfg.center = center;
            return PyChecker{train_pca_checker(rows_of(pos), rows_of(neg), cfg, parse_task(task))};
        },
        py::arg("pos"), py::arg("neg"), py::arg("seed") = 0, py::arg("task") = "t1", py::arg("center") = true);

    m.def(
        "train_contrastive_checker",
        [](const Mat& pos, const Mat& neg, std::uint64_t seed, const std::string& task, int epochs, double margin,
           int hidden, int out_dim, double step, const std::string& optimizer) {
            TrainConfig cfg;
            cfg.seed = seed;
            cfg.epochs = epochs;
            cfg.margin = margin;
            cfg.hidden = hidden;
            cfg.out_dim = out_dim;
            cfg.step = step;
            cfg.optimizer = parse_optimizer(optimizer);
            auto result = train_contrastive(rows_of(pos), rows_of(neg), cfg, parse_task(task));
            return std::make_pair(PyChecker{std::move(result.checker)}, result.epoch_loss);
        },
        py::arg("pos"), py::arg("neg"), py::arg("seed") = 0, py::arg("task") = "t1", py::arg("epochs") = 100,
        py::arg("margin") = 1.0, py::arg("hidden") = 256, py::arg("out_dim") = 128, py::arg("step") = 1e-3,
        py::arg("optimizer") = "adam", "Returns (checker, per-epoch mean loss).");

    m.def(
        "pca_fit",
        [](const Mat& rows, int k, bool center) {
            const PcaModel model = kcheck::pca_fit(rows, k, center);
            return std::make_pair(model.mean, model.components);
        },
        py::arg("rows"), py::arg("k"), py::arg("center") = true, "Returns (mean, components k x d).");

    m.def("calibrate_threshold", &calibrate_threshold, py::arg("scores_pos"), py::arg("scores_neg"));

    m.def(
        "roc_curve",
        [](const std::vector<double>& scores, const std::vector<int>& labels, bool higher_is_positive) {
            const RocCurve c = kcheck::roc_curve(
                scores, labels,
                higher_is_positive ? ScoreDirection::HigherIsPositive : ScoreDirection::LowerIsPositive);
            return py::make_tuple(c.fpr, c.tpr, c.thresholds);
        },
        py::arg("scores"), py::arg("labels"), py::arg("higher_is_positive") = true);
    m.def(
        "auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
            return kcheck::auc(kcheck::roc_curve(scores, labels));
        },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "binary_metrics",
        [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
            const BinaryMetrics b = kcheck::binary_metrics(Confusion{tp, fp, fn, tn});
            py::dict d;
            d["acc"] = b.acc;
            d["precision"] = b.precision;
            d["recall"] = b.recall;
            d["f1"] = b.f1;
            return d;
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

    m.def("perplexity", [](const std::vector<double>& lp) { return kcheck::perplexity(token_record(lp)); },
          py::arg("logprobs"));
    m.def(
        "prob_scores",
        [](const std::vector<double>& lp) {
            const ProbScores s = kcheck::prob_scores(token_record(lp));
            return std::make_pair(s.lowest, s.average);
        },
        py::arg("logprobs"), "Returns (lowest, average) token probability.");
    m.def(
        "sweep_best_accuracy",
        [](const std::vector<double>& scores, const std::vector<int>& labels, const std::string& indicator) {
            const SweepResult r =
                kcheck::sweep_best_accuracy(scores, labels, make_indicator(parse_indicator(indicator)));
            return std::make_pair(r.best_acc, r.best_threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("indicator"), "Returns (best_acc, best_threshold).");

    m.def("template_names", &template_names);
    m.def("template_text", [](const std::string& name) { return template_text(name); }, py::arg("name"));
    m.def("fill_template", [](const std::string& t, const std::map<std::string, std::string>& v) {
        return kcheck::fill_template(t, v);
    });
    m.def(
        "parse_yes_no", [](const std::string& s) { return std::string(yes_no_name(kcheck::parse_yes_no(s))); },
        py::arg("response"));

    m.def(
        "validate_misleading",
        [](const std::string& text, const std::string& wrong, const std::vector<std::string>& truth) {
            return kcheck::validate_misleading(text, wrong, truth);
        },
        py::arg("text"), py::arg("wrong_answer"), py::arg("true_answers"));
    m.def("normalize_answer", [](const std::string& s) { return kcheck::normalize_answer(s); });
    m.def(
        "exact_match",
        [](const std::string& answer, const std::vector<std::string>& gold) { return kcheck::exact_match(answer, gold); },
        py::arg("answer"), py::arg("gold_answers"));

    py::class_<RetrievalIndex>(m, "RetrievalIndex")
        .def(py::init<>())
        .def("add", [](RetrievalIndex& ix, const std::string& pid, const Vec& e) { ix.add(pid, e); })
        .def(
            "retrieve",
            [](const RetrievalIndex& ix, const Vec& q, std::size_t k) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& hit : ix.retrieve(q, k)) out.emplace_back(hit.pid, hit.score);
                return out;
            },
            py::arg("query"), py::arg("k"))
        .def("__len__", &RetrievalIndex::size);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = kcheck::run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one CLI command in-process; returns (exit_code, stdout, stderr).");
}
