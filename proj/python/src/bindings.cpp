#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hscls/cli.hpp"
#include "hscls/corpus.hpp"
#include "hscls/eval.hpp"
#include "hscls/models.hpp"
#include "hscls/stats.hpp"
#include "hscls/tuner.hpp"
#include "hscls/version.hpp"
#include "hscls/weights_io.hpp"
#include "hscls/workflow.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

using namespace hscls;

// A trained model plus its vocabulary, ready to score raw descriptions.
class Classifier {
public:
    Classifier(const std::string& weights, const std::optional<std::string>& vocab)
        : weights_(load_weights(weights)),
          vocab_(Vocabulary::load(vocab ? fs::path(*vocab) : fs::path(weights).parent_path() / "vocab.tsv")) {}

    std::vector<py::dict> predict(const std::vector<std::string>& short_descriptions,
                                  const std::optional<std::vector<std::string>>& medium_descriptions) const {
        if (medium_descriptions && medium_descriptions->size() != short_descriptions.size()) {
            throw std::invalid_argument("short and medium descriptions differ in length");
        }
        std::vector<InferenceRecord> records;
        for (std::size_t i = 0; i < short_descriptions.size(); ++i) {
            records.push_back({std::to_string(i), short_descriptions[i],
                               medium_descriptions ? (*medium_descriptions)[i] : std::string(), std::nullopt});
        }
        const auto seqs = encode_inference(records, vocab_, weights_.dims.max_len);
        std::vector<py::dict> out;
        for (const auto& p : hscls::predict(weights_, seqs, vocab_.hash())) {
            out.push_back(py::dict("code"_a = p.code, "confidence"_a = p.confidence, "band"_a = to_string(p.band),
                                   "probabilities"_a = p.probabilities));
        }
        return out;
    }

    const std::vector<std::string>& classes() const { return weights_.class_list; }
    std::string architecture() const { return to_string(weights_.architecture); }

private:
    ModelWeights weights_;
    Vocabulary vocab_;
};

py::dict tune_py(const std::function<double(const std::map<std::string, double>&)>& objective,
                 const std::map<std::string, std::pair<double, double>>& bounds, std::size_t budget,
                 std::size_t n_init, std::uint64_t seed) {
    HyperParamSpace space;
    for (const auto& [name, b] : bounds) space.dims.push_back(Dimension::continuous(name, b.first, b.second));
    TuneOptions opt;
    opt.budget = budget;
    opt.n_init = n_init;
    opt.seed = seed;
    const auto res = tune(space, objective, opt);
    py::list history;
    for (const auto& t : res.history) {
        history.append(py::dict("point"_a = t.point, "objective"_a = t.objective,
                                "failed"_a = t.status == TrialStatus::failed, "initial"_a = t.initial));
    }
    py::dict out("history"_a = history);
    if (res.best) {
        out["best_point"] = res.history[*res.best].point;
        out["best_value"] = res.history[*res.best].objective;
    } else {
        out["best_point"] = py::none();
        out["best_value"] = py::none();
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "HS-code text classification: models, statistics and the command line";
    m.attr("__version__") = kToolVersion;

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = hscls::run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        "args"_a, "Runs the hscls command line; returns (exit_code, stdout, stderr).");

    m.def(
        "normalize_text", [](const std::string& s) { return normalize_text(s, default_stopwords()); }, "text"_a);

    m.def("f_beta", &f_beta, "precision"_a, "recall"_a, "beta"_a = kDefaultBeta);
    m.def("f_survival", &f_survival, "f"_a, "d1"_a, "d2"_a, "P(F > f) for an F(d1, d2) variate.");
    m.def("regularized_incomplete_beta", &regularized_incomplete_beta, "x"_a, "a"_a, "b"_a);
    m.def(
        "one_way_anova",
        [](const std::vector<std::vector<double>>& groups) {
            const auto r = one_way_anova(groups);
            return py::dict("f_statistic"_a = r.f_statistic, "p_value"_a = r.p_value);
        },
        "groups"_a);

    m.def(
        "dnn_layer_plan",
        [](std::size_t initial_neurons, double neuron_pct, double neuron_shrink, std::size_t n_layer_cap) {
            DnnConfig c;
            c.initial_neurons = initial_neurons;
            c.neuron_pct = neuron_pct;
            c.neuron_shrink = neuron_shrink;
            c.n_layer_cap = n_layer_cap;
            return dnn_layer_plan(c);
        },
        "initial_neurons"_a, "neuron_pct"_a, "neuron_shrink"_a, "n_layer_cap"_a = 15);

    m.def("tune", &tune_py, "objective"_a, "bounds"_a, "budget"_a = 20, "n_init"_a = 8, "seed"_a = 0,
          "Maximizes objective(point) over a box of continuous bounds {name: (low, high)} with GP + expected "
          "improvement. Exceptions raised by the objective mark the trial failed.");

    py::class_<Classifier>(m, "Classifier")
        .def(py::init<const std::string&, const std::optional<std::string>&>(), "weights"_a, "vocab"_a = py::none(),
             "Loads weights.bin; the vocabulary defaults to vocab.tsv next to it.")
        .def("predict", &Classifier::predict, "short_descriptions"_a, "medium_descriptions"_a = py::none())
        .def_property_readonly("classes", &Classifier::classes)
        .def_property_readonly("architecture", &Classifier::architecture);
}
