#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sublearn/cli.hpp"
#include "sublearn/evalkit.hpp"
#include "sublearn/fitval.hpp"
#include "sublearn/planted.hpp"
#include "sublearn/subsel.hpp"

namespace py = pybind11;
using namespace sublearn;

namespace {

json json_from_pystr(const std::string& text) { return json::parse(text); }

// models cross the boundary as config+parameter JSON payloads
class PyModel {
public:
    explicit PyModel(SetFnModel model) : model_(std::move(model)) {}

    static PyModel create(const std::string& config_json, std::uint64_t seed) {
        return PyModel(SetFnModel::create(
            SetFnModelConfig::from_json(json_from_pystr(config_json)), seed));
    }
    static PyModel from_checkpoint(const std::string& payload) {
        return PyModel(SetFnModel::from_checkpoint(json_from_pystr(payload)));
    }
    std::string checkpoint() const { return model_.checkpoint().dump(); }

    double value(const FeatureTable& table, const ElementSet& s) const {
        return model_.value_nograd(table, s);
    }
    std::vector<double> values(const FeatureTable& table,
                               const std::vector<ElementSet>& sets) const {
        Vec v = model_.values_nograd(table, sets);
        return {v.data(), v.data() + v.size()};
    }
    double marginal_gain(const FeatureTable& table, const ElementSet& s,
                         int element) const {
        return model_.marginal_gain_nograd(table, s, element);
    }
    std::vector<int> greedy(const FeatureTable& table, const ElementSet& universe,
                            int k) const {
        return greedy_select(model_, table, universe, k);
    }
    void calibrate(const FeatureTable& table,
                   const std::vector<ElementSet>& sets) {
        model_.calibrate_limits(table, sets);
    }
    double lambda() const { return model_.lambda_value(); }

    py::dict train_regression_py(const FeatureTable& table,
                                 const py::object& dataset_obj,
                                 const std::string& cfg_json) {
        const SetValueDataset& ds = dataset_obj.cast<const SetValueDataset&>();
        json cfg = json_from_pystr(cfg_json);
        RegressionConfig rc;
        rc.epochs = cfg.value("epochs", rc.epochs);
        rc.batch_size = cfg.value("batch_size", rc.batch_size);
        rc.lr = cfg.value("lr", rc.lr);
        rc.weight_decay = cfg.value("weight_decay", rc.weight_decay);
        rc.rho = cfg.value("rho", rc.rho);
        rc.select_window = cfg.value("select_window", rc.select_window);
        rc.seed = cfg.value("seed", std::uint64_t(0));
        RegressionResult result = train_regression(model_, table, ds, rc);
        py::dict out;
        out["status"] = result.status == TrainStatus::Ok ? "ok" : "diverged";
        out["test_rmse"] = result.test_rmse;
        out["best_epoch"] = result.best_epoch;
        out["best_dev_rmse"] = result.best_dev_rmse;
        py::list dev;
        for (const auto& em : result.metrics) dev.append(em.dev_rmse);
        out["dev_rmse"] = dev;
        return out;
    }

    SetFnModel& raw() { return model_; }

private:
    SetFnModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "learned submodular set functions: models, training, audits";

    py::class_<FeatureTable>(m, "FeatureTable")
        .def(py::init<Mat>(), py::arg("features"))
        .def_property_readonly("count", &FeatureTable::count)
        .def_property_readonly("dim", &FeatureTable::dim)
        .def_readonly("z", &FeatureTable::z)
        .def("zsum", &FeatureTable::zsum);

    m.def("sample_features", &sample_features, py::arg("n"), py::arg("d"),
          py::arg("seed"));
    m.def("read_features_csv", &read_features_csv);
    m.def("write_features_csv", &write_features_csv);

    py::class_<SetValueInstance>(m, "SetValueInstance")
        .def_readonly("s", &SetValueInstance::s)
        .def_readonly("y", &SetValueInstance::y);

    py::class_<SetValueDataset>(m, "SetValueDataset")
        .def_readonly("instances", &SetValueDataset::instances)
        .def_readonly("fold", &SetValueDataset::fold)
        .def_readonly("norm_const", &SetValueDataset::norm_const);

    py::class_<UniverseSubsetInstance>(m, "UniverseSubsetInstance")
        .def_readonly("universe", &UniverseSubsetInstance::universe)
        .def_readonly("subset", &UniverseSubsetInstance::subset);

    m.def(
        "make_planted",
        [](const std::string& tag, const FeatureTable& table) {
            return PlantedFn::make(planted_tag_from_string(tag), table);
        },
        py::arg("tag"), py::arg("table"));
    py::class_<PlantedFn>(m, "PlantedFn")
        .def_readonly("lambda_gc", &PlantedFn::lambda_gc);
    m.def("eval_planted", &eval_planted);
    m.def("gen_setvalue_dataset", &gen_setvalue_dataset);
    m.def("gen_selection_dataset", &gen_selection_dataset);

    m.def("kappa", &kappa_for, py::arg("alpha"), py::arg("k"),
          "tilt constant (1/k) ln(1/alpha)");

    py::class_<PyModel>(m, "Model")
        .def_static("create", &PyModel::create, py::arg("config_json"),
                    py::arg("seed"))
        .def_static("from_checkpoint", &PyModel::from_checkpoint)
        .def("checkpoint", &PyModel::checkpoint)
        .def("value", &PyModel::value)
        .def("values", &PyModel::values)
        .def("marginal_gain", &PyModel::marginal_gain)
        .def("greedy_select", &PyModel::greedy)
        .def("calibrate", &PyModel::calibrate)
        .def("train_regression", &PyModel::train_regression_py)
        .def_property_readonly("lambda_", &PyModel::lambda);

    m.def("default_model_config",
          []() { return cli::default_config().dump(); });
    m.def(
        "model_config",
        [](const std::string& experiment_cfg) {
            return cli::model_config_from_json(json_from_pystr(experiment_cfg))
                .to_json()
                .dump();
        },
        "full experiment config -> model config payload");

    m.def(
        "sinkhorn",
        [](const Mat& seed, double t, int iters) {
            return make_soft_permutation(seed, t, iters).p;
        },
        py::arg("seed"), py::arg("t") = 0.5, py::arg("iters") = 50);

    m.def("rmse",
          py::overload_cast<const std::vector<double>&,
                            const std::vector<double>&>(&rmse));
    m.def("mean_jaccard", &mean_jaccard);
    m.def("ndcg_at_10", &ndcg_at_10);

    m.def(
        "audit_model_submodular",
        [](PyModel& model, const FeatureTable& table, long long samples,
           double alpha, int k, std::uint64_t seed, double tol) {
            ChainAuditConfig cfg;
            cfg.universe = table.count();
            cfg.samples = samples;
            cfg.alpha = alpha;
            cfg.cardinality_k = k;
            cfg.seed = seed;
            cfg.tolerance = tol;
            auto r = audit_submodular(batch_values_for(model.raw(), table), cfg);
            py::dict out;
            out["submodular_pass"] = r.submodular.pass;
            out["submodular_max_violation"] = r.submodular.max_violation;
            out["monotone_pass"] = r.monotonicity.pass;
            out["monotone_max_violation"] = r.monotonicity.max_violation;
            return out;
        },
        py::arg("model"), py::arg("table"), py::arg("samples") = 2000,
        py::arg("alpha") = 1.0, py::arg("k") = 0, py::arg("seed") = 0,
        py::arg("tol") = 1e-6);
}
