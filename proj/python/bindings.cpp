#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sste/data.hpp"
#include "sste/evaluate.hpp"
#include "sste/experiment.hpp"
#include "sste/model.hpp"
#include "sste/propensity.hpp"
#include "sste/selfsample.hpp"
#include "sste/train.hpp"

namespace py = pybind11;
using namespace sste;

namespace {

template <typename T>
py::array_t<T> column(const Dataset& d, T (*get)(const Interaction&)) {
  py::array_t<T> out(static_cast<py::ssize_t>(d.size()));
  auto w = out.template mutable_unchecked<1>();
  for (std::size_t i = 0; i < d.size(); ++i) w(static_cast<py::ssize_t>(i)) = get(d.interactions[i]);
  return out;
}

Dataset from_arrays(py::array_t<std::int64_t> users, py::array_t<std::int64_t> items,
                    py::array_t<std::int64_t> labels, std::size_t n_users, std::size_t n_items,
                    Provenance prov) {
  auto u = users.unchecked<1>();
  auto i = items.unchecked<1>();
  auto y = labels.unchecked<1>();
  if (u.shape(0) != i.shape(0) || u.shape(0) != y.shape(0))
    throw ValidationError("users, items and labels must have equal length");
  Dataset d;
  d.n_users = n_users;
  d.n_items = n_items;
  d.provenance = prov;
  d.interactions.reserve(static_cast<std::size_t>(u.shape(0)));
  for (py::ssize_t k = 0; k < u.shape(0); ++k) {
    if (u(k) < 0 || i(k) < 0) throw ValidationError("negative id");
    d.interactions.push_back({static_cast<UserId>(u(k)), static_cast<ItemId>(i(k)),
                              static_cast<std::uint8_t>(y(k)), std::nullopt});
  }
  d.validate();
  return d;
}

KeyValues to_kv(const py::dict& d) {
  KeyValues kv;
  for (auto [k, v] : d) kv[py::str(k)] = py::str(v);
  return kv;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-sampling training and evaluation core";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ValueError);
  py::register_exception<DivisionGuardError>(m, "DivisionGuardError", PyExc_ZeroDivisionError);
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  py::enum_<Provenance>(m, "Provenance")
      .value("BiasedTrain", Provenance::BiasedTrain)
      .value("BiasedValidation", Provenance::BiasedValidation)
      .value("UniformTest", Provenance::UniformTest)
      .value("AuxiliarySubset", Provenance::AuxiliarySubset);
  py::enum_<Branch>(m, "Branch").value("Tilde", Branch::Tilde).value("Hat", Branch::Hat);
  py::enum_<Objective>(m, "Objective")
      .value("Naive", Objective::Naive)
      .value("IPS", Objective::IPS)
      .value("SNIPS", Objective::SNIPS)
      .value("SSTE", Objective::SSTE);

  py::class_<Interaction>(m, "Interaction")
      .def(py::init([](UserId u, ItemId i, std::uint8_t y) { return Interaction{u, i, y, {}}; }),
           py::arg("user"), py::arg("item"), py::arg("label"))
      .def_readwrite("user", &Interaction::user)
      .def_readwrite("item", &Interaction::item)
      .def_readwrite("label", &Interaction::label)
      .def_readonly("raw_rating", &Interaction::raw_rating)
      .def("__eq__", [](const Interaction& a, const Interaction& b) { return a == b; })
      .def("__repr__", [](const Interaction& x) {
        return "Interaction(" + std::to_string(x.user) + ", " + std::to_string(x.item) + ", " +
               std::to_string(x.label) + ")";
      });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def_static("identity", &Vocabulary::identity)
      .def_property_readonly("n_users", &Vocabulary::n_users)
      .def_property_readonly("n_items", &Vocabulary::n_items)
      .def_property_readonly("raw_users", &Vocabulary::raw_users)
      .def_property_readonly("raw_items", &Vocabulary::raw_items)
      .def("find_user", &Vocabulary::find_user)
      .def("find_item", &Vocabulary::find_item);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_static("from_arrays", &from_arrays, py::arg("users"), py::arg("items"),
                  py::arg("labels"), py::arg("n_users"), py::arg("n_items"),
                  py::arg("provenance") = Provenance::BiasedTrain)
      .def_readwrite("interactions", &Dataset::interactions)
      .def_readwrite("n_users", &Dataset::n_users)
      .def_readwrite("n_items", &Dataset::n_items)
      .def_readwrite("provenance", &Dataset::provenance)
      .def_readonly("rng_seed", &Dataset::rng_seed)
      .def_readonly("epsilon", &Dataset::epsilon)
      .def_property_readonly("users",
                             [](const Dataset& d) {
                               return column<std::int64_t>(d, [](const Interaction& x) {
                                 return static_cast<std::int64_t>(x.user);
                               });
                             })
      .def_property_readonly("items",
                             [](const Dataset& d) {
                               return column<std::int64_t>(d, [](const Interaction& x) {
                                 return static_cast<std::int64_t>(x.item);
                               });
                             })
      .def_property_readonly("labels",
                             [](const Dataset& d) {
                               return column<std::int64_t>(d, [](const Interaction& x) {
                                 return static_cast<std::int64_t>(x.label);
                               });
                             })
      .def("positives", &Dataset::positives)
      .def("negatives", &Dataset::negatives)
      .def("validate", &Dataset::validate)
      .def("__len__", &Dataset::size)
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  py::class_<DatasetStats>(m, "DatasetStats")
      .def_readonly("n_feedback", &DatasetStats::n_feedback)
      .def_readonly("positives", &DatasetStats::positives)
      .def_readonly("negatives", &DatasetStats::negatives)
      .def_readonly("pn_ratio_percent", &DatasetStats::pn_ratio_percent)
      .def_readonly("n_users", &DatasetStats::n_users)
      .def_readonly("n_items", &DatasetStats::n_items);

  m.def(
      "load_tsv",
      [](const std::filesystem::path& path, const std::string& schema, Vocabulary* vocab,
         Provenance prov) {
        if (vocab) return load_tsv(path, parse_schema(schema), *vocab, prov);
        return load_tsv(path, parse_schema(schema), prov);
      },
      py::arg("path"), py::arg("schema") = "label", py::arg("vocab") = nullptr,
      py::arg("provenance") = Provenance::BiasedTrain);
  m.def(
      "save_tsv",
      [](const std::filesystem::path& path, const Dataset& d, const Vocabulary* vocab) {
        save_tsv(path, d, vocab);
      },
      py::arg("path"), py::arg("dataset"), py::arg("vocab") = nullptr);
  m.def(
      "split_ratio",
      [](const Dataset& d, double ratio, const std::string& mode, std::uint64_t seed) {
        auto r = split_ratio(d, ratio, parse_split_mode(mode), seed);
        return py::make_tuple(std::move(r.first), std::move(r.second));
      },
      py::arg("dataset"), py::arg("ratio") = 0.8, py::arg("mode") = "per_user",
      py::arg("seed") = 0);
  m.def("stats", &stats);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("n_users", &SyntheticSpec::n_users)
      .def_readwrite("n_items", &SyntheticSpec::n_items)
      .def_readwrite("latent_dim", &SyntheticSpec::latent_dim)
      .def_readwrite("exposure_bias_strength", &SyntheticSpec::exposure_bias_strength)
      .def_readwrite("positive_threshold", &SyntheticSpec::positive_threshold)
      .def_readwrite("relevance_scale", &SyntheticSpec::relevance_scale)
      .def_readwrite("popularity_exponent", &SyntheticSpec::popularity_exponent)
      .def_readwrite("popularity_relevance", &SyntheticSpec::popularity_relevance)
      .def_readwrite("train_impressions", &SyntheticSpec::train_impressions)
      .def_readwrite("test_impressions", &SyntheticSpec::test_impressions)
      .def_readwrite("val_ratio", &SyntheticSpec::val_ratio)
      .def_readwrite("seed", &SyntheticSpec::seed);
  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("train", &SyntheticData::train)
      .def_readonly("val", &SyntheticData::val)
      .def_readonly("test", &SyntheticData::test)
      .def_property_readonly("relevance",
                             [](const SyntheticData& s) {
                               py::array_t<double> a(static_cast<py::ssize_t>(s.relevance.size()),
                                                     s.relevance.data());
                               return a.reshape({static_cast<py::ssize_t>(s.train.n_users),
                                                 static_cast<py::ssize_t>(s.train.n_items)});
                             })
      .def_readonly("popularity", &SyntheticData::popularity);
  m.def("generate_synthetic", &generate_synthetic);

  py::class_<PropensityTable>(m, "PropensityTable")
      .def_readonly("per_item_propensity", &PropensityTable::per_item_propensity)
      .def_readonly("gamma", &PropensityTable::gamma)
      .def_readonly("floor", &PropensityTable::floor)
      .def("__len__", &PropensityTable::n_items)
      .def("__getitem__", &PropensityTable::operator[]);
  py::class_<SampleProbTable>(m, "SampleProbTable")
      .def_readonly("per_instance_prob", &SampleProbTable::per_instance_prob)
      .def_readonly("epsilon", &SampleProbTable::epsilon)
      .def_readonly("truncated", &SampleProbTable::truncated)
      .def("expected_size", &SampleProbTable::expected_size)
      .def("__len__", &SampleProbTable::size);
  m.def("estimate_popularity_propensity", &estimate_popularity_propensity, py::arg("dataset"),
        py::arg("gamma") = 0.5, py::arg("floor") = 0.01);
  m.def("sampling_probabilities", &sampling_probabilities);
  m.def(
      "truncate", [](const std::vector<double>& p, double eps) { return truncate(p, eps); },
      py::arg("probabilities"), py::arg("epsilon"));
  m.def("draw_auxiliary", &draw_auxiliary, py::arg("dataset"), py::arg("probs"),
        py::arg("seed"));
  m.def(
      "build_auxiliary_family",
      [](const Dataset& train, const Dataset& val, const PropensityTable& pt,
         std::vector<double> eps_train, std::vector<double> eps_val, std::uint64_t seed) {
        auto fam = build_auxiliary_family(train, val, pt,
                                          {std::move(eps_train), std::move(eps_val), false, seed});
        return py::make_tuple(std::move(fam.train), std::move(fam.val));
      },
      py::arg("train"), py::arg("val"), py::arg("propensity"),
      py::arg("epsilons_train") = std::vector<double>{0.5},
      py::arg("epsilons_val") = std::vector<double>{0.5}, py::arg("seed") = 0);

  py::class_<MfModel>(m, "MfModel")
      .def(py::init<std::size_t, std::size_t, std::size_t>(), py::arg("n_users"),
           py::arg("n_items"), py::arg("k"))
      .def_property_readonly("n_users", &MfModel::n_users)
      .def_property_readonly("n_items", &MfModel::n_items)
      .def_property_readonly("k", &MfModel::k)
      .def("parameter_count", &MfModel::parameter_count)
      .def("all_finite", &MfModel::all_finite)
      .def("__eq__", [](const MfModel& a, const MfModel& b) { return a == b; })
      .def("predict_all",
           [](const MfModel& mm, const Dataset& d, Branch b) { return predict_all(mm, b, d); },
           py::arg("dataset"), py::arg("branch") = Branch::Hat);
  m.def(
      "init_model",
      [](std::size_t nu, std::size_t ni, std::size_t k, double scale, std::uint64_t seed) {
        return init(nu, ni, k, {scale, seed});
      },
      py::arg("n_users"), py::arg("n_items"), py::arg("k"), py::arg("scale") = 0.01,
      py::arg("seed") = 0);
  m.def(
      "predict",
      [](const MfModel& mm, UserId u, ItemId i, Branch b) { return predict(mm, b, u, i); },
      py::arg("model"), py::arg("user"), py::arg("item"), py::arg("branch") = Branch::Hat);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("model", &Checkpoint::model)
      .def_readonly("vocab", &Checkpoint::vocab);
  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& p, const MfModel& mm, const Vocabulary* v) {
        save_checkpoint(p, mm, v);
      },
      py::arg("path"), py::arg("model"), py::arg("vocab") = nullptr);
  m.def("load_checkpoint", &load_checkpoint);

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        if (scores.size() != labels.size())
          throw ValidationError("scores and labels must have equal length");
        std::vector<ScoredLabel> s(scores.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = {scores[i], labels[i]};
        return auc(s);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "dataset_auc", [](const MfModel& mm, const Dataset& d, Branch b) { return dataset_auc(mm, b, d); },
      py::arg("model"), py::arg("dataset"), py::arg("branch") = Branch::Hat);

  py::class_<RankedList>(m, "RankedList")
      .def(py::init([](UserId u, std::vector<ItemId> ranked, std::vector<ItemId> relevant) {
             std::sort(relevant.begin(), relevant.end());
             return RankedList{u, std::move(ranked), std::move(relevant)};
           }),
           py::arg("user"), py::arg("ranked_items"), py::arg("relevant"))
      .def_readonly("user", &RankedList::user)
      .def_readonly("ranked_items", &RankedList::ranked_items)
      .def_readonly("relevant", &RankedList::relevant);
  m.def(
      "build_ranked_lists",
      [](const MfModel& mm, const Dataset& eval, const Dataset* exclude, Branch b) {
        return build_ranked_lists(mm, b, eval, exclude);
      },
      py::arg("model"), py::arg("eval"), py::arg("exclude") = nullptr,
      py::arg("branch") = Branch::Hat);
  m.def(
      "topk_metrics",
      [](const std::vector<RankedList>& lists, const std::vector<std::size_t>& ks,
         std::size_t ndcg_k) { return topk_metrics(lists, ks, ndcg_k); },
      py::arg("lists"), py::arg("ks") = std::vector<std::size_t>{5, 10}, py::arg("ndcg_k") = 50);
  m.def("ndcg_at", &ndcg_at, py::arg("list"), py::arg("k"));
  m.def(
      "alpha", [](double v, const std::vector<double>& aux) { return alpha(v, aux); },
      py::arg("score_val"), py::arg("scores_aux"));
  m.def("modified_score", &modified_score, py::arg("score_val"), py::arg("alpha"),
        py::arg("higher_better") = true);
  m.def("per_mille", &per_mille, py::arg("numerator"), py::arg("impressions"));

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("main_metric", &EvalReport::main_metric)
      .def_readonly("score_on_val", &EvalReport::score_on_val)
      .def_readonly("scores_on_aux", &EvalReport::scores_on_aux)
      .def_readonly("alpha", &EvalReport::alpha)
      .def_readonly("modified_score", &EvalReport::modified_score)
      .def_readonly("per_metric", &EvalReport::per_metric);
  m.def(
      "self_evaluate",
      [](const MfModel& mm, const Dataset& val, const std::vector<Dataset>& aux) {
        return self_evaluate(mm, val, aux);
      },
      py::arg("model"), py::arg("val"), py::arg("aux_val") = std::vector<Dataset>{});
  m.def(
      "evaluate_metrics",
      [](const MfModel& mm, const Dataset& test, const Dataset* exclude,
         std::vector<std::string> names) {
        if (names.empty()) names = default_metric_names();
        return evaluate_metrics(mm, test, exclude, names);
      },
      py::arg("model"), py::arg("test"), py::arg("exclude") = nullptr,
      py::arg("metrics") = std::vector<std::string>{});

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("embedding_dim", &TrainConfig::embedding_dim)
      .def_readwrite("init_scale", &TrainConfig::init_scale)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("l2_lambda", &TrainConfig::l2_lambda)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("objective", &TrainConfig::objective)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("divergence_loss", &TrainConfig::divergence_loss);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("model", &FitResult::model)
      .def_property_readonly("best_epoch", [](const FitResult& r) { return r.state.best_epoch; })
      .def_property_readonly("best_score", [](const FitResult& r) { return r.state.best_score; })
      .def_property_readonly("epochs_run", [](const FitResult& r) { return r.state.epoch; })
      .def_property_readonly("history", [](const FitResult& r) {
        py::list out;
        for (const auto& e : r.state.history) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["d_tr"] = e.loss.d_tr;
          d["a_tr"] = e.loss.a_tr;
          d["reg"] = e.loss.reg;
          d["total"] = e.loss.total;
          d["val_auc"] = e.report.score_on_val;
          d["aux_val_auc"] = e.report.scores_on_aux;
          d["alpha"] = e.report.alpha;
          d["modified_score"] = e.report.modified_score;
          out.append(d);
        }
        return out;
      });
  m.def(
      "fit",
      [](const Dataset& train, const Dataset& val, const TrainConfig& cfg,
         const std::vector<Dataset>& aux_train, const std::vector<Dataset>& aux_val,
         const PropensityTable* pt) {
        FitInputs in;
        in.train = &train;
        in.val = &val;
        in.aux_train = aux_train;
        in.aux_val = aux_val;
        in.propensity = pt;
        py::gil_scoped_release release;
        return fit(in, cfg);
      },
      py::arg("train"), py::arg("val"), py::arg("config"),
      py::arg("aux_train") = std::vector<Dataset>{}, py::arg("aux_val") = std::vector<Dataset>{},
      py::arg("propensity") = nullptr);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_dict", [](const py::dict& d) { return RunConfig::from_key_values(to_kv(d)); })
      .def("to_dict", &RunConfig::to_key_values)
      .def("with_overrides", [](const RunConfig& c, const py::dict& d) { return c.with(to_kv(d)); })
      .def("serialize", &RunConfig::serialize)
      .def("validate", &RunConfig::validate);
  py::class_<RunResult>(m, "RunResult")
      .def_readonly("id", &RunResult::id)
      .def_readonly("dir", &RunResult::dir)
      .def_readonly("best_epoch", &RunResult::best_epoch)
      .def_readonly("epochs_run", &RunResult::epochs_run)
      .def_readonly("report", &RunResult::report);
  m.def("load_run_config", &load_run_config);
  m.def("run_id", &run_id);
  m.def(
      "run_one",
      [](const RunConfig& c) {
        py::gil_scoped_release release;
        return run_one(c);
      },
      py::arg("config"));
  m.def(
      "make_table",
      [](const std::vector<std::filesystem::path>& dirs) {
        auto t = make_table(dirs);
        py::dict d;
        d["columns"] = t.columns;
        d["rows"] = t.row_names;
        d["values"] = t.values;
        d["text"] = t.text;
        d["tsv"] = t.tsv;
        d["json"] = t.json;
        return d;
      },
      py::arg("run_dirs"));
}
