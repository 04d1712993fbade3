#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixopt/acquire.hpp"
#include "mixopt/engine.hpp"
#include "mixopt/ifweights.hpp"
#include "mixopt/regret.hpp"
#include "mixopt/truncexp.hpp"
#include "mixopt/validation.hpp"

namespace py = pybind11;
using namespace mixopt;

namespace {

json pyobj_to_json(const py::handle& obj) {
    if (obj.is_none()) return nullptr;
    if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
    if (py::isinstance<py::int_>(obj)) return obj.cast<std::int64_t>();
    if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
    if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
    if (py::isinstance<py::dict>(obj)) {
        json j = json::object();
        for (auto item : obj.cast<py::dict>()) {
            j[item.first.cast<std::string>()] = pyobj_to_json(item.second);
        }
        return j;
    }
    if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
        json j = json::array();
        for (auto item : obj.cast<py::sequence>()) j.push_back(pyobj_to_json(item));
        return j;
    }
    throw Error(ErrorKind::ConfigInvalid, "unsupported value in a config mapping");
}

py::object json_to_pyobj(const json& j) {
    switch (j.type()) {
        case json::value_t::null:
            return py::none();
        case json::value_t::boolean:
            return py::bool_(j.get<bool>());
        case json::value_t::number_integer:
            return py::int_(j.get<std::int64_t>());
        case json::value_t::number_unsigned:
            return py::int_(j.get<std::uint64_t>());
        case json::value_t::number_float:
            return py::float_(j.get<double>());
        case json::value_t::string:
            return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_pyobj(item));
            return out;
        }
        case json::value_t::object: {
            py::dict out;
            for (const auto& [key, value] : j.items()) {
                out[py::str(key)] = json_to_pyobj(value);
            }
            return out;
        }
        default:
            return py::none();
    }
}

DomainDataset make_domain(const std::string& name, const std::vector<std::string>& ids,
                          const std::vector<double>& influences,
                          const std::optional<std::vector<std::string>>& payload_refs) {
    if (ids.size() != influences.size() ||
        (payload_refs && payload_refs->size() != ids.size())) {
        throw Error(ErrorKind::DimensionMismatch,
                    "ids, influences, and payload_refs must have equal lengths");
    }
    std::vector<DomainPoint> points;
    points.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        DomainPoint p{ids[i], influences[i], {}};
        if (payload_refs && !(*payload_refs)[i].empty()) p.payload_ref = (*payload_refs)[i];
        points.push_back(std::move(p));
    }
    return DomainDataset(name, std::move(points));
}

RunConfig config_from_dict(const py::dict& d) { return pyobj_to_json(d).get<RunConfig>(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "data-mixture optimizer core";

    py::register_exception<Error>(m, "MixoptError");

    py::class_<MixingRatio>(m, "MixingRatio")
        .def(py::init([](const std::vector<double>& w) { return MixingRatio::normalized(w); }),
             py::arg("weights"))
        .def_static("uniform", &MixingRatio::uniform, py::arg("n_domains"))
        .def_property_readonly("weights",
                               [](const MixingRatio& r) { return r.weights(); })
        .def("__len__", &MixingRatio::size)
        .def("__getitem__",
             [](const MixingRatio& r, std::size_t i) {
                 if (i >= r.size()) throw py::index_error();
                 return r[i];
             })
        .def("__eq__", [](const MixingRatio& a, const MixingRatio& b) { return a == b; })
        .def("__repr__", [](const MixingRatio& r) {
            std::string out = "MixingRatio([";
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (i) out += ", ";
                out += std::to_string(r[i]);
            }
            return out + "])";
        });

    py::class_<DomainDataset>(m, "Domain")
        .def(py::init(&make_domain), py::arg("name"), py::arg("ids"), py::arg("influences"),
             py::arg("payload_refs") = py::none())
        .def_static("from_csv", &ifweights::load_influence_csv, py::arg("name"), py::arg("path"))
        .def_property_readonly("name", &DomainDataset::name)
        .def("__len__", &DomainDataset::size)
        .def("ids",
             [](const DomainDataset& d) {
                 std::vector<std::string> out;
                 for (const auto& p : d.points()) out.push_back(p.id);
                 return out;
             })
        .def("influences", [](const DomainDataset& d) {
            std::vector<double> out;
            for (const auto& p : d.points()) out.push_back(p.influence);
            return out;
        });

    py::class_<MixtureManifest>(m, "Manifest")
        .def_property_readonly("target_ratio",
                               [](const MixtureManifest& m_) { return m_.target_ratio; })
        .def_property_readonly("total_size",
                               [](const MixtureManifest& m_) { return m_.total_size; })
        .def("digest", &MixtureManifest::digest)
        .def("to_dict", [](const MixtureManifest& m_) { return json_to_pyobj(json(m_)); });

    py::class_<evaluate::EvaluatorHandle>(m, "Evaluator")
        .def_static(
            "from_config",
            [](const py::dict& spec, const std::vector<DomainDataset>& domains,
               const std::string& base_dir) {
                return evaluate::EvaluatorHandle::from_config(pyobj_to_json(spec), domains,
                                                              base_dir);
            },
            py::arg("spec"), py::arg("domains"), py::arg("base_dir") = ".")
        .def("evaluate", &evaluate::EvaluatorHandle::evaluate, py::arg("manifest"),
             py::arg("iteration"), py::arg("sample_index"), py::arg("seed"))
        .def_property_readonly("true_optimum", &evaluate::EvaluatorHandle::true_optimum);

    py::class_<gp::GPState>(m, "Surrogate")
        .def_static(
            "fit",
            [](const std::vector<std::vector<double>>& inputs, const std::vector<double>& targets,
               double zeta) {
                std::vector<MixingRatio> ratios;
                ratios.reserve(inputs.size());
                for (const auto& w : inputs) ratios.push_back(MixingRatio::normalized(w));
                return gp::GPState::fit(std::move(ratios), targets, zeta,
                                        gp::default_lengthscale_grid());
            },
            py::arg("inputs"), py::arg("targets"), py::arg("zeta") = 0.01)
        .def("append",
             [](const gp::GPState& s, const std::vector<double>& input, double target) {
                 return s.append(MixingRatio::normalized(input), target);
             })
        .def("posterior",
             [](const gp::GPState& s, const std::vector<double>& query) {
                 const auto post = s.posterior(MixingRatio::normalized(query));
                 return py::make_tuple(post.mean, post.stddev);
             })
        .def_property_readonly("lengthscale",
                               [](const gp::GPState& s) { return s.kernel().lengthscale; })
        .def("__len__", &gp::GPState::size);

    m.def(
        "propose_ratio",
        [](const gp::GPState& state, std::size_t dim, std::uint64_t seed, double beta,
           std::size_t n_candidates) {
            AcquireConfig cfg;
            cfg.beta = beta;
            cfg.n_candidates = n_candidates;
            return acquire::propose_ratio(state, dim, cfg, seed);
        },
        py::arg("surrogate"), py::arg("dim"), py::arg("seed"), py::arg("beta") = 0.5,
        py::arg("n_candidates") = 4096);

    m.def(
        "normalize_weights",
        [](const std::vector<double>& influences, std::optional<double> shift_epsilon) {
            std::vector<DomainPoint> points;
            for (std::size_t i = 0; i < influences.size(); ++i) {
                points.push_back({"p" + std::to_string(i), influences[i], {}});
            }
            const DomainDataset domain("inline", std::move(points));
            const auto weights = shift_epsilon
                                     ? ifweights::normalize_weights(domain, *shift_epsilon)
                                     : ifweights::normalize_weights(domain);
            return weights.probs;
        },
        py::arg("influences"), py::arg("shift_epsilon") = py::none());

    m.def(
        "estimate",
        [](const std::vector<double>& ratio, const std::vector<DomainDataset>& domains,
           const evaluate::EvaluatorHandle& evaluator, std::size_t mixture_size, std::size_t k,
           const std::string& estimator, bool with_replacement, bool maximize,
           std::int64_t iteration, std::uint64_t seed) {
            RunConfig cfg;
            cfg.n_domains = domains.size();
            cfg.mixture_size = mixture_size;
            cfg.sampling_size = k;
            cfg.estimator_kind = estimator_kind_from_string(estimator);
            cfg.with_replacement = with_replacement;
            cfg.maximize = maximize;
            const auto result = estimator::estimate_inner(MixingRatio::normalized(ratio), domains,
                                                          cfg, evaluator, iteration, seed);
            py::dict out;
            out["value"] = result.value;
            out["losses"] = result.all_losses;
            out["digests"] = result.all_digests;
            out["best_digest"] = result.best_manifest.digest();
            return out;
        },
        py::arg("ratio"), py::arg("domains"), py::arg("evaluator"), py::arg("mixture_size"),
        py::arg("k") = 1, py::arg("estimator") = "if_driven",
        py::arg("with_replacement") = false, py::arg("maximize") = false,
        py::arg("iteration") = 0, py::arg("seed") = 0);

    m.def(
        "run",
        [](const py::dict& config, const std::vector<DomainDataset>& domains,
           const py::dict& evaluator_spec, const std::optional<std::string>& output_dir,
           const std::string& base_dir) {
            const RunConfig cfg = config_from_dict(config);
            const json spec = pyobj_to_json(evaluator_spec);
            const auto evaluator = evaluate::EvaluatorHandle::from_config(spec, domains, base_dir);

            std::optional<engine::RunWriter> writer;
            if (output_dir) {
                writer.emplace(*output_dir);
                json extra;
                extra["evaluator"] = spec;
                extra["domains"] = domains;
                writer->write_config(cfg, extra);
            }
            const auto state = engine::run_to_completion(cfg, domains, evaluator,
                                                         writer ? &*writer : nullptr);
            py::dict out;
            out["best_loss"] = state.best.loss;
            out["best_iteration"] = state.best.iteration;
            out["best_ratio"] = state.best.manifest.target_ratio.weights();
            out["best_digest"] = state.best.manifest.digest();
            py::list history;
            for (const auto& obs : state.history) {
                py::dict row;
                row["iteration"] = obs.iteration;
                row["loss"] = obs.loss;
                row["ratio"] = obs.ratio.weights();
                history.append(row);
            }
            out["history"] = history;
            return out;
        },
        py::arg("config"), py::arg("domains"), py::arg("evaluator"),
        py::arg("output_dir") = py::none(), py::arg("base_dir") = ".");

    m.def("validate", [](const std::string& suite) {
        const auto result = validation::run_suite(suite);
        py::dict out;
        out["name"] = result.name;
        out["passed"] = result.passed;
        out["lines"] = result.lines;
        return out;
    });

    m.def("order_stat_pdf", &truncexp::order_stat_pdf, py::arg("u"), py::arg("params"));
    m.def("order_stat_cdf", &truncexp::order_stat_cdf, py::arg("u"), py::arg("params"));
    m.def("order_stat_quantile", &truncexp::order_stat_quantile, py::arg("q"),
          py::arg("params"));
    m.def("sample_order_stat", &truncexp::sample_order_stat, py::arg("params"), py::arg("seed"));

    py::class_<truncexp::TruncExpParams>(m, "TruncExpParams")
        .def(py::init([](double rate, double cutoff, std::size_t k) {
                 truncexp::TruncExpParams p{rate, cutoff, k};
                 p.validate();
                 return p;
             }),
             py::arg("rate") = 1.0, py::arg("cutoff") = 1.0, py::arg("k") = 1)
        .def_readonly("rate", &truncexp::TruncExpParams::rate)
        .def_readonly("cutoff", &truncexp::TruncExpParams::cutoff)
        .def_readonly("k", &truncexp::TruncExpParams::k);

    m.def("bound_constant", &regret::bound_constant, py::arg("c"), py::arg("k"));
    m.def("average_regret_bound", &regret::average_regret_bound, py::arg("c"), py::arg("k"),
          py::arg("delta"));
}
