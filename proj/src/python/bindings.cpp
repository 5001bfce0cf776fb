// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/io/obj.hpp>
#include <carimirror/mesh.hpp>
#include <carimirror/style/bundle.hpp>
#include <carimirror/style/graph.hpp>
#include <carimirror/style/translator.hpp>
#include <carimirror/synthetic.hpp>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace carimirror;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

std::vector<Face> faces_from(const IndexArray& f)
{
    if (f.ndim() != 2 || f.shape(1) != 3) throw InvalidInput("faces must be an (F, 3) integer array");
    auto r = f.unchecked<2>();
    std::vector<Face> out(static_cast<size_t>(f.shape(0)));
    for (py::ssize_t i = 0; i < f.shape(0); ++i) {
        out[static_cast<size_t>(i)] = {static_cast<int>(r(i, 0)), static_cast<int>(r(i, 1)), static_cast<int>(r(i, 2))};
    }
    return out;
}

py::array_t<std::int64_t> faces_to(const std::vector<Face>& faces)
{
    py::array_t<std::int64_t> out({static_cast<py::ssize_t>(faces.size()), py::ssize_t{3}});
    auto w = out.mutable_unchecked<2>();
    for (size_t i = 0; i < faces.size(); ++i) {
        for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(i), k) = faces[i][static_cast<size_t>(k)];
    }
    return out;
}

py::dict bundle_to_python(const WeightsBundle& b)
{
    py::dict tensors;
    for (const Tensor& t : b.tensors) {
        std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
        py::array_t<float> a(shape);
        std::copy(t.data.begin(), t.data.end(), a.mutable_data());
        tensors[py::str(t.name)] = a;
    }
    py::dict out;
    out["manifest"] = py::module_::import("json").attr("loads")(b.manifest.dump());
    out["tensors"] = tensors;
    return out;
}

WeightsBundle bundle_from_python(const py::dict& manifest, const py::dict& tensors)
{
    WeightsBundle b;
    b.manifest = nlohmann::json::parse(py::module_::import("json").attr("dumps")(manifest).cast<std::string>());
    for (const auto& item : tensors) {
        const FloatArray a = py::cast<FloatArray>(item.second);
        Tensor t;
        t.name = py::cast<std::string>(item.first);
        for (py::ssize_t d = 0; d < a.ndim(); ++d) t.shape.push_back(a.shape(d));
        t.data.assign(a.data(), a.data() + a.size());
        b.add_tensor(std::move(t));
    }
    return b;
}

LatentCode code_from(const Eigen::VectorXd& values, const std::string& domain)
{
    return LatentCode{values, parse_domain(domain)};
}

/// StyleModel with the topology mesh it was bound to.
class PyStyleModel
{
public:
    PyStyleModel(const std::filesystem::path& weights, const Eigen::MatrixX3d& vertices, const IndexArray& faces)
        : m_model(load_weights(weights), TriMesh(vertices, faces_from(faces)))
    {
    }

    Eigen::VectorXd encode(const Eigen::MatrixX3d& vertices, const std::string& domain) const
    {
        return m_model.encode(m_model.topology().with_vertices(vertices), parse_domain(domain)).values;
    }
    Eigen::MatrixX3d decode(const Eigen::VectorXd& code, const std::string& domain) const
    {
        return m_model.decode(code_from(code, domain)).vertices();
    }
    Eigen::VectorXd translate(const Eigen::VectorXd& code, const std::string& domain) const
    {
        return m_model.translate_latent(code_from(code, domain)).values;
    }
    int latent_dim(const std::string& domain) const { return m_model.latent_dim(parse_domain(domain)); }
    double lambda_max() const { return m_model.lambda_max(); }
    std::string topology_id() const { return m_model.topology().topology(); }

private:
    StyleModel m_model;
};

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "carimirror native engine";
    m.attr("WEIGHTS_FORMAT_VERSION") = kWeightsFormatVersion;
    m.attr("WEIGHTS_FORMAT_NAME") = kWeightsFormatName;

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", m.attr("Error").ptr());
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);

    m.def("topology_id", [](const IndexArray& faces, int vertexCount) { return topology_id(faces_from(faces), vertexCount); },
          py::arg("faces"), py::arg("vertex_count"));

    m.def(
        "synthetic_template",
        [] {
            const SyntheticFaceModel& model = default_face_model();
            return py::make_tuple(Eigen::MatrixX3d(model.template_mesh().vertices()), faces_to(model.template_mesh().faces()),
                                  Eigen::MatrixX2d(model.uv()));
        },
        "Template mesh of the built-in synthetic face family: (vertices, faces, uv).");

    m.def(
        "read_obj",
        [](const std::filesystem::path& path) {
            io::ObjData d = io::read_obj(path);
            py::object uv = py::none();
            if (d.uv) uv = py::cast(Eigen::MatrixX2d(*d.uv));
            return py::make_tuple(Eigen::MatrixX3d(d.mesh.vertices()), faces_to(d.mesh.faces()), uv);
        },
        py::arg("path"), "Returns (vertices (V,3), faces (F,3), uv (V,2) or None).");

    m.def("load_weights", [](const std::filesystem::path& p) { return bundle_to_python(load_weights(p)); }, py::arg("path"),
          "Returns {'manifest': dict, 'tensors': {name: float32 array}} in file order.");
    m.def(
        "parse_weights",
        [](const py::bytes& data) {
            const std::string s = data;
            return bundle_to_python(parse_weights({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
        },
        py::arg("data"));
    m.def(
        "save_weights",
        [](const std::filesystem::path& p, const py::dict& manifest, const py::dict& tensors) {
            save_weights(bundle_from_python(manifest, tensors), p);
        },
        py::arg("path"), py::arg("manifest"), py::arg("tensors"));
    m.def(
        "serialize_weights",
        [](const py::dict& manifest, const py::dict& tensors) {
            const auto bytes = serialize_weights(bundle_from_python(manifest, tensors));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("manifest"), py::arg("tensors"));

    m.def(
        "scaled_graph_operator",
        [](const IndexArray& faces, int vertexCount, double lambdaMax) {
            const SparseMatrix L = normalized_graph_laplacian(faces_from(faces), vertexCount);
            return SparseMatrix(scaled_graph_operator(L, lambdaMax > 0 ? lambdaMax : estimate_lambda_max(L)));
        },
        py::arg("faces"), py::arg("vertex_count"), py::arg("lambda_max") = 0.0,
        "2 L / lambda_max - I for the normalized Laplacian; lambda_max <= 0 estimates it.");

    m.def(
        "smooth_latent",
        [](const Eigen::VectorXd& p2, const Eigen::VectorXd& p1, const Eigen::VectorXd& c, double mu) {
            const StyleDomain d = StyleDomain::Caricature;
            return smooth_latent({p2, d}, {p1, d}, {c, d}, mu).values;
        },
        py::arg("prev2"), py::arg("prev1"), py::arg("current"), py::arg("mu"));

    py::class_<PyStyleModel>(m, "StyleModel")
        .def(py::init<const std::filesystem::path&, const Eigen::MatrixX3d&, const IndexArray&>(), py::arg("weights"),
             py::arg("vertices"), py::arg("faces"))
        .def("encode", &PyStyleModel::encode, py::arg("vertices"), py::arg("domain"))
        .def("decode", &PyStyleModel::decode, py::arg("code"), py::arg("domain"))
        .def("translate", &PyStyleModel::translate, py::arg("code"), py::arg("domain"))
        .def("latent_dim", &PyStyleModel::latent_dim, py::arg("domain"))
        .def_property_readonly("lambda_max", &PyStyleModel::lambda_max)
        .def_property_readonly("topology_id", &PyStyleModel::topology_id);
}
