// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"

#include <carimirror/error.hpp>
#include <carimirror/style/bundle.hpp>
#include <carimirror/style/fixture.hpp>
#include <carimirror/style/graph.hpp>
#include <carimirror/style/translator.hpp>
#include <carimirror/synthetic.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace carimirror;
using namespace carimirror::testing;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(CARIMIRROR_FIXTURE_DIR) / "style_toy.cmw";

const StyleModel& toy_model()
{
    static const StyleModel model(load_weights(kFixture), default_face_model().template_mesh());
    return model;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols)
{
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) m(r, c) = nd(rng);
    }
    return m;
}

GraphConvSpec random_spec(std::mt19937_64& rng, int order, int cin, int cout, Activation act = Activation::Identity)
{
    GraphConvSpec s;
    for (int k = 0; k < order; ++k) s.weights.push_back(random_matrix(rng, cin, cout));
    s.bias = random_matrix(rng, 1, cout);
    s.activation = act;
    return s;
}

/// Ten-vertex graph: a strip of triangles closed into a band.
TriMesh ten_vertex_mesh()
{
    Eigen::MatrixX3d v(10, 3);
    for (int i = 0; i < 5; ++i) {
        const double a = 2.0 * M_PI * i / 5.0;
        v.row(i) << std::cos(a), std::sin(a), 0.0;
        v.row(i + 5) << std::cos(a), std::sin(a), 1.0;
    }
    std::vector<Face> f;
    for (int i = 0; i < 5; ++i) {
        const int j = (i + 1) % 5;
        f.push_back({i, j, j + 5});
        f.push_back({i, j + 5, i + 5});
    }
    f.push_back({0, 1, 2});
    return TriMesh(v, f);
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

WeightsBundle small_bundle()
{
    WeightsBundle b;
    b.manifest = {{"note", "unit"}};
    b.add_tensor({"a", {2, 3}, {1.0f, -2.5f, 3.25f, 1e-30f, -0.0f, 7.0f}});
    b.add_tensor({"b", {4}, {0.1f, 0.2f, 0.3f, 0.4f}});
    b.add_tensor({"empty", {0, 5}, {}});
    return b;
}

LatentCode random_code(std::mt19937_64& rng, int dim, StyleDomain d = StyleDomain::Caricature)
{
    return {random_matrix(rng, dim, 1).col(0), d};
}

} // namespace

TEST_CASE("cheb_graph_conv: order one with identity weights returns the input")
{
    std::mt19937_64 rng(1);
    const TriMesh mesh = ten_vertex_mesh();
    const SparseMatrix op = scaled_graph_operator(normalized_graph_laplacian(mesh.faces(), 10), 2.0);
    GraphConvSpec spec;
    spec.weights = {Eigen::MatrixXd::Identity(3, 3)};
    spec.bias = Eigen::RowVectorXd::Zero(3);
    const Eigen::MatrixXd x = random_matrix(rng, 10, 3);
    CHECK((cheb_graph_conv(x, op, spec) - x).norm() == 0.0);
}

TEST_CASE("cheb_graph_conv: zero weights give the broadcast bias")
{
    std::mt19937_64 rng(2);
    const TriMesh mesh = ten_vertex_mesh();
    const SparseMatrix op = scaled_graph_operator(normalized_graph_laplacian(mesh.faces(), 10), 2.0);
    GraphConvSpec spec = random_spec(rng, 6, 3, 4);
    for (auto& w : spec.weights) w.setZero();
    const Eigen::MatrixXd out = cheb_graph_conv(random_matrix(rng, 10, 3), op, spec);
    for (int i = 0; i < 10; ++i) CHECK((out.row(i) - spec.bias).norm() == 0.0);
}

TEST_CASE("cheb_graph_conv is linear in the features for fixed weights")
{
    std::mt19937_64 rng(3);
    const TriMesh mesh = icosphere(1);
    const int n = mesh.vertex_count();
    const SparseMatrix op = scaled_graph_operator(normalized_graph_laplacian(mesh.faces(), n), 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        GraphConvSpec spec = random_spec(rng, 1 + trial % 6, 3, 5);
        spec.bias.setZero();
        const Eigen::MatrixXd x = random_matrix(rng, n, 3), y = random_matrix(rng, n, 3);
        const double a = 0.7 + trial, b = -1.3;
        const Eigen::MatrixXd lhs = cheb_graph_conv(a * x + b * y, op, spec);
        const Eigen::MatrixXd rhs = a * cheb_graph_conv(x, op, spec) + b * cheb_graph_conv(y, op, spec);
        CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
    }
}

TEST_CASE("Chebyshev recurrence matches the explicit polynomials up to order four")
{
    std::mt19937_64 rng(4);
    const TriMesh mesh = ten_vertex_mesh();
    const SparseMatrix L = normalized_graph_laplacian(mesh.faces(), 10);
    const SparseMatrix op = scaled_graph_operator(L, estimate_lambda_max(L));
    const Eigen::MatrixXd A = op;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(10, 10);
    // T0 = 1, T1 = x, T2 = 2x^2 - 1, T3 = 4x^3 - 3x.
    const std::vector<Eigen::MatrixXd> T = {I, A, 2.0 * A * A - I, 4.0 * A * A * A - 3.0 * A};
    const Eigen::MatrixXd x = random_matrix(rng, 10, 2);
    for (int K = 1; K <= 4; ++K) {
        const GraphConvSpec spec = random_spec(rng, K, 2, 3);
        Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(10, 3);
        for (int k = 0; k < K; ++k) direct += T[static_cast<size_t>(k)] * x * spec.weights[static_cast<size_t>(k)];
        direct.rowwise() += spec.bias;
        CHECK((cheb_graph_conv(x, op, spec) - direct).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("normalized graph Laplacian: symmetric, spectrum in [0, 2], lambda_max estimate")
{
    const TriMesh mesh = icosphere(2);
    const int n = mesh.vertex_count();
    const SparseMatrix L = normalized_graph_laplacian(mesh.faces(), n);
    CHECK(Eigen::MatrixXd(L - SparseMatrix(L.transpose())).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{Eigen::MatrixXd(L)};
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
    CHECK(eig.eigenvalues().maxCoeff() <= 2.0 + 1e-12);
    const double est = estimate_lambda_max(L, 5000, 1e-14);
    CHECK(est == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-6));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> scaled{Eigen::MatrixXd(scaled_graph_operator(L, eig.eigenvalues().maxCoeff()))};
    CHECK(scaled.eigenvalues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(scaled.eigenvalues().minCoeff() >= -1.0 - 1e-10);
}

TEST_CASE("cheb_graph_conv rejects shape mismatches")
{
    std::mt19937_64 rng(5);
    const TriMesh mesh = ten_vertex_mesh();
    const SparseMatrix op = scaled_graph_operator(normalized_graph_laplacian(mesh.faces(), 10), 2.0);
    const GraphConvSpec spec = random_spec(rng, 3, 3, 2);
    CHECK_THROWS_AS(cheb_graph_conv(random_matrix(rng, 9, 3), op, spec), InvalidInput);
    CHECK_THROWS_AS(cheb_graph_conv(random_matrix(rng, 10, 4), op, spec), InvalidInput);
    GraphConvSpec bad = spec;
    bad.bias = Eigen::RowVectorXd::Zero(5);
    CHECK_THROWS_AS(cheb_graph_conv(random_matrix(rng, 10, 3), op, bad), InvalidInput);
}

TEST_CASE("weights bundle: save and load round-trips bit-exactly")
{
    const auto path = std::filesystem::temp_directory_path() / "carimirror_roundtrip.cmw";
    const WeightsBundle b = small_bundle();
    save_weights(b, path);
    const WeightsBundle r = load_weights(path);
    REQUIRE(r.tensors.size() == b.tensors.size());
    for (size_t i = 0; i < b.tensors.size(); ++i) {
        CHECK(r.tensors[i].name == b.tensors[i].name);
        CHECK(r.tensors[i].shape == b.tensors[i].shape);
        CHECK(std::memcmp(r.tensors[i].data.data(), b.tensors[i].data.data(), 4 * b.tensors[i].data.size()) == 0);
    }
    CHECK(r.manifest.at("note") == "unit");
    CHECK(serialize_weights(r) == file_bytes(path));
    std::filesystem::remove(path);
}

TEST_CASE("weights bundle: layout is length prefix, manifest, little-endian float32")
{
    const auto bytes = serialize_weights(small_bundle());
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t(bytes[i]) << (8 * i);
    const auto manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(len));
    CHECK(manifest.at("version") == kWeightsFormatVersion);
    CHECK(manifest.at("tensors").size() == 3);
    CHECK(bytes.size() == 8 + len + 4 * 10);
    // 1.0f = 0x3f800000 little-endian.
    const size_t first = 8 + len;
    CHECK(bytes[first] == 0x00);
    CHECK(bytes[first + 1] == 0x00);
    CHECK(bytes[first + 2] == 0x80);
    CHECK(bytes[first + 3] == 0x3f);
}

TEST_CASE("tensor checksum is FNV-1a 64 over the little-endian bytes")
{
    // Published FNV-1a 64 offset basis: the digest of zero bytes.
    CHECK(tensor_checksum(Tensor{"empty", {0}, {}}) == "cbf29ce484222325");
    const Tensor t{"t", {3}, {1.0f, -2.5f, 3.14159f}};
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (float f : t.data) {
        unsigned char raw[4];
        std::memcpy(raw, &f, 4);
        for (unsigned char b : raw) h = (h ^ b) * 0x100000001b3ull;
    }
    char want[17];
    std::snprintf(want, sizeof(want), "%016llx", static_cast<unsigned long long>(h));
    CHECK(tensor_checksum(t) == want);
}

TEST_CASE("weights bundle: every truncation is a structured error")
{
    const auto bytes = serialize_weights(small_bundle());
    for (size_t cut = 0; cut < bytes.size(); ++cut) {
        CHECK_THROWS_AS(parse_weights(std::span(bytes.data(), cut)), FormatError);
    }
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_WITH_AS(parse_weights(extra), doctest::Contains("trailing"), FormatError);
}

TEST_CASE("weights bundle: corrupted tensor, version and shape errors")
{
    const auto bytes = serialize_weights(small_bundle());
    auto corrupt = bytes;
    corrupt[bytes.size() - 3] ^= 0x01;
    CHECK_THROWS_WITH_AS(parse_weights(corrupt), doctest::Contains("checksum"), FormatError);

    auto rewrite = [&](const std::function<void(nlohmann::json&)>& edit) {
        std::uint64_t len = 0;
        for (int i = 0; i < 8; ++i) len |= std::uint64_t(bytes[i]) << (8 * i);
        auto m = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(len));
        edit(m);
        const std::string text = m.dump();
        std::vector<std::uint8_t> out;
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((text.size() >> (8 * i)) & 0xff));
        out.insert(out.end(), text.begin(), text.end());
        out.insert(out.end(), bytes.begin() + 8 + static_cast<long>(len), bytes.end());
        return out;
    };
    CHECK_THROWS_WITH_AS(parse_weights(rewrite([](auto& m) { m["version"] = 2; })), doctest::Contains("version"), FormatError);
    CHECK_THROWS_AS(parse_weights(rewrite([](auto& m) { m["tensors"][1]["shape"] = {5}; })), FormatError);
    CHECK_THROWS_AS(parse_weights(rewrite([](auto& m) { m["format"] = "other"; })), FormatError);
    CHECK_THROWS_AS(parse_weights(rewrite([](auto& m) { m["tensors"][1]["name"] = "a"; })), FormatError);

    WeightsBundle b;
    CHECK_THROWS_AS(b.add_tensor({"x", {2, 2}, {1.0f}}), InvalidInput);
}

TEST_CASE("style model refuses a bundle for another topology")
{
    const WeightsBundle bundle = load_weights(kFixture);
    const TriMesh& templ = default_face_model().template_mesh();
    // Reverse the vertex order: same shape, different indexing.
    const int n = templ.vertex_count();
    Eigen::MatrixX3d v(n, 3);
    for (int i = 0; i < n; ++i) v.row(n - 1 - i) = templ.vertices().row(i);
    std::vector<Face> faces = templ.faces();
    for (Face& f : faces) {
        for (int& idx : f) idx = n - 1 - idx;
    }
    const TriMesh reordered(v, faces);
    CHECK_THROWS_WITH_AS(StyleModel(bundle, reordered), doctest::Contains("topology"), InvalidInput);
    CHECK_THROWS_AS(toy_model().encode(reordered, StyleDomain::Regular), InvalidInput);
    CHECK_THROWS_AS(StyleModel(bundle, icosphere(1)), InvalidInput);
}

TEST_CASE("toy bundle: latent dimensions and determinism")
{
    const StyleModel& model = toy_model();
    CHECK(model.latent_dim(StyleDomain::Regular) == 200);
    CHECK(model.latent_dim(StyleDomain::Caricature) == 350);
    std::mt19937_64 rng(6);
    const auto& fm = default_face_model();
    const TriMesh x = fm.synthesize(fm.sample_identity(rng), fm.sample_expression(rng));
    const LatentCode a = model.encode(x, StyleDomain::Regular);
    const LatentCode b = model.encode(x, StyleDomain::Regular);
    CHECK(a.values.size() == 200);
    CHECK(a.values == b.values);
    const LatentCode y = model.translate_latent(a);
    CHECK(y.domain == StyleDomain::Caricature);
    CHECK(y.values.size() == 350);
    CHECK(model.translate_latent(a).values == y.values);
    CHECK(model.translate_latent(y).values.size() == 200);
    const TriMesh d1 = model.decode(y), d2 = model.decode(y);
    CHECK(d1.vertices() == d2.vertices());
    CHECK(d1.same_topology(fm.template_mesh()));
}

TEST_CASE("toy bundle: tag and dimension mismatches are rejected")
{
    const StyleModel& model = toy_model();
    std::mt19937_64 rng(7);
    LatentCode wrongDim = random_code(rng, 200, StyleDomain::Caricature);
    CHECK_THROWS_AS(model.decode(wrongDim), InvalidInput);
    CHECK_THROWS_AS(model.translate_latent(wrongDim), InvalidInput);
}

TEST_CASE("toy bundle: decode(encode(x)) on held-out meshes of both styles")
{
    const StyleModel& model = toy_model();
    const auto& fm = default_face_model();
    std::mt19937_64 rng(8);
    for (FaceStyle style : {FaceStyle::Regular, FaceStyle::Exaggerated}) {
        const StyleDomain d = style == FaceStyle::Regular ? StyleDomain::Regular : StyleDomain::Caricature;
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const TriMesh x = fm.synthesize(fm.sample_identity(rng), fm.sample_expression(rng), style);
            const TriMesh r = model.decode(model.encode(x, d));
            worst = std::max(worst, (r.vertices() - x.vertices()).rowwise().norm().mean() / x.bbox_diagonal());
        }
        MESSAGE(domain_name(d) << " worst mean vertex error / bbox diagonal " << worst);
        CHECK(worst < 0.05);
    }
}

TEST_CASE("toy bundle: encode(decode(z)) recovers random codes")
{
    const StyleModel& model = toy_model();
    std::mt19937_64 rng(9);
    for (StyleDomain d : {StyleDomain::Regular, StyleDomain::Caricature}) {
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            const LatentCode z = random_code(rng, model.latent_dim(d), d);
            const LatentCode back = model.encode(model.decode(z), d);
            worst = std::max(worst, (back.values - z.values).norm() / z.values.norm());
        }
        MESSAGE(domain_name(d) << " worst relative round-trip error " << worst);
        CHECK(worst < 0.1);
    }
}

TEST_CASE("toy bundle: cycle consistency and translation accuracy on held-out meshes")
{
    const StyleModel& model = toy_model();
    const auto& fm = default_face_model();
    std::mt19937_64 rng(10);
    double worstCycle = 0.0, worstShape = 0.0;
    for (int i = 0; i < 50; ++i) {
        const auto id = fm.sample_identity(rng);
        const auto ex = fm.sample_expression(rng);
        const LatentCode x = model.encode(fm.synthesize(id, ex), StyleDomain::Regular);
        const LatentCode y = model.translate_latent(x);
        worstCycle = std::max(worstCycle, (model.translate_latent(y).values - x.values).norm() / x.values.norm());
        const TriMesh truth = fm.synthesize(id, ex, FaceStyle::Exaggerated);
        worstShape = std::max(worstShape, (model.decode(y).vertices() - truth.vertices()).rowwise().norm().mean() / truth.bbox_diagonal());
    }
    MESSAGE("worst cycle error " << worstCycle << ", worst translated shape error " << worstShape);
    CHECK(worstCycle < 0.15);
    CHECK(worstShape < 0.05);
}

TEST_CASE("smooth_latent: trivial cases")
{
    std::mt19937_64 rng(11);
    const LatentCode a = random_code(rng, 350), b = random_code(rng, 350), c = random_code(rng, 350);
    CHECK(smooth_latent(a, b, c, 0.0).values == c.values);
    CHECK((smooth_latent(c, c, c, 0.5).values - c.values).norm() < 1e-14 * c.values.norm());
    CHECK_THROWS_AS(smooth_latent(a, b, LatentCode{c.values, StyleDomain::Regular}, 0.1), InvalidInput);
    CHECK_THROWS_AS(smooth_latent(a, b, random_code(rng, 200), 0.1), InvalidInput);
    CHECK_THROWS_AS(smooth_latent(a, b, c, -1.0), InvalidInput);
}

TEST_CASE("smooth_latent matches gradient descent on the objective")
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ud(0.0, 10.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const LatentCode p2 = random_code(rng, 350), p1 = random_code(rng, 350), c = random_code(rng, 350);
        const double mu = trial == 0 ? 0.001 : ud(rng);
        // f(x) = mu |p2 - 2 p1 + x|^2 + |x - c|^2; its gradient is 2 mu (p2 - 2 p1 + x) + 2 (x - c).
        Eigen::VectorXd x = Eigen::VectorXd::Zero(350);
        const double step = 0.2 / (1.0 + mu);
        for (int it = 0; it < 400; ++it) {
            const Eigen::VectorXd g = 2.0 * mu * (p2.values - 2.0 * p1.values + x) + 2.0 * (x - c.values);
            if (g.norm() < 1e-13) break;
            x -= step * g;
        }
        worst = std::max(worst, (smooth_latent(p2, p1, c, mu).values - x).cwiseAbs().maxCoeff());
    }
    MESSAGE("worst deviation from the numeric minimizer " << worst);
    CHECK(worst < 1e-8);
}

TEST_CASE("smooth_latent stays within the weighted distance to the extrapolation")
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ud(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int dim = 1 + trial % 40;
        const LatentCode p2 = random_code(rng, dim), p1 = random_code(rng, dim), c = random_code(rng, dim);
        const double mu = ud(rng);
        const double lhs = (smooth_latent(p2, p1, c, mu).values - c.values).norm();
        const double rhs = mu / (1.0 + mu) * (2.0 * p1.values - p2.values - c.values).norm();
        CHECK(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
    }
}

TEST_CASE("translate_sequence: constant input gives constant output")
{
    const StyleModel& model = toy_model();
    const auto& fm = default_face_model();
    std::mt19937_64 rng(14);
    const TriMesh x = fm.synthesize(fm.sample_identity(rng), fm.sample_expression(rng));
    const auto seq = translate_sequence(std::vector<TriMesh>(6, x), model, 0.001);
    REQUIRE(seq.meshes.size() == 6);
    for (size_t k = 2; k < 6; ++k) CHECK((seq.meshes[k].vertices() - seq.meshes[1].vertices()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("translate_sequence: smoothing lowers the latent second difference")
{
    const StyleModel& model = toy_model();
    const auto& fm = default_face_model();
    std::mt19937_64 rng(15);
    std::normal_distribution<double> jitter(0.0, 0.05);
    const Eigen::VectorXd id = fm.sample_identity(rng);
    std::vector<TriMesh> frames;
    for (int k = 0; k < 30; ++k) {
        Eigen::VectorXd ex(SyntheticFaceModel::kExpressionDims);
        for (int j = 0; j < ex.size(); ++j) ex[j] = 0.5 + 0.3 * std::sin(0.2 * k + j) + jitter(rng);
        frames.push_back(fm.synthesize(id, ex));
    }
    auto roughness = [](const std::vector<LatentCode>& codes) {
        double s = 0.0;
        for (size_t k = 2; k < codes.size(); ++k) s += (codes[k].values - 2.0 * codes[k - 1].values + codes[k - 2].values).squaredNorm();
        return s;
    };
    const double raw = roughness(translate_sequence(frames, model, 0.0).smoothed);
    const double smooth = roughness(translate_sequence(frames, model, 0.001).smoothed);
    MESSAGE("second-difference energy: mu=0 " << raw << ", mu=0.001 " << smooth);
    CHECK(smooth <= raw);
}

TEST_CASE("random bundle conforms to the architecture at another topology")
{
    const TriMesh mesh = icosphere(2);
    StyleArchitecture arch;
    arch.regularDim = 20;
    arch.caricatureDim = 30;
    const auto bundle = parse_weights(serialize_weights(random_style_bundle(mesh, arch, 3, 8)));
    const StyleModel model(bundle, mesh);
    const LatentCode y = model.translate_latent(model.encode(mesh, StyleDomain::Regular));
    CHECK(y.values.size() == 30);
    CHECK(model.decode(y).vertex_count() == mesh.vertex_count());
    CHECK(model.decode(y).vertices().allFinite());
}
