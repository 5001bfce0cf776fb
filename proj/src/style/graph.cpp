// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/style/graph.hpp>

#include <cmath>

namespace carimirror {

Activation parse_activation(const std::string& name)
{
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "elu") return Activation::Elu;
    if (name == "tanh") return Activation::Tanh;
    throw FormatError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a)
{
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Tanh: return "tanh";
    }
    return "identity";
}

void apply_activation(Eigen::Ref<Eigen::MatrixXd> values, Activation a)
{
    switch (a) {
    case Activation::Identity: return;
    case Activation::Relu: values = values.cwiseMax(0.0); return;
    case Activation::Elu: values = values.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); }); return;
    case Activation::Tanh: values = values.array().tanh().matrix(); return;
    }
}

SparseMatrix normalized_graph_laplacian(const std::vector<Face>& faces, int vertexCount)
{
    if (vertexCount <= 0) throw InvalidInput("graph Laplacian: empty vertex set");
    const auto edges = mesh_edges(faces);
    Eigen::VectorXd degree = Eigen::VectorXd::Zero(vertexCount);
    for (const auto& e : edges) {
        if (e[0] < 0 || e[1] >= vertexCount) throw InvalidInput("graph Laplacian: face index out of range");
        degree[e[0]] += 1.0;
        degree[e[1]] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges.size() * 2 + static_cast<size_t>(vertexCount));
    for (int i = 0; i < vertexCount; ++i) {
        if (degree[i] > 0.0) trips.emplace_back(i, i, 1.0);
    }
    for (const auto& e : edges) {
        const double w = -1.0 / std::sqrt(degree[e[0]] * degree[e[1]]);
        trips.emplace_back(e[0], e[1], w);
        trips.emplace_back(e[1], e[0], w);
    }
    SparseMatrix L(vertexCount, vertexCount);
    L.setFromTriplets(trips.begin(), trips.end());
    return L;
}

double estimate_lambda_max(const SparseMatrix& laplacian, int iterations, double tolerance)
{
    const int n = static_cast<int>(laplacian.rows());
    if (n == 0 || laplacian.cols() != n) throw InvalidInput("estimate_lambda_max: operator must be square and non-empty");
    // Deterministic start vector with no special structure relative to the mesh.
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = std::sin(1.0 + 0.7 * i);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd w = laplacian * v;
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        v = w / norm;
        if (std::abs(next - lambda) <= tolerance * std::max(1.0, std::abs(next))) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return lambda;
}

SparseMatrix scaled_graph_operator(const SparseMatrix& laplacian, double lambdaMax)
{
    if (!(lambdaMax > 0.0) || !std::isfinite(lambdaMax)) throw InvalidInput("scaled_graph_operator: lambdaMax must be positive");
    SparseMatrix identity(laplacian.rows(), laplacian.cols());
    identity.setIdentity();
    SparseMatrix out = (2.0 / lambdaMax) * laplacian - identity;
    out.makeCompressed();
    return out;
}

void GraphConvSpec::validate() const
{
    if (weights.empty()) throw InvalidInput("graph conv: Chebyshev order must be at least 1");
    for (const auto& w : weights) {
        if (w.rows() != weights.front().rows() || w.cols() != weights.front().cols()) {
            throw InvalidInput("graph conv: weight shapes differ between Chebyshev terms");
        }
    }
    if (bias.size() != out_channels()) throw InvalidInput("graph conv: bias length differs from output channels");
}

Eigen::MatrixXd cheb_graph_conv(const Eigen::MatrixXd& features, const SparseMatrix& scaledOperator,
                                const GraphConvSpec& spec)
{
    spec.validate();
    if (features.rows() != scaledOperator.rows() || scaledOperator.cols() != scaledOperator.rows()) {
        throw InvalidInput("graph conv: feature rows " + std::to_string(features.rows()) + " do not match operator size " +
                           std::to_string(scaledOperator.rows()));
    }
    if (features.cols() != spec.in_channels()) {
        throw InvalidInput("graph conv: expected " + std::to_string(spec.in_channels()) + " input channels, got " +
                           std::to_string(features.cols()));
    }
    Eigen::MatrixXd out = features * spec.weights[0];
    if (spec.order() > 1) {
        Eigen::MatrixXd prev = features;
        Eigen::MatrixXd cur = scaledOperator * features;
        out.noalias() += cur * spec.weights[1];
        for (int k = 2; k < spec.order(); ++k) {
            Eigen::MatrixXd next = 2.0 * (scaledOperator * cur) - prev;
            out.noalias() += next * spec.weights[static_cast<size_t>(k)];
            prev = std::move(cur);
            cur = std::move(next);
        }
    }
    out.rowwise() += spec.bias;
    apply_activation(out, spec.activation);
    return out;
}

} // namespace carimirror
