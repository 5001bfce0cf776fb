// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>

#include <Eigen/Core>

#include <string>
#include <vector>

namespace carimirror {

enum class Activation { Identity, Relu, Elu, Tanh };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);
void apply_activation(Eigen::Ref<Eigen::MatrixXd> values, Activation a);

/// Symmetric normalized graph Laplacian I - D^{-1/2} A D^{-1/2} of the mesh edge graph.
/// Isolated vertices get a zero row.
SparseMatrix normalized_graph_laplacian(const std::vector<Face>& faces, int vertexCount);

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
double estimate_lambda_max(const SparseMatrix& laplacian, int iterations = 200, double tolerance = 1e-10);

/// 2 L / lambdaMax - I.
SparseMatrix scaled_graph_operator(const SparseMatrix& laplacian, double lambdaMax);

/// One Chebyshev graph convolution layer.
struct GraphConvSpec
{
    /// weights[k] is Cin x Cout for T_k.
    std::vector<Eigen::MatrixXd> weights;
    Eigen::RowVectorXd bias;
    Activation activation = Activation::Identity;

    int order() const { return static_cast<int>(weights.size()); }
    int in_channels() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()); }
    int out_channels() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
    void validate() const;
};

/// act(sum_{k<K} T_k(L~) X W_k + b) with T_0 = I, T_1 = L~, T_{k+1} = 2 L~ T_k - T_{k-1}.
/// `features` is V x Cin; `scaledOperator` is the V x V matrix L~.
Eigen::MatrixXd cheb_graph_conv(const Eigen::MatrixXd& features, const SparseMatrix& scaledOperator,
                                const GraphConvSpec& spec);

} // namespace carimirror
