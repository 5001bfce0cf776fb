// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <carimirror/mesh.hpp>
#include <carimirror/style/bundle.hpp>
#include <carimirror/style/graph.hpp>

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace carimirror {

enum class StyleDomain { Regular, Caricature };

std::string domain_name(StyleDomain d);
StyleDomain parse_domain(const std::string& name);

struct LatentCode
{
    Eigen::VectorXd values;
    StyleDomain domain = StyleDomain::Regular;
};

/// Float32 weights, row-major as stored in the bundle; products accumulate in double.
using DenseWeights = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Graph-convolutional encoder: conv stack, vertex-major flatten, dense posterior mean.
class MeshEncoder
{
public:
    MeshEncoder() = default;
    MeshEncoder(const WeightsBundle& bundle, const std::string& network, StyleDomain domain, int vertexCount, int chebOrder);

    /// `scaledOperator` is the shared L~ of the topology.
    LatentCode encode(const Eigen::MatrixX3d& vertices, const SparseMatrix& scaledOperator) const;
    int latent_dim() const { return static_cast<int>(m_mu.rows()); }

private:
    StyleDomain m_domain = StyleDomain::Regular;
    std::vector<GraphConvSpec> m_layers;
    DenseWeights m_mu;
    Eigen::VectorXd m_muBias;
};

/// Dense expansion to V x C0 features, then a conv stack ending in 3 channels.
class MeshDecoder
{
public:
    MeshDecoder() = default;
    MeshDecoder(const WeightsBundle& bundle, const std::string& network, StyleDomain domain, int vertexCount, int chebOrder);

    Eigen::MatrixX3d decode(const LatentCode& code, const SparseMatrix& scaledOperator) const;
    int latent_dim() const { return static_cast<int>(m_dense.cols()); }

private:
    StyleDomain m_domain = StyleDomain::Regular;
    int m_channels = 0;
    DenseWeights m_dense;
    Eigen::VectorXd m_denseBias;
    std::vector<GraphConvSpec> m_layers;
};

/// Input projection followed by fully connected residual blocks h += fc2(act(fc1(h))).
class LatentGenerator
{
public:
    LatentGenerator() = default;
    LatentGenerator(const WeightsBundle& bundle, const nlohmann::json& description);

    /// Throws InvalidInput if the code's domain or dimension does not match the source side.
    LatentCode translate(const LatentCode& code) const;
    StyleDomain source() const { return m_source; }
    StyleDomain target() const { return m_target; }

private:
    struct Block
    {
        Eigen::MatrixXd fc1, fc2;
        Eigen::VectorXd b1, b2;
    };
    StyleDomain m_source = StyleDomain::Regular;
    StyleDomain m_target = StyleDomain::Caricature;
    Activation m_activation = Activation::Relu;
    Eigen::MatrixXd m_in;
    Eigen::VectorXd m_inBias;
    std::vector<Block> m_blocks;
};

/// Immutable inference model built from a bundle for one runtime topology.
class StyleModel
{
public:
    /// Throws FormatError when the bundle is inconsistent and InvalidInput when its topologyId
    /// differs from `topology`.
    StyleModel(const WeightsBundle& bundle, const TriMesh& topology);

    LatentCode encode(const TriMesh& mesh, StyleDomain domain) const;
    TriMesh decode(const LatentCode& code) const;
    /// Maps a code to the other domain with the generator whose source matches its tag.
    LatentCode translate_latent(const LatentCode& code) const;

    int latent_dim(StyleDomain d) const;
    const TriMesh& topology() const { return m_topology; }
    const SparseMatrix& graph_operator() const { return m_operator; }
    double lambda_max() const { return m_lambdaMax; }

private:
    const MeshEncoder& encoder(StyleDomain d) const;
    const MeshDecoder& decoder(StyleDomain d) const;

    TriMesh m_topology;
    double m_lambdaMax = 2.0;
    SparseMatrix m_operator;
    MeshEncoder m_encoders[2];
    MeshDecoder m_decoders[2];
    LatentGenerator m_toCaricature;
    LatentGenerator m_toRegular;
};

/// argmin_x mu |prev2 - 2 prev1 + x|^2 + |x - current|^2.
LatentCode smooth_latent(const LatentCode& prev2, const LatentCode& prev1, const LatentCode& current, double mu);

struct TranslatedSequence
{
    std::vector<TriMesh> meshes;
    /// Raw generator outputs per frame.
    std::vector<LatentCode> translated;
    /// Codes actually decoded (smoothed from frame 2 on).
    std::vector<LatentCode> smoothed;
};

/// encode -> G -> smooth against the two previous raw translations -> decode.
TranslatedSequence translate_sequence(const std::vector<TriMesh>& meshes, const StyleModel& model, double mu = 0.001);

} // namespace carimirror
