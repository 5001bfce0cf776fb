// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/parallel.hpp>
#include <carimirror/style/translator.hpp>

#include <cmath>

namespace carimirror {

namespace {

using Json = nlohmann::json;

const Tensor& expect_tensor(const WeightsBundle& bundle, const std::string& name, const std::vector<std::int64_t>& shape)
{
    const Tensor& t = bundle.tensor(name);
    if (t.shape != shape) {
        std::string want, got;
        for (auto d : shape) want += (want.empty() ? "" : ",") + std::to_string(d);
        for (auto d : t.shape) got += (got.empty() ? "" : ",") + std::to_string(d);
        throw FormatError("tensor '" + name + "' has shape [" + got + "], expected [" + want + "]");
    }
    return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t, std::int64_t rows, std::int64_t cols, std::int64_t offset = 0)
{
    Eigen::MatrixXd m(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) m(r, c) = t.data[static_cast<size_t>(offset + r * cols + c)];
    }
    return m;
}

DenseWeights to_matrix_f(const Tensor& t, std::int64_t rows, std::int64_t cols)
{
    return Eigen::Map<const DenseWeights>(t.data.data(), rows, cols);
}

Eigen::VectorXd dense_product(const DenseWeights& w, const Eigen::VectorXd& x)
{
    Eigen::VectorXd out(w.rows());
    parallel_for(static_cast<int>(w.rows()), [&](int i) { out[i] = w.row(i).cast<double>().dot(x.transpose()); });
    return out;
}

Eigen::VectorXd to_vector(const Tensor& t)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(t.data.size()));
    for (size_t i = 0; i < t.data.size(); ++i) v[static_cast<Eigen::Index>(i)] = t.data[i];
    return v;
}

const Json& network_description(const WeightsBundle& bundle, const std::string& network)
{
    const Json& nets = bundle.manifest.at("networks");
    if (!nets.contains(network)) throw FormatError("manifest has no network '" + network + "'");
    return nets.at(network);
}

std::vector<GraphConvSpec> read_conv_stack(const WeightsBundle& bundle, const std::string& network, const Json& desc,
                                           int chebOrder, int inChannels)
{
    std::vector<GraphConvSpec> layers;
    int channels = inChannels;
    int index = 0;
    for (const Json& layer : desc.at("conv")) {
        const int cin = layer.at("in").get<int>();
        const int cout = layer.at("out").get<int>();
        const std::string prefix = network + ".conv" + std::to_string(index);
        if (cin != channels) {
            throw FormatError(prefix + " expects " + std::to_string(cin) + " input channels but receives " + std::to_string(channels));
        }
        const Tensor& w = expect_tensor(bundle, prefix + ".weight", {chebOrder, cin, cout});
        const Tensor& b = expect_tensor(bundle, prefix + ".bias", {cout});
        GraphConvSpec spec;
        for (int k = 0; k < chebOrder; ++k) spec.weights.push_back(to_matrix(w, cin, cout, static_cast<std::int64_t>(k) * cin * cout));
        spec.bias = to_vector(b).transpose();
        spec.activation = parse_activation(layer.value("activation", std::string("identity")));
        layers.push_back(std::move(spec));
        channels = cout;
        ++index;
    }
    return layers;
}

void check_code(const LatentCode& code, StyleDomain domain, int dim, const char* what)
{
    if (code.domain != domain) {
        throw InvalidInput(std::string(what) + ": code is tagged " + domain_name(code.domain) + ", expected " + domain_name(domain));
    }
    if (code.values.size() != dim) {
        throw InvalidInput(std::string(what) + ": code has dimension " + std::to_string(code.values.size()) + ", expected " +
                           std::to_string(dim));
    }
}

} // namespace

std::string domain_name(StyleDomain d)
{
    return d == StyleDomain::Regular ? "regular" : "caricature";
}

StyleDomain parse_domain(const std::string& name)
{
    if (name == "regular") return StyleDomain::Regular;
    if (name == "caricature") return StyleDomain::Caricature;
    throw FormatError("unknown style domain '" + name + "'");
}

MeshEncoder::MeshEncoder(const WeightsBundle& bundle, const std::string& network, StyleDomain domain, int vertexCount,
                         int chebOrder)
    : m_domain(domain)
{
    const Json& desc = network_description(bundle, network);
    m_layers = read_conv_stack(bundle, network, desc, chebOrder, 3);
    const int channels = m_layers.empty() ? 3 : m_layers.back().out_channels();
    const int dim = desc.at("latentDim").get<int>();
    const std::int64_t flat = static_cast<std::int64_t>(vertexCount) * channels;
    m_mu = to_matrix_f(expect_tensor(bundle, network + ".mu.weight", {dim, flat}), dim, flat);
    m_muBias = to_vector(expect_tensor(bundle, network + ".mu.bias", {dim}));
}

LatentCode MeshEncoder::encode(const Eigen::MatrixX3d& vertices, const SparseMatrix& scaledOperator) const
{
    Eigen::MatrixXd x = vertices;
    for (const GraphConvSpec& layer : m_layers) x = cheb_graph_conv(x, scaledOperator, layer);
    // Vertex-major flatten: row-major copy of the V x C feature block.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rowMajor = x;
    const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(rowMajor.data(), rowMajor.size());
    if (flat.size() != m_mu.cols()) throw InvalidInput("encode: feature size does not match the dense layer");
    LatentCode code;
    code.domain = m_domain;
    code.values = dense_product(m_mu, flat) + m_muBias;
    return code;
}

MeshDecoder::MeshDecoder(const WeightsBundle& bundle, const std::string& network, StyleDomain domain, int vertexCount,
                         int chebOrder)
    : m_domain(domain)
{
    const Json& desc = network_description(bundle, network);
    const int dim = desc.at("latentDim").get<int>();
    m_channels = desc.at("channels").get<int>();
    if (m_channels <= 0) throw FormatError(network + ": channels must be positive");
    const std::int64_t flat = static_cast<std::int64_t>(vertexCount) * m_channels;
    m_dense = to_matrix_f(expect_tensor(bundle, network + ".dense.weight", {flat, dim}), flat, dim);
    m_denseBias = to_vector(expect_tensor(bundle, network + ".dense.bias", {flat}));
    m_layers = read_conv_stack(bundle, network, desc, chebOrder, m_channels);
    const int outChannels = m_layers.empty() ? m_channels : m_layers.back().out_channels();
    if (outChannels != 3) throw FormatError(network + ": decoder must end in 3 channels, got " + std::to_string(outChannels));
}

Eigen::MatrixX3d MeshDecoder::decode(const LatentCode& code, const SparseMatrix& scaledOperator) const
{
    check_code(code, m_domain, latent_dim(), "decode");
    const Eigen::VectorXd flat = dense_product(m_dense, code.values);
    const Eigen::Index v = scaledOperator.rows();
    Eigen::MatrixXd x(v, m_channels);
    for (Eigen::Index i = 0; i < v; ++i) {
        for (int c = 0; c < m_channels; ++c) {
            const Eigen::Index j = i * m_channels + c;
            x(i, c) = flat[j] + m_denseBias[j];
        }
    }
    for (const GraphConvSpec& layer : m_layers) x = cheb_graph_conv(x, scaledOperator, layer);
    return x;
}

LatentGenerator::LatentGenerator(const WeightsBundle& bundle, const Json& desc)
{
    const std::string name = desc.at("name").get<std::string>();
    m_source = parse_domain(desc.at("source").get<std::string>());
    m_target = parse_domain(desc.at("target").get<std::string>());
    if (m_source == m_target) throw FormatError(name + ": source and target domains coincide");
    m_activation = parse_activation(desc.value("activation", std::string("relu")));
    const Json& domains = bundle.manifest.at("domains");
    const int din = domains.at(domain_name(m_source)).at("latentDim").get<int>();
    const int dout = domains.at(domain_name(m_target)).at("latentDim").get<int>();
    const int blocks = desc.at("blocks").get<int>();
    const int hidden = desc.at("hidden").get<int>();
    if (blocks < 0 || hidden <= 0) throw FormatError(name + ": invalid block layout");
    m_in = to_matrix(expect_tensor(bundle, name + ".in.weight", {dout, din}), dout, din);
    m_inBias = to_vector(expect_tensor(bundle, name + ".in.bias", {dout}));
    for (int b = 0; b < blocks; ++b) {
        const std::string p = name + ".block" + std::to_string(b);
        Block blk;
        blk.fc1 = to_matrix(expect_tensor(bundle, p + ".fc1.weight", {hidden, dout}), hidden, dout);
        blk.b1 = to_vector(expect_tensor(bundle, p + ".fc1.bias", {hidden}));
        blk.fc2 = to_matrix(expect_tensor(bundle, p + ".fc2.weight", {dout, hidden}), dout, hidden);
        blk.b2 = to_vector(expect_tensor(bundle, p + ".fc2.bias", {dout}));
        m_blocks.push_back(std::move(blk));
    }
}

LatentCode LatentGenerator::translate(const LatentCode& code) const
{
    check_code(code, m_source, static_cast<int>(m_in.cols()), "translate_latent");
    Eigen::VectorXd h = m_in * code.values + m_inBias;
    for (const Block& blk : m_blocks) {
        Eigen::VectorXd a = blk.fc1 * h + blk.b1;
        apply_activation(a, m_activation);
        h += blk.fc2 * a + blk.b2;
    }
    return {std::move(h), m_target};
}

StyleModel::StyleModel(const WeightsBundle& bundle, const TriMesh& topology)
    : m_topology(topology)
{
    const Json& m = bundle.manifest;
    try {
        const std::string id = m.at("topologyId").get<std::string>();
        if (id != topology.topology()) {
            throw InvalidInput("weights bundle was built for topology " + id + " but the runtime mesh has topology " +
                               topology.topology() + " (vertex order or connectivity differs)");
        }
        const int vertexCount = m.at("vertexCount").get<int>();
        if (vertexCount != topology.vertex_count()) throw FormatError("manifest vertexCount does not match its topologyId");
        const Json& graph = m.at("graph");
        m_lambdaMax = graph.at("lambdaMax").get<double>();
        const int order = graph.at("chebOrder").get<int>();
        if (order < 1) throw FormatError("chebOrder must be at least 1");
        m_operator = scaled_graph_operator(normalized_graph_laplacian(topology.faces(), vertexCount), m_lambdaMax);

        for (StyleDomain d : {StyleDomain::Regular, StyleDomain::Caricature}) {
            const Json& dom = m.at("domains").at(domain_name(d));
            const int idx = static_cast<int>(d);
            m_encoders[idx] = MeshEncoder(bundle, dom.at("encoder").get<std::string>(), d, vertexCount, order);
            m_decoders[idx] = MeshDecoder(bundle, dom.at("decoder").get<std::string>(), d, vertexCount, order);
            const int dim = dom.at("latentDim").get<int>();
            if (m_encoders[idx].latent_dim() != dim || m_decoders[idx].latent_dim() != dim) {
                throw FormatError(domain_name(d) + " coder dimensions disagree with latentDim " + std::to_string(dim));
            }
        }
        bool haveG = false, haveF = false;
        for (const Json& g : m.at("generators")) {
            LatentGenerator gen(bundle, g);
            if (gen.source() == StyleDomain::Regular) {
                m_toCaricature = std::move(gen);
                haveG = true;
            } else {
                m_toRegular = std::move(gen);
                haveF = true;
            }
        }
        if (!haveG || !haveF) throw FormatError("bundle must contain generators in both directions");
    } catch (const Json::exception& e) {
        throw FormatError(std::string("weights manifest: ") + e.what());
    }
}

const MeshEncoder& StyleModel::encoder(StyleDomain d) const
{
    return m_encoders[static_cast<int>(d)];
}

const MeshDecoder& StyleModel::decoder(StyleDomain d) const
{
    return m_decoders[static_cast<int>(d)];
}

int StyleModel::latent_dim(StyleDomain d) const
{
    return encoder(d).latent_dim();
}

LatentCode StyleModel::encode(const TriMesh& mesh, StyleDomain domain) const
{
    if (!mesh.same_topology(m_topology)) {
        throw InvalidInput("encode: mesh topology " + mesh.topology() + " does not match model topology " + m_topology.topology());
    }
    return encoder(domain).encode(mesh.vertices(), m_operator);
}

TriMesh StyleModel::decode(const LatentCode& code) const
{
    return m_topology.with_vertices(decoder(code.domain).decode(code, m_operator));
}

LatentCode StyleModel::translate_latent(const LatentCode& code) const
{
    return code.domain == StyleDomain::Regular ? m_toCaricature.translate(code) : m_toRegular.translate(code);
}

LatentCode smooth_latent(const LatentCode& prev2, const LatentCode& prev1, const LatentCode& current, double mu)
{
    if (prev2.domain != current.domain || prev1.domain != current.domain) throw InvalidInput("smooth_latent: domain tags differ");
    if (prev2.values.size() != current.values.size() || prev1.values.size() != current.values.size()) {
        throw InvalidInput("smooth_latent: code dimensions differ");
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidInput("smooth_latent: weight must be finite and nonnegative");
    LatentCode out;
    out.domain = current.domain;
    out.values = (current.values + mu * (2.0 * prev1.values - prev2.values)) / (1.0 + mu);
    return out;
}

TranslatedSequence translate_sequence(const std::vector<TriMesh>& meshes, const StyleModel& model, double mu)
{
    TranslatedSequence seq;
    seq.meshes.reserve(meshes.size());
    for (size_t k = 0; k < meshes.size(); ++k) {
        LatentCode y = model.translate_latent(model.encode(meshes[k], StyleDomain::Regular));
        LatentCode used = k < 2 ? y : smooth_latent(seq.translated[k - 2], seq.translated[k - 1], y, mu);
        seq.meshes.push_back(model.decode(used));
        seq.translated.push_back(std::move(y));
        seq.smoothed.push_back(std::move(used));
    }
    return seq;
}

} // namespace carimirror
