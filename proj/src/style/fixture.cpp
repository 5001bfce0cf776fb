// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/style/fixture.hpp>
#include <carimirror/style/graph.hpp>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <random>

namespace carimirror {

namespace {

using Json = nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor make_tensor(const std::string& name, std::vector<std::int64_t> shape, const RowMatrix& values)
{
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.data.resize(static_cast<size_t>(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) t.data[static_cast<size_t>(i)] = static_cast<float>(values.data()[i]);
    return t;
}

Tensor make_vector_tensor(const std::string& name, const Eigen::VectorXd& v)
{
    return make_tensor(name, {v.size()}, RowMatrix(v.transpose()));
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma)
{
    std::normal_distribution<double> nd(0.0, sigma);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = nd(rng);
    }
    return m;
}

/// Values are rounded to float32 so the fitted algebra matches what the engine loads.
Eigen::MatrixXd as_float(const Eigen::MatrixXd& m)
{
    return m.cast<float>().cast<double>();
}

/// Near-identity Chebyshev stack; the first term dominates so the composed map stays invertible.
std::vector<GraphConvSpec> random_conv_stack(std::mt19937_64& rng, const StyleArchitecture& arch, int channels,
                                             Activation act)
{
    std::vector<GraphConvSpec> layers;
    for (int l = 0; l < arch.convLayers; ++l) {
        GraphConvSpec spec;
        spec.activation = act;
        for (int k = 0; k < arch.chebOrder; ++k) {
            Eigen::MatrixXd w = gaussian(rng, channels, channels, 1.0 / std::sqrt(static_cast<double>(channels)));
            if (k == 0) w = Eigen::MatrixXd::Identity(channels, channels) + 0.1 * w;
            else w *= 0.05 / k;
            spec.weights.push_back(as_float(w));
        }
        spec.bias = as_float(gaussian(rng, 1, channels, 0.01));
        layers.push_back(std::move(spec));
    }
    return layers;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& x)
{
    RowMatrix r = x;
    return Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols)
{
    return Eigen::Map<const RowMatrix>(v.data(), rows, cols);
}

Eigen::VectorXd apply_stack(const std::vector<GraphConvSpec>& stack, const SparseMatrix& op, const Eigen::VectorXd& x,
                            Eigen::Index vertices, Eigen::Index channels)
{
    Eigen::MatrixXd f = unflatten(x, vertices, channels);
    for (const auto& layer : stack) f = cheb_graph_conv(f, op, layer);
    return flatten(f);
}

/// Affine map of a linear stack in vertex-major coordinates: y = A x + a0.
void stack_as_affine(const std::vector<GraphConvSpec>& stack, const SparseMatrix& op, Eigen::Index vertices,
                     Eigen::Index channels, Eigen::MatrixXd& A, Eigen::VectorXd& a0)
{
    const Eigen::Index n = vertices * channels;
    a0 = apply_stack(stack, op, Eigen::VectorXd::Zero(n), vertices, channels);
    A.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        A.col(j) = apply_stack(stack, op, Eigen::VectorXd::Unit(n, j), vertices, channels) - a0;
    }
}

void add_conv_stack(WeightsBundle& bundle, const std::string& network, const std::vector<GraphConvSpec>& stack, Json& desc)
{
    desc["conv"] = Json::array();
    for (size_t l = 0; l < stack.size(); ++l) {
        const auto& spec = stack[l];
        const int k = spec.order(), cin = spec.in_channels(), cout = spec.out_channels();
        RowMatrix w(static_cast<Eigen::Index>(k) * cin, cout);
        for (int t = 0; t < k; ++t) w.middleRows(static_cast<Eigen::Index>(t) * cin, cin) = spec.weights[static_cast<size_t>(t)];
        const std::string prefix = network + ".conv" + std::to_string(l);
        bundle.add_tensor(make_tensor(prefix + ".weight", {k, cin, cout}, w));
        bundle.add_tensor(make_vector_tensor(prefix + ".bias", spec.bias.transpose()));
        desc["conv"].push_back({{"in", cin}, {"out", cout}, {"activation", activation_name(spec.activation)}});
    }
}

Json base_manifest(const TriMesh& topology, const StyleArchitecture& arch, double lambdaMax)
{
    Json m;
    m["topologyId"] = topology.topology();
    m["vertexCount"] = topology.vertex_count();
    m["graph"] = {{"operator", "normalized_laplacian"}, {"lambdaMax", lambdaMax}, {"chebOrder", arch.chebOrder}};
    m["domains"] = {
        {"regular", {{"latentDim", arch.regularDim}, {"encoder", "encoder_regular"}, {"decoder", "decoder_regular"}}},
        {"caricature", {{"latentDim", arch.caricatureDim}, {"encoder", "encoder_caricature"}, {"decoder", "decoder_caricature"}}},
    };
    m["networks"] = Json::object();
    m["generators"] = Json::array();
    return m;
}

/// Ridge solution of target ~ [features, 1] * [W^T; b^T]. Returns W (out x in) and b.
void ridge_fit(const Eigen::MatrixXd& features, const Eigen::MatrixXd& target, double ridge, Eigen::MatrixXd& W,
               Eigen::VectorXd& b)
{
    const Eigen::Index n = features.rows(), d = features.cols();
    Eigen::MatrixXd X(n, d + 1);
    X << features, Eigen::VectorXd::Ones(n);
    Eigen::MatrixXd G = X.transpose() * X;
    const double alpha = ridge * G.diagonal().head(d).mean() + 1e-12;
    G.diagonal().head(d).array() += alpha;
    const Eigen::MatrixXd sol = G.ldlt().solve(X.transpose() * target);
    W = sol.topRows(d).transpose();
    b = sol.row(d).transpose();
}

struct GeneratorFit
{
    Eigen::MatrixXd in;
    Eigen::VectorXd inBias;
    std::vector<std::array<Eigen::MatrixXd, 2>> fc;
    std::vector<std::array<Eigen::VectorXd, 2>> bias;
};

GeneratorFit fit_generator(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target, const StyleArchitecture& arch,
                           double ridge, std::mt19937_64& rng)
{
    GeneratorFit g;
    ridge_fit(source, target, ridge, g.in, g.inBias);
    g.in = as_float(g.in);
    g.inBias = as_float(g.inBias);
    Eigen::MatrixXd h = (source * g.in.transpose()).rowwise() + g.inBias.transpose();
    const Eigen::Index dout = target.cols();
    for (int blk = 0; blk < arch.generatorBlocks; ++blk) {
        Eigen::MatrixXd fc1 = as_float(gaussian(rng, arch.generatorHidden, dout, 1.0 / std::sqrt(static_cast<double>(dout))));
        Eigen::VectorXd b1 = as_float(gaussian(rng, arch.generatorHidden, 1, 0.5));
        Eigen::MatrixXd a = ((h * fc1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
        Eigen::MatrixXd fc2;
        Eigen::VectorXd b2;
        ridge_fit(a, target - h, ridge, fc2, b2);
        fc2 = as_float(fc2);
        b2 = as_float(b2);
        h += (a * fc2.transpose()).rowwise() + b2.transpose();
        g.fc.push_back({fc1, fc2});
        g.bias.push_back({b1, b2});
    }
    return g;
}

void add_generator(WeightsBundle& bundle, Json& manifest, const std::string& name, const char* source, const char* target,
                   const GeneratorFit& g, const StyleArchitecture& arch)
{
    bundle.add_tensor(make_tensor(name + ".in.weight", {g.in.rows(), g.in.cols()}, g.in));
    bundle.add_tensor(make_vector_tensor(name + ".in.bias", g.inBias));
    for (size_t b = 0; b < g.fc.size(); ++b) {
        const std::string p = name + ".block" + std::to_string(b);
        bundle.add_tensor(make_tensor(p + ".fc1.weight", {g.fc[b][0].rows(), g.fc[b][0].cols()}, g.fc[b][0]));
        bundle.add_tensor(make_vector_tensor(p + ".fc1.bias", g.bias[b][0]));
        bundle.add_tensor(make_tensor(p + ".fc2.weight", {g.fc[b][1].rows(), g.fc[b][1].cols()}, g.fc[b][1]));
        bundle.add_tensor(make_vector_tensor(p + ".fc2.bias", g.bias[b][1]));
    }
    manifest["generators"].push_back({{"name", name},
                                      {"source", source},
                                      {"target", target},
                                      {"blocks", arch.generatorBlocks},
                                      {"hidden", arch.generatorHidden},
                                      {"activation", "relu"}});
}

struct LinearCoder
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;  // 3V x dim, orthonormal columns
    Eigen::VectorXd scale;  // per-code standard deviation (1 for unused directions)
};

LinearCoder fit_linear_coder(const Eigen::MatrixXd& samples, int dim, std::mt19937_64& rng)
{
    const Eigen::Index n = samples.cols();
    if (dim > n) throw InvalidInput("toy bundle: latent dimension exceeds the coordinate count");
    LinearCoder c;
    c.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - c.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < s.size() && rank < dim && s[rank] > 1e-9 * s[0]) ++rank;
    // Unused directions complete the basis so every code coordinate decodes to a distinct shape.
    Eigen::MatrixXd stacked(n, dim);
    stacked.leftCols(rank) = svd.matrixV().leftCols(rank);
    stacked.rightCols(dim - rank) = gaussian(rng, n, dim - rank, 1.0);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
    c.basis = qr.householderQ() * Eigen::MatrixXd::Identity(n, dim);
    c.scale = Eigen::VectorXd::Ones(dim);
    const double denom = std::sqrt(static_cast<double>(std::max<Eigen::Index>(samples.rows() - 1, 1)));
    for (Eigen::Index i = 0; i < rank; ++i) c.scale[i] = s[i] / denom;
    return c;
}

void add_coders(WeightsBundle& bundle, Json& manifest, const std::string& domain, const LinearCoder& coder,
                const SparseMatrix& op, Eigen::Index vertices, const StyleArchitecture& arch, std::mt19937_64& rng)
{
    const int dim = static_cast<int>(coder.basis.cols());
    const Eigen::Index n = vertices * 3;
    const Eigen::MatrixXd scaledBasis = coder.basis * coder.scale.asDiagonal();
    const Eigen::VectorXd inv = coder.scale.cwiseInverse();

    // Encoder: z = S^-1 Q^T (x - mean) with x = A^-1 (f - a0) for conv features f.
    {
        const std::string net = "encoder_" + domain;
        const auto stack = random_conv_stack(rng, arch, 3, Activation::Identity);
        Eigen::MatrixXd A;
        Eigen::VectorXd a0;
        stack_as_affine(stack, op, vertices, 3, A, a0);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        const Eigen::MatrixXd E = inv.asDiagonal() * (A.transpose().partialPivLu().solve(coder.basis)).transpose();
        const Eigen::VectorXd b = -(inv.asDiagonal() * (coder.basis.transpose() * (lu.solve(a0) + coder.mean)));
        Json desc = {{"latentDim", dim}};
        add_conv_stack(bundle, net, stack, desc);
        bundle.add_tensor(make_tensor(net + ".mu.weight", {dim, n}, E));
        bundle.add_tensor(make_vector_tensor(net + ".mu.bias", b));
        manifest["networks"][net] = desc;
    }
    // Decoder: conv stack M g + m0 = mean + Q S z for dense features g = W z + c.
    {
        const std::string net = "decoder_" + domain;
        const auto stack = random_conv_stack(rng, arch, 3, Activation::Identity);
        Eigen::MatrixXd M;
        Eigen::VectorXd m0;
        stack_as_affine(stack, op, vertices, 3, M, m0);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
        const Eigen::MatrixXd W = lu.solve(scaledBasis);
        const Eigen::VectorXd c = lu.solve(coder.mean - m0);
        Json desc = {{"latentDim", dim}, {"channels", 3}};
        bundle.add_tensor(make_tensor(net + ".dense.weight", {n, dim}, W));
        bundle.add_tensor(make_vector_tensor(net + ".dense.bias", c));
        add_conv_stack(bundle, net, stack, desc);
        manifest["networks"][net] = desc;
    }
}

Eigen::MatrixXd codes_of(const LinearCoder& coder, const Eigen::MatrixXd& samples)
{
    return ((samples.rowwise() - coder.mean.transpose()) * coder.basis) * coder.scale.cwiseInverse().asDiagonal();
}

} // namespace

WeightsBundle build_toy_style_bundle(const SyntheticFaceModel& model, const ToyBundleOptions& options)
{
    const StyleArchitecture& arch = options.architecture;
    if (options.trainingPairs < 2) throw InvalidInput("toy bundle: need at least two training pairs");
    const TriMesh& topology = model.template_mesh();
    const Eigen::Index vertices = topology.vertex_count();
    std::mt19937_64 rng(options.seed);

    Eigen::MatrixXd regular(options.trainingPairs, vertices * 3), caricature(options.trainingPairs, vertices * 3);
    for (int i = 0; i < options.trainingPairs; ++i) {
        const Eigen::VectorXd id = model.sample_identity(rng);
        const Eigen::VectorXd ex = model.sample_expression(rng);
        regular.row(i) = flatten(model.synthesize(id, ex, FaceStyle::Regular).vertices()).transpose();
        caricature.row(i) = flatten(model.synthesize(id, ex, FaceStyle::Exaggerated).vertices()).transpose();
    }

    const SparseMatrix L = normalized_graph_laplacian(topology.faces(), topology.vertex_count());
    const double lambdaMax = static_cast<double>(static_cast<float>(estimate_lambda_max(L)));
    const SparseMatrix op = scaled_graph_operator(L, lambdaMax);

    WeightsBundle bundle;
    Json manifest = base_manifest(topology, arch, lambdaMax);
    manifest["fingerprint"] = {{"kind", "closed-form toy fit"},
                               {"seed", options.seed},
                               {"trainingPairs", options.trainingPairs},
                               {"ridge", options.ridge}};

    const LinearCoder regCoder = fit_linear_coder(regular, arch.regularDim, rng);
    const LinearCoder carCoder = fit_linear_coder(caricature, arch.caricatureDim, rng);
    add_coders(bundle, manifest, "regular", regCoder, op, vertices, arch, rng);
    add_coders(bundle, manifest, "caricature", carCoder, op, vertices, arch, rng);

    const Eigen::MatrixXd xCodes = codes_of(regCoder, regular);
    const Eigen::MatrixXd yCodes = codes_of(carCoder, caricature);
    add_generator(bundle, manifest, "generator_g", "regular", "caricature",
                  fit_generator(xCodes, yCodes, arch, options.ridge, rng), arch);
    add_generator(bundle, manifest, "generator_f", "caricature", "regular",
                  fit_generator(yCodes, xCodes, arch, options.ridge, rng), arch);
    bundle.manifest = std::move(manifest);
    return bundle;
}

WeightsBundle random_style_bundle(const TriMesh& topology, const StyleArchitecture& arch, std::uint64_t seed, int channels)
{
    if (channels <= 0) throw InvalidInput("random bundle: channels must be positive");
    std::mt19937_64 rng(seed);
    const SparseMatrix L = normalized_graph_laplacian(topology.faces(), topology.vertex_count());
    const double lambdaMax = static_cast<double>(static_cast<float>(estimate_lambda_max(L)));
    WeightsBundle bundle;
    Json manifest = base_manifest(topology, arch, lambdaMax);
    manifest["fingerprint"] = {{"kind", "random"}, {"seed", seed}};
    const Eigen::Index v = topology.vertex_count();

    auto conv_stack = [&](int cin, int cout) {
        std::vector<GraphConvSpec> stack;
        for (int l = 0; l < arch.convLayers; ++l) {
            const int a = l == 0 ? cin : channels;
            const int b = l + 1 == arch.convLayers ? cout : channels;
            GraphConvSpec spec;
            spec.activation = l + 1 == arch.convLayers ? Activation::Identity : Activation::Elu;
            for (int k = 0; k < arch.chebOrder; ++k) spec.weights.push_back(gaussian(rng, a, b, 0.3));
            spec.bias = gaussian(rng, 1, b, 0.01);
            stack.push_back(std::move(spec));
        }
        return stack;
    };
    for (const auto& [domain, dim] : {std::pair<std::string, int>{"regular", arch.regularDim},
                                      std::pair<std::string, int>{"caricature", arch.caricatureDim}}) {
        const std::string enc = "encoder_" + domain, dec = "decoder_" + domain;
        Json e = {{"latentDim", dim}};
        add_conv_stack(bundle, enc, conv_stack(3, channels), e);
        const Eigen::Index flat = v * channels;
        bundle.add_tensor(make_tensor(enc + ".mu.weight", {dim, flat}, gaussian(rng, dim, flat, 1.0 / std::sqrt(static_cast<double>(flat)))));
        bundle.add_tensor(make_vector_tensor(enc + ".mu.bias", gaussian(rng, dim, 1, 0.01)));
        manifest["networks"][enc] = e;
        Json d = {{"latentDim", dim}, {"channels", channels}};
        bundle.add_tensor(make_tensor(dec + ".dense.weight", {flat, dim}, gaussian(rng, flat, dim, 1.0 / std::sqrt(static_cast<double>(dim)))));
        bundle.add_tensor(make_vector_tensor(dec + ".dense.bias", gaussian(rng, flat, 1, 0.01)));
        add_conv_stack(bundle, dec, conv_stack(channels, 3), d);
        manifest["networks"][dec] = d;
    }
    auto random_generator = [&](int din, int dout) {
        GeneratorFit g;
        g.in = gaussian(rng, dout, din, 1.0 / std::sqrt(static_cast<double>(din)));
        g.inBias = gaussian(rng, dout, 1, 0.01);
        for (int b = 0; b < arch.generatorBlocks; ++b) {
            g.fc.push_back({gaussian(rng, arch.generatorHidden, dout, 1.0 / std::sqrt(static_cast<double>(dout))),
                            gaussian(rng, dout, arch.generatorHidden, 0.1 / std::sqrt(static_cast<double>(arch.generatorHidden)))});
            g.bias.push_back({gaussian(rng, arch.generatorHidden, 1, 0.01), gaussian(rng, dout, 1, 0.01)});
        }
        return g;
    };
    add_generator(bundle, manifest, "generator_g", "regular", "caricature", random_generator(arch.regularDim, arch.caricatureDim), arch);
    add_generator(bundle, manifest, "generator_f", "caricature", "regular", random_generator(arch.caricatureDim, arch.regularDim), arch);
    bundle.manifest = std::move(manifest);
    return bundle;
}

} // namespace carimirror
