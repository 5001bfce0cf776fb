// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/deform.hpp>
#include <carimirror/error.hpp>
#include <carimirror/parallel.hpp>
#include <carimirror/statics/rig.hpp>

#include <limits>

namespace carimirror {

TriMesh refine_neutral(const TriMesh& coarse, const std::vector<Vec3>& cloud, const RefineOptions& options)
{
    if (cloud.empty()) throw InvalidInput("refine_neutral: point cloud is empty");
    if (!(options.weight >= 0.0)) throw InvalidInput("refine_neutral: weight must be nonnegative");
    if (options.weight == 0.0 || options.rounds <= 0) return coarse;

    const int n = coarse.vertex_count();
    TriMesh current = coarse;
    std::vector<DeformConstraint> cons(static_cast<size_t>(n));
    for (int round = 0; round < options.rounds; ++round) {
        parallel_for(n, [&](int i) {
            const Vec3 x = current.vertex(i);
            double best = std::numeric_limits<double>::infinity();
            size_t arg = 0;
            for (size_t k = 0; k < cloud.size(); ++k) {
                const double d = (cloud[k] - x).squaredNorm();
                if (d < best) {
                    best = d;
                    arg = k;
                }
            }
            cons[static_cast<size_t>(i)] = {i, cloud[arg], options.weight};
        });
        // Always deform from the coarse shape so its detail is the Laplacian reference.
        current = laplacian_deform(coarse, cons);
    }
    return current;
}

BlendshapeRig build_blendshapes(const TriMesh& b0, const BlendshapeRig& templateRig)
{
    if (templateRig.shapes().empty()) throw InvalidInput("build_blendshapes: template rig is empty");
    if (!b0.same_topology(templateRig.neutral())) throw InvalidInput("build_blendshapes: b0 and template rig differ in topology");
    const DeformationTransfer dt(templateRig.neutral(), b0);
    std::vector<TriMesh> shapes;
    shapes.reserve(templateRig.shapes().size());
    shapes.push_back(b0);
    for (size_t k = 1; k < templateRig.shapes().size(); ++k) shapes.push_back(dt.transfer(templateRig.shapes()[k]));
    return BlendshapeRig(std::move(shapes));
}

} // namespace carimirror
