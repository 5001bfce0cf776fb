// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/statics/capture.hpp>

namespace carimirror {

void MultiViewCapture::validate(int landmarkCount) const
{
    if (views.empty()) throw InvalidInput("capture has no views");
    const int channels = views.front().image.channels();
    for (size_t j = 0; j < views.size(); ++j) {
        const auto& v = views[j];
        if (v.image.empty()) throw InvalidInput("capture view " + std::to_string(j) + " has no image");
        if (v.image.channels() != channels) throw InvalidInput("capture views mix colour layouts");
        if (static_cast<int>(v.landmarks.size()) != landmarkCount) {
            throw InvalidInput("capture view " + std::to_string(j) + " has " + std::to_string(v.landmarks.size()) +
                               " landmarks, expected " + std::to_string(landmarkCount));
        }
    }
}

ParametricBasis ParametricBasis::from_synthetic(const SyntheticFaceModel& model)
{
    return {model.template_mesh(), model.identity_basis(), model.expression_basis(), model.landmarks(), model.uv()};
}

Eigen::MatrixX3d ParametricBasis::evaluate(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
{
    if (a.size() != identity.cols() || b.size() != expression.cols()) throw InvalidInput("basis coefficient size mismatch");
    const Eigen::VectorXd flat = identity * a + expression * b;
    Eigen::MatrixX3d out = mean.vertices();
    out += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(flat.data(), mean.vertex_count(), 3);
    return out;
}

} // namespace carimirror
