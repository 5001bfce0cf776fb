// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

// Portable weights container:
//   uint64 little-endian manifest length N
//   N bytes of UTF-8 JSON manifest
//   float32 little-endian tensors, concatenated in manifest order
//
// The manifest's "tensors" array lists {name, shape, fnv1a64} per tensor; readers verify
// sizes and checksums and reject trailing bytes.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace carimirror {

inline constexpr int kWeightsFormatVersion = 1;
inline constexpr const char* kWeightsFormatName = "carimirror.weights";

struct Tensor
{
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t element_count() const;
};

struct WeightsBundle
{
    /// Architecture description; "format", "version" and "tensors" are owned by the serializer.
    nlohmann::json manifest = nlohmann::json::object();
    std::vector<Tensor> tensors;

    /// Throws FormatError when missing.
    const Tensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
    /// Appends a tensor; throws InvalidInput on duplicate names or size/shape mismatch.
    void add_tensor(Tensor t);
};

/// FNV-1a over the little-endian float32 bytes, as 16 hex digits.
std::string tensor_checksum(const Tensor& t);

std::vector<std::uint8_t> serialize_weights(const WeightsBundle& bundle);
/// Throws FormatError on truncation, trailing bytes, version mismatch, shape or checksum mismatch.
WeightsBundle parse_weights(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_weights(const WeightsBundle& bundle, const std::filesystem::path& path);
WeightsBundle load_weights(const std::filesystem::path& path);

} // namespace carimirror
