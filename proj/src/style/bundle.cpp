// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/style/bundle.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace carimirror {

namespace {

std::uint32_t float_bits(float f)
{
    return std::bit_cast<std::uint32_t>(f);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::int64_t shape_product(const std::vector<std::int64_t>& shape)
{
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) return -1;
        if (d != 0 && n > (std::int64_t{1} << 40) / d) return -1;
        n *= d;
    }
    return n;
}

} // namespace

std::int64_t Tensor::element_count() const
{
    return shape_product(shape);
}

const Tensor& WeightsBundle::tensor(const std::string& name) const
{
    for (const Tensor& t : tensors) {
        if (t.name == name) return t;
    }
    throw FormatError("weights bundle has no tensor '" + name + "'");
}

bool WeightsBundle::has_tensor(const std::string& name) const
{
    for (const Tensor& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

void WeightsBundle::add_tensor(Tensor t)
{
    if (t.name.empty()) throw InvalidInput("tensor name must not be empty");
    if (has_tensor(t.name)) throw InvalidInput("duplicate tensor '" + t.name + "'");
    const std::int64_t n = t.element_count();
    if (n < 0 || static_cast<std::size_t>(n) != t.data.size()) {
        throw InvalidInput("tensor '" + t.name + "': shape does not match " + std::to_string(t.data.size()) + " values");
    }
    tensors.push_back(std::move(t));
}

std::string tensor_checksum(const Tensor& t)
{
    std::uint64_t h = 14695981039346656037ull;
    for (float f : t.data) {
        const std::uint32_t v = float_bits(f);
        for (int b = 0; b < 4; ++b) {
            h ^= (v >> (8 * b)) & 0xffu;
            h *= 1099511628211ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::uint8_t> serialize_weights(const WeightsBundle& bundle)
{
    if (!bundle.manifest.is_object()) throw InvalidInput("weights manifest must be a JSON object");
    nlohmann::json manifest = bundle.manifest;
    manifest["format"] = kWeightsFormatName;
    manifest["version"] = kWeightsFormatVersion;
    nlohmann::json list = nlohmann::json::array();
    std::set<std::string> names;
    for (const Tensor& t : bundle.tensors) {
        if (!names.insert(t.name).second) throw InvalidInput("duplicate tensor '" + t.name + "'");
        const std::int64_t n = t.element_count();
        if (n < 0 || static_cast<std::size_t>(n) != t.data.size()) {
            throw InvalidInput("tensor '" + t.name + "': shape does not match its data");
        }
        list.push_back({{"name", t.name}, {"shape", t.shape}, {"fnv1a64", tensor_checksum(t)}});
    }
    manifest["tensors"] = std::move(list);

    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out;
    std::size_t total = 8 + text.size();
    for (const Tensor& t : bundle.tensors) total += 4 * t.data.size();
    out.reserve(total);
    const std::uint64_t len = text.size();
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>((len >> (8 * b)) & 0xffu));
    out.insert(out.end(), text.begin(), text.end());
    for (const Tensor& t : bundle.tensors) {
        for (float f : t.data) put_u32(out, float_bits(f));
    }
    return out;
}

WeightsBundle parse_weights(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8) throw FormatError("weights file truncated: missing manifest length");
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(b)]) << (8 * b);
    if (len > bytes.size() - 8) throw FormatError("weights file truncated: manifest length " + std::to_string(len) + " exceeds file");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("weights manifest is not valid JSON: ") + e.what());
    }
    if (!manifest.is_object()) throw FormatError("weights manifest must be a JSON object");
    if (manifest.value("format", std::string()) != kWeightsFormatName) throw FormatError("not a carimirror weights file");
    if (!manifest.contains("version") || !manifest["version"].is_number_integer()) {
        throw FormatError("weights manifest has no integer version");
    }
    const int version = manifest["version"].get<int>();
    if (version != kWeightsFormatVersion) {
        throw FormatError("weights format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kWeightsFormatVersion) + ")");
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) throw FormatError("weights manifest has no tensor list");

    WeightsBundle bundle;
    std::size_t offset = 8 + static_cast<std::size_t>(len);
    std::set<std::string> names;
    for (const auto& entry : manifest["tensors"]) {
        Tensor t;
        try {
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("malformed tensor entry: ") + e.what());
        }
        if (t.name.empty() || !names.insert(t.name).second) throw FormatError("missing or duplicate tensor name '" + t.name + "'");
        const std::int64_t n = t.element_count();
        if (n < 0) throw FormatError("tensor '" + t.name + "' has an invalid shape");
        const std::size_t bytesNeeded = 4 * static_cast<std::size_t>(n);
        if (bytes.size() - offset < bytesNeeded) throw FormatError("weights file truncated inside tensor '" + t.name + "'");
        t.data.resize(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            t.data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
            if (!std::isfinite(t.data[i])) throw FormatError("tensor '" + t.name + "' contains non-finite values");
        }
        offset += bytesNeeded;
        if (entry.contains("fnv1a64") && entry["fnv1a64"].get<std::string>() != tensor_checksum(t)) {
            throw FormatError("tensor '" + t.name + "' checksum mismatch");
        }
        bundle.tensors.push_back(std::move(t));
    }
    if (offset != bytes.size()) {
        throw FormatError("weights file has " + std::to_string(bytes.size() - offset) + " trailing bytes");
    }
    manifest.erase("tensors");
    bundle.manifest = std::move(manifest);
    return bundle;
}

void save_weights(const WeightsBundle& bundle, const std::filesystem::path& path)
{
    const auto bytes = serialize_weights(bundle);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

WeightsBundle load_weights(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open weights file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_weights(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace carimirror
