// SPDX-License-Identifier: Apache-2.0
#pragma once

// PLNS1 container:
//   "PLNS1" | u64 LE header length | UTF-8 JSON header | float32 LE payloads
// The header holds the config and a tensor directory (name, shape, offset,
// nbytes) with offsets relative to the start of the payload region.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/model.hpp"

namespace prunelens {

inline constexpr char kCheckpointMagic[] = "PLNS1";
inline constexpr std::size_t kCheckpointMagicLen = 5;

static_assert(std::endian::native == std::endian::little, "PLNS1 I/O assumes a little-endian host");

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
    ck.validate();
    nlohmann::json header;
    header["format"] = "PLNS1";
    header["config"] = ck.config;
    auto& dir = header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ck.directory()) {
        const std::uint64_t nbytes = t->size() * sizeof(float);
        dir.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    }
    const std::string text = header.dump();
    std::vector<char> out(kCheckpointMagic, kCheckpointMagic + kCheckpointMagicLen);
    const std::uint64_t len = text.size();
    const char* lp = reinterpret_cast<const char*>(&len);
    out.insert(out.end(), lp, lp + sizeof(len));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, t] : ck.directory()) {
        const char* p = reinterpret_cast<const char*>(t->data().data());
        out.insert(out.end(), p, p + t->size() * sizeof(float));
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes) {
    if (bytes.size() < kCheckpointMagicLen || std::memcmp(bytes.data(), kCheckpointMagic, kCheckpointMagicLen) != 0)
        throw LoadError(LoadFailure::bad_magic, "not a PLNS1 checkpoint (bad magic)");
    std::size_t pos = kCheckpointMagicLen;
    std::uint64_t len = 0;
    if (bytes.size() < pos + sizeof(len)) throw LoadError(LoadFailure::truncated, "truncated before header length");
    std::memcpy(&len, bytes.data() + pos, sizeof(len));
    pos += sizeof(len);
    if (len > bytes.size() - pos) throw LoadError(LoadFailure::truncated, "truncated inside header");

    nlohmann::json header;
    Checkpoint ck;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
        if (header.at("format") != "PLNS1") throw LoadError(LoadFailure::malformed_header, "unknown format tag");
        ck.config = header.at("config").get<ModelConfig>();
        ck.config.validate();
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(LoadFailure::malformed_header, std::string("malformed header: ") + e.what());
    }
    pos += len;
    const std::size_t payload = pos;

    ck.layers.resize(ck.config.n_layers);
    const auto expected = Checkpoint::expected_shapes(ck.config);
    auto dir = ck.directory();
    const auto& entries = header.at("tensors");
    if (!entries.is_array() || entries.size() != dir.size()) {
        throw LoadError(LoadFailure::malformed_header, "tensor directory has " + std::to_string(entries.size()) +
                                                           " entries, expected " + std::to_string(dir.size()));
    }
    for (std::size_t i = 0; i < dir.size(); ++i) {
        std::string name;
        std::vector<std::size_t> shape;
        std::uint64_t offset = 0, nbytes = 0;
        try {
            name = entries[i].at("name").get<std::string>();
            shape = entries[i].at("shape").get<std::vector<std::size_t>>();
            offset = entries[i].at("offset").get<std::uint64_t>();
            nbytes = entries[i].at("nbytes").get<std::uint64_t>();
        } catch (const std::exception& e) {
            throw LoadError(LoadFailure::malformed_header, "bad directory entry " + std::to_string(i) + ": " + e.what());
        }
        if (name != dir[i].first)
            throw LoadError(LoadFailure::malformed_header, "expected tensor '" + dir[i].first + "', found '" + name + "'");
        if (shape != expected[i].second) {
            Tensor probe(shape);
            Tensor want(expected[i].second);
            throw LoadError(LoadFailure::shape_mismatch, name + ": shape " + probe.shape_string() +
                                                             " does not match config shape " + want.shape_string());
        }
        const std::size_t count = Tensor(shape).size();
        if (nbytes != count * sizeof(float))
            throw LoadError(LoadFailure::shape_mismatch, name + ": byte size does not match its shape");
        if (offset > bytes.size() - payload || nbytes > bytes.size() - payload - offset)
            throw LoadError(LoadFailure::truncated, "payload truncated in tensor '" + name + "'");
        std::vector<float> data(count);
        std::memcpy(data.data(), bytes.data() + payload + offset, nbytes);
        *dir[i].second = Tensor(shape, std::move(data));
    }
    try {
        ck.validate();
    } catch (const Error& e) {
        throw LoadError(LoadFailure::malformed_header, e.what());
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw LoadError(LoadFailure::io, "cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw LoadError(LoadFailure::io, "write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError(LoadFailure::io, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace prunelens
