// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/tensor.hpp"

// Binary named-tensor container for model checkpoints. Tensors are written
// name-sorted with raw double payloads, so the same parameter values always
// produce byte-identical files. Loading back into a ParamStore is strict:
// every store parameter must be present with a matching shape and the file
// must not carry extras.

namespace mrrecon::train {

using ad::Param;
using ad::ParamStore;

namespace detail {

constexpr char kMagic[4] = {'M', 'R', 'C', 'K'};
constexpr uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_i64(std::ostream& os, int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t read_u32(std::istream& is, const std::string& path) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw DataError("checkpoint truncated: " + path);
    return v;
}
inline int64_t read_i64(std::istream& is, const std::string& path) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw DataError("checkpoint truncated: " + path);
    return v;
}
inline std::string read_str(std::istream& is, const std::string& path) {
    const uint32_t n = read_u32(is, path);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("checkpoint truncated: " + path);
    return s;
}

} // namespace detail

struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> metadata;
};

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const std::map<std::string, std::string>& metadata = {}) {
    // Name-sorted view of the store; creation order must not leak into bytes.
    std::map<std::string, const Tensor*> sorted;
    for (const Param* p : store.all()) sorted[p->name] = &p->value;

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(detail::kMagic, 4);
    detail::write_u32(os, detail::kVersion);

    detail::write_u32(os, static_cast<uint32_t>(metadata.size()));
    for (const auto& [k, v] : metadata) {
        detail::write_str(os, k);
        detail::write_str(os, v);
    }

    detail::write_u32(os, static_cast<uint32_t>(sorted.size()));
    for (const auto& [name, tensor] : sorted) {
        detail::write_str(os, name);
        detail::write_u32(os, static_cast<uint32_t>(tensor->rank()));
        for (int64_t d = 0; d < tensor->rank(); ++d) detail::write_i64(os, tensor->dim(d));
        os.write(reinterpret_cast<const char*>(tensor->data()),
                 static_cast<std::streamsize>(tensor->size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    const uint32_t version = detail::read_u32(is, path);
    if (version != detail::kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    Checkpoint ck;
    const uint32_t n_meta = detail::read_u32(is, path);
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = detail::read_str(is, path);
        ck.metadata[k] = detail::read_str(is, path);
    }

    const uint32_t n_tensors = detail::read_u32(is, path);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = detail::read_str(is, path);
        const uint32_t rank = detail::read_u32(is, path);
        std::vector<int64_t> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = detail::read_i64(is, path);
            if (shape[d] <= 0) throw DataError("corrupt tensor shape in checkpoint: " + path);
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint truncated: " + path);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

/// Copies checkpoint tensors into the store. Every store parameter must be
/// present with an identical shape and the checkpoint must not carry tensors
/// the store lacks; the error message lists each offending name.
inline void apply_checkpoint(ParamStore& store, const Checkpoint& ck) {
    std::string missing, mismatched, extra;
    for (Param* p : store.all()) {
        auto it = ck.tensors.find(p->name);
        if (it == ck.tensors.end()) {
            missing += (missing.empty() ? "" : ", ") + p->name;
        } else if (!it->second.same_shape(p->value)) {
            mismatched += (mismatched.empty() ? "" : ", ") + p->name;
        }
    }
    for (const auto& [name, tensor] : ck.tensors)
        if (store.find(name) == nullptr) extra += (extra.empty() ? "" : ", ") + name;

    if (!missing.empty() || !mismatched.empty() || !extra.empty()) {
        std::string msg = "checkpoint incompatible with model";
        if (!missing.empty()) msg += "; missing: " + missing;
        if (!mismatched.empty()) msg += "; shape mismatch: " + mismatched;
        if (!extra.empty()) msg += "; unexpected: " + extra;
        throw DataError(msg);
    }

    for (Param* p : store.all()) p->value = ck.tensors.at(p->name);
}

inline void load_into(const std::string& path, ParamStore& store) {
    apply_checkpoint(store, load_checkpoint(path));
}

} // namespace mrrecon::train
