// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include <openssl/evp.h>

#include "mrrecon/core/errors.hpp"

namespace mrrecon::io {

namespace detail {

struct DigestCtx {
    EVP_MD_CTX* ctx;
    DigestCtx() : ctx(EVP_MD_CTX_new()) {
        require(ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1,
                "sha256: context init failed");
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    DigestCtx(const DigestCtx&) = delete;
    DigestCtx& operator=(const DigestCtx&) = delete;

    std::string finish() {
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        require(EVP_DigestFinal_ex(ctx, out, &len) == 1, "sha256: finalize failed");
        static const char* hex = "0123456789abcdef";
        std::string s;
        s.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            s.push_back(hex[out[i] >> 4]);
            s.push_back(hex[out[i] & 0xf]);
        }
        return s;
    }
};

} // namespace detail

inline std::string sha256_bytes(const std::string& bytes) {
    detail::DigestCtx d;
    require(EVP_DigestUpdate(d.ctx, bytes.data(), bytes.size()) == 1, "sha256: update failed");
    return d.finish();
}

inline std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open file for checksum: " + path);
    detail::DigestCtx d;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        const std::streamsize n = is.gcount();
        if (n > 0)
            require(EVP_DigestUpdate(d.ctx, buf, static_cast<size_t>(n)) == 1,
                    "sha256: update failed");
    }
    return d.finish();
}

} // namespace mrrecon::io
