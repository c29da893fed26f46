// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <hdf5.h>

#include <cstring>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/phantom/phantom.hpp"

namespace mrrecon {
namespace detail {

/// Failures surface as exceptions; the library's stderr stack is noise.
inline void silence_h5_errors() {
    static const bool once = [] {
        H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
        return true;
    }();
    (void)once;
}

struct H5Handle {
    hid_t id = H5I_INVALID_HID;
    herr_t (*closer)(hid_t) = nullptr;
    H5Handle(hid_t i, herr_t (*c)(hid_t)) : id(i), closer(c) {}
    ~H5Handle() {
        if (id >= 0 && closer) closer(id);
    }
    H5Handle(const H5Handle&) = delete;
    H5Handle& operator=(const H5Handle&) = delete;
    H5Handle(H5Handle&& o) noexcept : id(o.id), closer(o.closer) { o.id = H5I_INVALID_HID; }
    operator hid_t() const { return id; }
    bool ok() const { return id >= 0; }
};

/// Object-header timestamps are the only nondeterministic bytes HDF5 would
/// write; disabling them makes identical writes byte-identical.
inline H5Handle timeless_plist(hid_t cls) {
    H5Handle p(H5Pcreate(cls), H5Pclose);
    H5Pset_obj_track_times(p, 0);
    return p;
}

inline void write_f32_dataset(hid_t file, const char* name, const Tensor& t) {
    std::vector<hsize_t> dims(t.shape().begin(), t.shape().end());
    H5Handle space(H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr),
                   H5Sclose);
    H5Handle dcpl = timeless_plist(H5P_DATASET_CREATE);
    H5Handle ds(H5Dcreate2(file, name, H5T_IEEE_F32LE, space, H5P_DEFAULT, dcpl, H5P_DEFAULT),
                H5Dclose);
    require(ds.ok(), std::string("subject write: cannot create dataset ") + name);
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    H5Dwrite(ds, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data());
}

inline void write_f64_dataset(hid_t file, const char* name, const Tensor& t) {
    std::vector<hsize_t> dims(t.shape().begin(), t.shape().end());
    H5Handle space(H5Screate_simple(static_cast<int>(dims.size()), dims.data(), nullptr),
                   H5Sclose);
    H5Handle dcpl = timeless_plist(H5P_DATASET_CREATE);
    H5Handle ds(H5Dcreate2(file, name, H5T_IEEE_F64LE, space, H5P_DEFAULT, dcpl, H5P_DEFAULT),
                H5Dclose);
    require(ds.ok(), std::string("subject write: cannot create dataset ") + name);
    H5Dwrite(ds, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, t.data());
}

template <class T>
void write_scalar_attr(hid_t loc, const char* name, hid_t file_type, hid_t mem_type,
                       const T& value) {
    H5Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    H5Handle attr(H5Acreate2(loc, name, file_type, space, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    H5Awrite(attr, mem_type, &value);
}

inline void write_string_attr(hid_t loc, const char* name, const std::string& value) {
    H5Handle type(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(type, value.empty() ? 1 : value.size());
    H5Handle space(H5Screate(H5S_SCALAR), H5Sclose);
    H5Handle attr(H5Acreate2(loc, name, type, space, H5P_DEFAULT, H5P_DEFAULT), H5Aclose);
    H5Awrite(attr, type, value.empty() ? "\0" : value.data());
}

inline std::vector<int64_t> dataset_shape(hid_t ds) {
    H5Handle space(H5Dget_space(ds), H5Sclose);
    const int nd = H5Sget_simple_extent_ndims(space);
    std::vector<hsize_t> dims(static_cast<size_t>(nd));
    H5Sget_simple_extent_dims(space, dims.data(), nullptr);
    return std::vector<int64_t>(dims.begin(), dims.end());
}

inline Tensor read_float_dataset(hid_t file, const char* name,
                                 const std::vector<int64_t>* want_shape) {
    if (H5Lexists(file, name, H5P_DEFAULT) <= 0)
        throw DataError(std::string("subject file is missing dataset ") + name);
    H5Handle ds(H5Dopen2(file, name, H5P_DEFAULT), H5Dclose);
    require(ds.ok(), std::string("subject read: cannot open dataset ") + name);
    auto shape = dataset_shape(ds);
    if (want_shape && shape != *want_shape)
        throw DataError(std::string("dataset ") + name + " has unexpected shape");
    H5Handle type(H5Dget_type(ds), H5Tclose);
    if (H5Tget_class(type) != H5T_FLOAT)
        throw DataError(std::string("dataset ") + name + " has unexpected dtype");
    Tensor out(shape);
    if (H5Tget_size(type) == 4) {
        std::vector<float> buf(static_cast<size_t>(out.size()));
        H5Dread(ds, H5T_NATIVE_FLOAT, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data());
        for (int64_t i = 0; i < out.size(); ++i) out[i] = buf[static_cast<size_t>(i)];
    } else {
        H5Dread(ds, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, out.data());
    }
    return out;
}

template <class T>
T read_scalar_attr(hid_t loc, const char* name, hid_t mem_type) {
    if (H5Aexists(loc, name) <= 0)
        throw DataError(std::string("subject file is missing attribute ") + name);
    H5Handle attr(H5Aopen(loc, name, H5P_DEFAULT), H5Aclose);
    T value{};
    H5Aread(attr, mem_type, &value);
    return value;
}

inline std::string read_string_attr(hid_t loc, const char* name) {
    if (H5Aexists(loc, name) <= 0)
        throw DataError(std::string("subject file is missing attribute ") + name);
    H5Handle attr(H5Aopen(loc, name, H5P_DEFAULT), H5Aclose);
    H5Handle type(H5Aget_type(attr), H5Tclose);
    std::vector<char> buf(H5Tget_size(type) + 1, '\0');
    H5Handle mem_type(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(mem_type, buf.size() - 1);
    H5Aread(attr, mem_type, buf.data());
    return std::string(buf.data());
}

} // namespace detail

inline constexpr int kSubjectFormatVersion = 1;

/// One subject per file: float32 datasets `kspace_full` [F, C, H, W, 2] and
/// `image_rss` [F, H, W], a float64 `ellipses` table, and scalar attributes.
/// Writes are byte-deterministic (object timestamps disabled).
inline void write_subject(const SubjectRecord& rec, const std::string& path) {
    using namespace detail;
    silence_h5_errors();
    require(rec.kspace_full.rank() == 5 && rec.kspace_full.dim(4) == 2,
            "write_subject: kspace_full must be [F, C, H, W, 2]");
    require(rec.image_rss.rank() == 3, "write_subject: image_rss must be [F, H, W]");
    H5Handle fcpl = timeless_plist(H5P_FILE_CREATE);
    H5Handle file(H5Fcreate(path.c_str(), H5F_ACC_TRUNC, fcpl, H5P_DEFAULT), H5Fclose);
    require(file.ok(), "write_subject: cannot create " + path);
    write_f32_dataset(file, "kspace_full", rec.kspace_full);
    write_f32_dataset(file, "image_rss", rec.image_rss);
    Tensor etab({static_cast<int64_t>(rec.spec.ellipses.size()), 6});
    for (size_t i = 0; i < rec.spec.ellipses.size(); ++i) {
        const auto& e = rec.spec.ellipses[i];
        const double row[6] = {e.cy, e.cx, e.ay, e.ax, e.intensity, e.pulsatility};
        std::copy(row, row + 6, etab.data() + static_cast<int64_t>(i) * 6);
    }
    write_f64_dataset(file, "ellipses", etab);
    write_scalar_attr(file, "format_version", H5T_STD_I32LE, H5T_NATIVE_INT32,
                      static_cast<int32_t>(kSubjectFormatVersion));
    write_string_attr(file, "contrast_tag", contrast_name(rec.contrast_tag));
    write_scalar_attr(file, "seed", H5T_STD_U64LE, H5T_NATIVE_UINT64, rec.spec.seed);
    write_scalar_attr(file, "heart_rate_phase", H5T_IEEE_F64LE, H5T_NATIVE_DOUBLE,
                      rec.spec.heart_rate_phase);
    write_scalar_attr(file, "noise_std", H5T_IEEE_F64LE, H5T_NATIVE_DOUBLE, rec.spec.noise_std);
}

inline SubjectRecord read_subject(const std::string& path) {
    using namespace detail;
    silence_h5_errors();
    H5Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (!file.ok()) throw DataError("cannot open subject file " + path);
    const auto version = read_scalar_attr<int32_t>(file, "format_version", H5T_NATIVE_INT32);
    if (version != kSubjectFormatVersion)
        throw DataError("subject format version " + std::to_string(version) +
                        " unsupported (expected " + std::to_string(kSubjectFormatVersion) + ")");
    SubjectRecord rec;
    rec.kspace_full = read_float_dataset(file, "kspace_full", nullptr);
    if (rec.kspace_full.rank() != 5 || rec.kspace_full.dim(4) != 2)
        throw DataError("dataset kspace_full has unexpected shape");
    const std::vector<int64_t> img_shape = {rec.kspace_full.dim(0), rec.kspace_full.dim(2),
                                            rec.kspace_full.dim(3)};
    rec.image_rss = read_float_dataset(file, "image_rss", &img_shape);
    Tensor etab = read_float_dataset(file, "ellipses", nullptr);
    if (etab.rank() != 2 || etab.dim(1) != 6)
        throw DataError("dataset ellipses has unexpected shape");
    rec.contrast_tag = contrast_from_name(read_string_attr(file, "contrast_tag"));
    rec.spec.height = rec.kspace_full.dim(2);
    rec.spec.width = rec.kspace_full.dim(3);
    rec.spec.frames = rec.kspace_full.dim(0);
    rec.spec.coils = rec.kspace_full.dim(1);
    rec.spec.seed = read_scalar_attr<uint64_t>(file, "seed", H5T_NATIVE_UINT64);
    rec.spec.heart_rate_phase =
        read_scalar_attr<double>(file, "heart_rate_phase", H5T_NATIVE_DOUBLE);
    rec.spec.noise_std = read_scalar_attr<double>(file, "noise_std", H5T_NATIVE_DOUBLE);
    for (int64_t i = 0; i < etab.dim(0); ++i)
        rec.spec.ellipses.push_back({etab.at({i, 0}), etab.at({i, 1}), etab.at({i, 2}),
                                     etab.at({i, 3}), etab.at({i, 4}), etab.at({i, 5})});
    return rec;
}

/// Ingestion shim for challenge-style files: a compound {real, imag} k-space
/// dataset, optionally with column-major (reversed) axis order as written by
/// .mat v7.3 tooling. The RSS image and metadata are reconstructed here, not
/// read. Functional only; no acceptance weight.
inline SubjectRecord read_challenge_subject(const std::string& path,
                                            const std::string& dataset = "kspace_full",
                                            bool reversed_axes = true) {
    using namespace detail;
    silence_h5_errors();
    H5Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (!file.ok()) throw DataError("cannot open challenge file " + path);
    if (H5Lexists(file, dataset.c_str(), H5P_DEFAULT) <= 0)
        throw DataError("challenge file is missing dataset " + dataset);
    H5Handle ds(H5Dopen2(file, dataset.c_str(), H5P_DEFAULT), H5Dclose);
    auto shape = dataset_shape(ds);
    if (shape.size() != 4) throw DataError("challenge dataset must be 4-D");
    H5Handle ftype(H5Dget_type(ds), H5Tclose);
    if (H5Tget_class(ftype) != H5T_COMPOUND)
        throw DataError("challenge dataset must have a compound {real, imag} type");
    struct Pair {
        double re, im;
    };
    H5Handle mtype(H5Tcreate(H5T_COMPOUND, sizeof(Pair)), H5Tclose);
    H5Tinsert(mtype, "real", offsetof(Pair, re), H5T_NATIVE_DOUBLE);
    H5Tinsert(mtype, "imag", offsetof(Pair, im), H5T_NATIVE_DOUBLE);
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    std::vector<Pair> buf(static_cast<size_t>(n));
    if (H5Dread(ds, mtype, H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data()) < 0)
        throw DataError("challenge dataset read failed (member names must be real/imag)");

    // File order is [W, H, C, F] when reversed, already [F, C, H, W] otherwise.
    const int64_t f = reversed_axes ? shape[3] : shape[0];
    const int64_t c = reversed_axes ? shape[2] : shape[1];
    const int64_t h = reversed_axes ? shape[1] : shape[2];
    const int64_t w = reversed_axes ? shape[0] : shape[3];
    SubjectRecord rec;
    rec.kspace_full = Tensor({f, c, h, w, 2});
    for (int64_t i = 0; i < n; ++i) {
        int64_t tf, tc, ty, tx;
        if (reversed_axes) {
            // Row-major index into [W, H, C, F].
            tf = i % shape[3];
            tc = (i / shape[3]) % shape[2];
            ty = (i / (shape[3] * shape[2])) % shape[1];
            tx = i / (shape[3] * shape[2] * shape[1]);
        } else {
            tx = i % shape[3];
            ty = (i / shape[3]) % shape[2];
            tc = (i / (shape[3] * shape[2])) % shape[1];
            tf = i / (shape[3] * shape[2] * shape[1]);
        }
        rec.kspace_full.at({tf, tc, ty, tx, 0}) = buf[static_cast<size_t>(i)].re;
        rec.kspace_full.at({tf, tc, ty, tx, 1}) = buf[static_cast<size_t>(i)].im;
    }
    rec.image_rss = Tensor({f, h, w});
    const int64_t plane = c * h * w * 2;
    for (int64_t t = 0; t < f; ++t) {
        Tensor frame({c, h, w, 2});
        std::copy(rec.kspace_full.data() + t * plane, rec.kspace_full.data() + (t + 1) * plane,
                  frame.data());
        Tensor rss = coil_combine_rss(ifft2c(frame));
        std::copy(rss.data(), rss.data() + rss.size(), rec.image_rss.data() + t * rss.size());
    }
    rec.spec.height = h;
    rec.spec.width = w;
    rec.spec.frames = f;
    rec.spec.coils = c;
    return rec;
}

} // namespace mrrecon
