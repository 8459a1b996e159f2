#pragma once

// Dataset directory layout:
//   manifest.json  — format version, split tag, record count, the SceneSpec
//                    and DomainShiftConfig that produced the records
//   records.bin    — one framed binary record per sample, little-endian:
//
//     u32  magic 0x42565352            u32  format version (1)
//     u32  record index                u64  payload length in bytes
//     payload                          u32  CRC-32 of the payload
//
//   payload:
//     u32 M, H, W; u8 domain_tag; u8 pad[3]; u64 n_lidar_points; u32 n_boxes
//     per view:  fx fy cx cy (f64 x4), R row-major (f64 x9), t (f64 x3)
//     images:    M * H * W * 3  f32
//     lidar:     n_lidar_points * 3  f32
//     per box:   cx cy cz l w h yaw (f64 x7), category (u32), pad (u32)

#include <string>
#include <vector>

#include "bevadapt/scenegen.hpp"

namespace bevadapt::scenegen {

struct DatasetMeta {
    int format_version = 1;
    std::string split;
    SceneSpec spec;
    DomainShiftConfig shift;
    std::size_t count = 0;
};

void write_dataset(const std::string& dir, const std::vector<MultiViewSample>& samples,
                   const DatasetMeta& meta);

// Throws IoError naming the record index and byte offset on version mismatch,
// truncation, or checksum failure.
std::vector<MultiViewSample> read_dataset(const std::string& dir, DatasetMeta* meta_out = nullptr);

DatasetMeta read_manifest(const std::string& dir);

// Canonical byte encoding of one sample (the record payload); also the basis
// for byte-identity checks in tests.
std::vector<unsigned char> encode_sample(const MultiViewSample& sample);
MultiViewSample decode_sample(const unsigned char* data, std::size_t len);

inline bool samples_equal(const MultiViewSample& a, const MultiViewSample& b) {
    return encode_sample(a) == encode_sample(b);
}

std::uint32_t crc32(const void* data, std::size_t n);

} // namespace bevadapt::scenegen
