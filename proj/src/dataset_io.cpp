#include "bevadapt/dataset_io.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "bevadapt/common.hpp"
#include "bevadapt/serde.hpp"

namespace fs = std::filesystem;

namespace bevadapt::scenegen {

namespace {

constexpr std::uint32_t kMagic = 0x42565352u;
constexpr std::uint32_t kFormatVersion = 1;

// little-endian byte buffer helpers; the on-disk layout is LE by contract
struct Writer {
    std::vector<unsigned char>& buf;

    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xff);
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xff);
    }
    void f32(float v) {
        std::uint32_t b;
        std::memcpy(&b, &v, 4);
        u32(b);
    }
    void f64(double v) {
        std::uint64_t b;
        std::memcpy(&b, &v, 8);
        u64(b);
    }
};

struct Reader {
    const unsigned char* p;
    std::size_t n;
    std::size_t pos = 0;

    void need(std::size_t k) const {
        if (pos + k > n) throw IoError("record payload truncated at byte " + std::to_string(pos));
    }
    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t b = u32();
        float v;
        std::memcpy(&v, &b, 4);
        return v;
    }
    double f64() {
        std::uint64_t b = u64();
        double v;
        std::memcpy(&v, &b, 8);
        return v;
    }
};

} // namespace

std::uint32_t crc32(const void* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<unsigned char> encode_sample(const MultiViewSample& s) {
    std::vector<unsigned char> buf;
    Writer w{buf};
    const std::uint32_t m = std::uint32_t(s.images.size());
    w.u32(m);
    w.u32(std::uint32_t(s.image_h));
    w.u32(std::uint32_t(s.image_w));
    w.u8(std::uint8_t(s.domain_tag));
    w.u8(0); w.u8(0); w.u8(0);
    w.u64(s.lidar_count());
    w.u32(std::uint32_t(s.gt_boxes.size()));
    for (const CameraView& v : s.rig.views) {
        w.f64(v.intrinsics.fx);
        w.f64(v.intrinsics.fy);
        w.f64(v.intrinsics.cx);
        w.f64(v.intrinsics.cy);
        for (double x : v.ego_to_cam.R.m) w.f64(x);
        w.f64(v.ego_to_cam.t.x);
        w.f64(v.ego_to_cam.t.y);
        w.f64(v.ego_to_cam.t.z);
    }
    for (const auto& img : s.images)
        for (float x : img) w.f32(x);
    for (float x : s.lidar) w.f32(x);
    for (const GtBox& b : s.gt_boxes) {
        w.f64(b.center.x);
        w.f64(b.center.y);
        w.f64(b.center.z);
        w.f64(b.length);
        w.f64(b.width);
        w.f64(b.height);
        w.f64(b.yaw);
        w.u32(std::uint32_t(b.category));
        w.u32(0);
    }
    return buf;
}

MultiViewSample decode_sample(const unsigned char* data, std::size_t len) {
    Reader r{data, len};
    MultiViewSample s;
    const std::uint32_t m = r.u32();
    s.image_h = int(r.u32());
    s.image_w = int(r.u32());
    s.domain_tag = DomainTag(r.u8());
    r.u8(); r.u8(); r.u8();
    const std::uint64_t n_lidar = r.u64();
    const std::uint32_t n_boxes = r.u32();
    s.rig.views.resize(m);
    for (CameraView& v : s.rig.views) {
        v.intrinsics.fx = r.f64();
        v.intrinsics.fy = r.f64();
        v.intrinsics.cx = r.f64();
        v.intrinsics.cy = r.f64();
        for (double& x : v.ego_to_cam.R.m) x = r.f64();
        v.ego_to_cam.t.x = r.f64();
        v.ego_to_cam.t.y = r.f64();
        v.ego_to_cam.t.z = r.f64();
    }
    s.images.resize(m);
    const std::size_t npix = std::size_t(s.image_h) * s.image_w * 3;
    for (auto& img : s.images) {
        img.resize(npix);
        for (float& x : img) x = r.f32();
    }
    s.lidar.resize(n_lidar * 3);
    for (float& x : s.lidar) x = r.f32();
    s.gt_boxes.resize(n_boxes);
    for (GtBox& b : s.gt_boxes) {
        b.center.x = r.f64();
        b.center.y = r.f64();
        b.center.z = r.f64();
        b.length = r.f64();
        b.width = r.f64();
        b.height = r.f64();
        b.yaw = r.f64();
        b.category = int(r.u32());
        r.u32();
    }
    if (r.pos != len)
        throw IoError("record payload has " + std::to_string(len - r.pos) + " trailing bytes");
    return s;
}

void write_dataset(const std::string& dir, const std::vector<MultiViewSample>& samples,
                   const DatasetMeta& meta) {
    fs::create_directories(dir);
    nlohmann::json manifest{{"format_version", kFormatVersion},
                            {"count", samples.size()},
                            {"split", meta.split},
                            {"records_file", "records.bin"},
                            {"spec", meta.spec},
                            {"shift", meta.shift}};
    {
        std::ofstream mf(fs::path(dir) / "manifest.json");
        BEVA_CHECK(mf.good(), "cannot open manifest for writing in " + dir);
        mf << manifest.dump(2) << "\n";
    }
    std::ofstream rf(fs::path(dir) / "records.bin", std::ios::binary);
    BEVA_CHECK(rf.good(), "cannot open records.bin for writing in " + dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::vector<unsigned char> payload = encode_sample(samples[i]);
        std::vector<unsigned char> frame;
        Writer w{frame};
        w.u32(kMagic);
        w.u32(kFormatVersion);
        w.u32(std::uint32_t(i));
        w.u64(payload.size());
        w.bytes(payload.data(), payload.size());
        w.u32(crc32(payload.data(), payload.size()));
        rf.write(reinterpret_cast<const char*>(frame.data()), std::streamsize(frame.size()));
    }
    BEVA_CHECK(rf.good(), "write failure on records.bin in " + dir);
}

DatasetMeta read_manifest(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf.good()) throw IoError("missing manifest.json in " + dir);
    nlohmann::json j;
    mf >> j;
    DatasetMeta meta;
    meta.format_version = j.at("format_version").get<int>();
    if (meta.format_version != int(kFormatVersion))
        throw IoError("manifest format version mismatch in " + dir + ": found " +
                      std::to_string(meta.format_version) + ", expected " +
                      std::to_string(kFormatVersion));
    meta.split = j.at("split").get<std::string>();
    meta.spec = j.at("spec").get<SceneSpec>();
    meta.shift = j.at("shift").get<DomainShiftConfig>();
    meta.count = j.at("count").get<std::size_t>();
    return meta;
}

std::vector<MultiViewSample> read_dataset(const std::string& dir, DatasetMeta* meta_out) {
    DatasetMeta meta = read_manifest(dir);
    std::ifstream rf(fs::path(dir) / "records.bin", std::ios::binary);
    if (!rf.good()) throw IoError("missing records.bin in " + dir);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(rf)),
                                     std::istreambuf_iterator<char>());
    std::vector<MultiViewSample> samples;
    samples.reserve(meta.count);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < meta.count; ++i) {
        const std::size_t record_off = pos;
        auto fail = [&](const std::string& what) {
            throw IoError("record " + std::to_string(i) + " at offset " +
                          std::to_string(record_off) + ": " + what);
        };
        if (pos + 20 > bytes.size()) fail("truncated header");
        Reader r{bytes.data() + pos, 20};
        const std::uint32_t magic = r.u32();
        const std::uint32_t version = r.u32();
        const std::uint32_t index = r.u32();
        const std::uint64_t len = r.u64();
        if (magic != kMagic) fail("bad magic");
        if (version != kFormatVersion)
            fail("record format version mismatch: found " + std::to_string(version) +
                 ", expected " + std::to_string(kFormatVersion));
        if (index != i) fail("out-of-order record index " + std::to_string(index));
        pos += 20;
        if (pos + len + 4 > bytes.size()) fail("truncated payload");
        const std::uint32_t want_crc = crc32(bytes.data() + pos, len);
        Reader cr{bytes.data() + pos + len, 4};
        if (cr.u32() != want_crc) fail("checksum mismatch");
        try {
            samples.push_back(decode_sample(bytes.data() + pos, len));
        } catch (const IoError& e) {
            fail(e.what());
        }
        pos += len + 4;
    }
    if (pos != bytes.size())
        throw IoError("records.bin has " + std::to_string(bytes.size() - pos) +
                      " trailing bytes after record " + std::to_string(meta.count - 1));
    if (meta_out) *meta_out = meta;
    return samples;
}

} // namespace bevadapt::scenegen
