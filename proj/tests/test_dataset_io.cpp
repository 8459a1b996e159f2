#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bevadapt/dataset_io.hpp"

using namespace bevadapt;
using namespace bevadapt::scenegen;
namespace fs = std::filesystem;

namespace {

std::vector<MultiViewSample> make_samples(int n) {
    SceneSpec spec = SceneSpec::defaults();
    spec.image_h = 32;
    spec.image_w = 48;
    spec.num_views = 3;
    spec.fov_deg = 120;
    spec.num_objects = 3;
    spec.lidar_rays = 512;
    spec.lidar_elev_count = 8;
    std::vector<MultiViewSample> out;
    for (int i = 0; i < n; ++i) {
        spec.seed = 1000 + std::uint64_t(i);
        out.push_back(generate_sample(spec, i % 2 ? DomainShiftConfig::preset(ShiftKind::WEATHER)
                                                  : DomainShiftConfig::none()));
    }
    return out;
}

DatasetMeta meta_for(const std::vector<MultiViewSample>& samples) {
    DatasetMeta m;
    m.split = "src";
    m.spec = SceneSpec::defaults();
    m.shift = DomainShiftConfig::none();
    m.count = samples.size();
    return m;
}

struct TempDir {
    fs::path path;
    TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("round trip of ten samples is bitwise exact") {
    TempDir dir("bevadapt_io_roundtrip");
    const auto samples = make_samples(10);
    write_dataset(dir.path.string(), samples, meta_for(samples));
    DatasetMeta meta;
    const auto back = read_dataset(dir.path.string(), &meta);
    REQUIRE(back.size() == samples.size());
    CHECK(meta.count == 10);
    for (std::size_t i = 0; i < samples.size(); ++i) CHECK(samples_equal(samples[i], back[i]));
    // idempotent re-write produces identical bytes
    std::ifstream f1(dir.path / "records.bin", std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    write_dataset(dir.path.string(), samples, meta_for(samples));
    std::ifstream f2(dir.path / "records.bin", std::ios::binary);
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
}

TEST_CASE("empty sequence gives a valid manifest and zero records") {
    TempDir dir("bevadapt_io_empty");
    std::vector<MultiViewSample> none;
    auto meta = meta_for(none);
    write_dataset(dir.path.string(), none, meta);
    DatasetMeta back_meta;
    const auto back = read_dataset(dir.path.string(), &back_meta);
    CHECK(back.empty());
    CHECK(back_meta.count == 0);
}

TEST_CASE("a corrupted record byte is reported with its record index") {
    TempDir dir("bevadapt_io_corrupt");
    const auto samples = make_samples(4);
    write_dataset(dir.path.string(), samples, meta_for(samples));
    const auto file = dir.path / "records.bin";
    // compute the offset of record 2's payload and flip one byte inside it
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    std::uint64_t offset = 0;
    for (int rec = 0; rec < 2; ++rec) {
        f.seekg(std::streamoff(offset + 12));
        std::uint64_t len = 0;
        f.read(reinterpret_cast<char*>(&len), 8);
        offset += 20 + len + 4;
    }
    f.seekg(std::streamoff(offset + 12));
    std::uint64_t len2 = 0;
    f.read(reinterpret_cast<char*>(&len2), 8);
    f.seekg(std::streamoff(offset + 20 + len2 / 2));
    char b = 0;
    f.read(&b, 1);
    b = char(b ^ 0x40);
    f.seekp(std::streamoff(offset + 20 + len2 / 2));
    f.write(&b, 1);
    f.close();
    try {
        read_dataset(dir.path.string());
        FAIL("expected a checksum failure");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("record 2") != std::string::npos);
        CHECK(msg.find("checksum") != std::string::npos);
    }
}

TEST_CASE("truncated records report the file offset") {
    TempDir dir("bevadapt_io_trunc");
    const auto samples = make_samples(2);
    write_dataset(dir.path.string(), samples, meta_for(samples));
    const auto file = dir.path / "records.bin";
    const auto size = fs::file_size(file);
    fs::resize_file(file, size - 64);
    try {
        read_dataset(dir.path.string());
        FAIL("expected a truncation failure");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("record 1") != std::string::npos);
        CHECK(msg.find("offset") != std::string::npos);
        CHECK(msg.find("truncated") != std::string::npos);
    }
}

TEST_CASE("version mismatches are rejected") {
    TempDir dir("bevadapt_io_version");
    const auto samples = make_samples(1);
    write_dataset(dir.path.string(), samples, meta_for(samples));
    // manifest version bump
    {
        std::ifstream mf(dir.path / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
        const auto pos = text.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"format_version\": 9");
        std::ofstream out(dir.path / "manifest.json");
        out << text;
    }
    CHECK_THROWS_AS(read_dataset(dir.path.string()), IoError);
}
