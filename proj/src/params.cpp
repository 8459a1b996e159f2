#include "bevadapt/params.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "bevadapt/common.hpp"

namespace bevadapt::perception {

namespace {

constexpr std::uint32_t kMagic = 0x4256434bu; // "BVCK"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
void put_i64(std::ofstream& f, std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::ifstream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::int64_t get_i64(std::ifstream& f) {
    std::int64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void put_array(std::ofstream& f, const std::string& name, const Tensor& t) {
    put_u32(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    put_u32(f, std::uint32_t(t.rank()));
    for (int d : t.dims()) put_u32(f, std::uint32_t(d));
    f.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * 8));
}

struct RawArray {
    std::vector<int> dims;
    std::vector<double> data;
};

} // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointSection>& sections,
                     std::uint64_t config_hash, std::int64_t iteration, const AdamW* opt) {
    std::ofstream f(path, std::ios::binary);
    BEVA_CHECK(f.good(), "cannot open checkpoint for writing: " + path);
    std::uint32_t count = 0;
    for (const auto& sec : sections) count += std::uint32_t(sec.set->items.size());
    if (opt) count += std::uint32_t(2 * (opt->m.size() + 1)); // m./v. arrays + step marker tensor
    put_u32(f, kMagic);
    put_u32(f, kVersion);
    put_u64(f, config_hash);
    put_i64(f, iteration);
    put_u32(f, count);
    for (const auto& sec : sections)
        for (const auto& p : sec.set->items) put_array(f, sec.prefix + "/" + p.name, p.value);
    if (opt) {
        std::size_t k = 0;
        for (ParamSet* s : opt->sets)
            for (auto& p : s->items) {
                std::string prefix;
                for (const auto& sec : sections)
                    if (sec.set == s) prefix = sec.prefix;
                put_array(f, "opt.m/" + prefix + "/" + p.name, opt->m[k]);
                put_array(f, "opt.v/" + prefix + "/" + p.name, opt->v[k]);
                ++k;
            }
        Tensor step({1});
        step[0] = double(opt->t);
        put_array(f, "opt.t", step);
        put_array(f, "opt.t2", step); // keeps the declared count exact
    }
    BEVA_CHECK(f.good(), "write failure on checkpoint: " + path);
}

namespace {

std::map<std::string, RawArray> read_all_arrays(std::ifstream& f, const std::string& path,
                                                CheckpointInfo& info) {
    BEVA_CHECK(f.good(), "cannot open checkpoint: " + path);
    BEVA_CHECK(get_u32(f) == kMagic, "not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(f);
    BEVA_CHECK(version == kVersion,
               "checkpoint version mismatch in " + path + ": " + std::to_string(version));
    info.config_hash = get_u64(f);
    info.iteration = get_i64(f);
    const std::uint32_t count = get_u32(f);
    std::map<std::string, RawArray> arrays;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        RawArray a;
        const std::uint32_t rank = get_u32(f);
        std::size_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            a.dims.push_back(int(get_u32(f)));
            n *= std::size_t(a.dims.back());
        }
        a.data.resize(n);
        f.read(reinterpret_cast<char*>(a.data.data()), std::streamsize(n * 8));
        BEVA_CHECK(f.good(), "truncated checkpoint: " + path + " at array " + name);
        arrays.emplace(std::move(name), std::move(a));
    }
    return arrays;
}

} // namespace

CheckpointInfo load_checkpoint(const std::string& path,
                               const std::vector<CheckpointSection>& sections, AdamW* opt) {
    std::ifstream f(path, std::ios::binary);
    CheckpointInfo info;
    auto arrays = read_all_arrays(f, path, info);
    for (const auto& sec : sections)
        for (auto& p : sec.set->items) {
            const std::string key = sec.prefix + "/" + p.name;
            auto it = arrays.find(key);
            BEVA_CHECK(it != arrays.end(), "checkpoint " + path + " missing array " + key);
            BEVA_CHECK(it->second.dims == p.value.dims(),
                       "checkpoint " + path + " shape mismatch for " + key);
            std::copy(it->second.data.begin(), it->second.data.end(), p.value.data());
        }
    if (opt) {
        auto step_it = arrays.find("opt.t");
        if (step_it != arrays.end()) {
            bool complete = true;
            std::size_t k = 0;
            for (ParamSet* s : opt->sets)
                for (auto& p : s->items) {
                    std::string prefix;
                    for (const auto& sec : sections)
                        if (sec.set == s) prefix = sec.prefix;
                    auto mi = arrays.find("opt.m/" + prefix + "/" + p.name);
                    auto vi = arrays.find("opt.v/" + prefix + "/" + p.name);
                    if (mi == arrays.end() || vi == arrays.end() ||
                        mi->second.dims != p.value.dims() || vi->second.dims != p.value.dims()) {
                        complete = false;
                        break;
                    }
                    std::copy(mi->second.data.begin(), mi->second.data.end(), opt->m[k].data());
                    std::copy(vi->second.data.begin(), vi->second.data.end(), opt->v[k].data());
                    ++k;
                }
            if (complete) {
                opt->t = std::int64_t(step_it->second.data[0]);
                info.had_optimizer_state = true;
            }
        }
    }
    return info;
}

CheckpointInfo peek_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    CheckpointInfo info;
    read_all_arrays(f, path, info);
    return info;
}

} // namespace bevadapt::perception
