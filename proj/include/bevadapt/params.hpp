#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bevadapt/tensor.hpp"

namespace bevadapt::perception {

struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named parameter collection. Order of registration is fixed, which gives a
// stable flat index over all scalars (used by EMA, the optimizer, checkpoints
// and finite-difference probing).
struct ParamSet {
    std::vector<ParamTensor> items;

    ParamTensor& add(const std::string& name, const std::vector<int>& dims) {
        items.push_back({name, Tensor(dims), Tensor(dims)});
        return items.back();
    }

    ParamTensor& at(const std::string& name) {
        for (auto& p : items)
            if (p.name == name) return p;
        throw ContractError("unknown parameter: " + name);
    }
    const ParamTensor& at(const std::string& name) const {
        for (const auto& p : items)
            if (p.name == name) return p;
        throw ContractError("unknown parameter: " + name);
    }

    void zero_grads() {
        for (auto& p : items) p.grad.zero();
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : items) n += p.value.size();
        return n;
    }

    double& scalar_at(std::size_t flat) {
        for (auto& p : items) {
            if (flat < p.value.size()) return p.value.data()[flat];
            flat -= p.value.size();
        }
        throw ContractError("flat parameter index out of range");
    }

    double grad_at(std::size_t flat) const {
        for (const auto& p : items) {
            if (flat < p.grad.size()) return p.grad.data()[flat];
            flat -= p.grad.size();
        }
        throw ContractError("flat parameter index out of range");
    }

    bool shapes_match(const ParamSet& o) const {
        if (items.size() != o.items.size()) return false;
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].name != o.items[i].name ||
                items[i].value.dims() != o.items[i].value.dims())
                return false;
        return true;
    }

    bool all_finite() const {
        for (const auto& p : items)
            if (!p.value.all_finite()) return false;
        return true;
    }
};

// Decoupled-weight-decay adaptive optimizer (decay fixed at zero here).
struct AdamW {
    double lr = 2e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;

    std::vector<ParamSet*> sets;
    std::vector<Tensor> m, v; // one pair per tensor across all sets
    std::int64_t t = 0;

    void attach(std::vector<ParamSet*> param_sets) {
        sets = std::move(param_sets);
        m.clear();
        v.clear();
        for (ParamSet* s : sets)
            for (auto& p : s->items) {
                m.emplace_back(p.value.dims());
                v.emplace_back(p.value.dims());
            }
        t = 0;
    }

    void step() {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, double(t));
        const double bc2 = 1.0 - std::pow(beta2, double(t));
        std::size_t k = 0;
        for (ParamSet* s : sets)
            for (auto& p : s->items) {
                double* w = p.value.data();
                const double* g = p.grad.data();
                double* mp = m[k].data();
                double* vp = v[k].data();
                const std::size_t n = p.value.size();
                for (std::size_t i = 0; i < n; ++i) {
                    mp[i] = beta1 * mp[i] + (1 - beta1) * g[i];
                    vp[i] = beta2 * vp[i] + (1 - beta2) * g[i] * g[i];
                    const double mhat = mp[i] / bc1;
                    const double vhat = vp[i] / bc2;
                    w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
                }
                ++k;
            }
    }
};

// Checkpoint container: named f64 arrays grouped by section prefix, plus a
// config hash and an iteration counter. Load rejects shape mismatches.
struct CheckpointSection {
    std::string prefix;
    ParamSet* set = nullptr;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointSection>& sections,
                     std::uint64_t config_hash, std::int64_t iteration,
                     const AdamW* opt = nullptr);

struct CheckpointInfo {
    std::uint64_t config_hash = 0;
    std::int64_t iteration = 0;
    bool had_optimizer_state = false;
};

// Every tensor of every requested section must be present in the file with a
// matching shape; extra arrays in the file are ignored. If opt is non-null
// and the file carries optimizer state for these sections, it is restored.
CheckpointInfo load_checkpoint(const std::string& path,
                               const std::vector<CheckpointSection>& sections,
                               AdamW* opt = nullptr);

CheckpointInfo peek_checkpoint(const std::string& path);

} // namespace bevadapt::perception
