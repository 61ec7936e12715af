#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "percept_loop/core/autodiff.hpp"

namespace percept_loop {

template <typename T>
struct NamedParam {
    std::string name;
    ad::Var<T> var;
};

/// Ordered collection of learnable tensors. Order is the serialization order.
template <typename T>
class ParamStore {
public:
    ad::Var<T> add(std::string name, Tensor<T> value)
    {
        for (const auto& p : params_)
            if (p.name == name)
                throw std::logic_error("ParamStore: duplicate parameter " + name);
        auto var = ad::Var<T>::leaf(std::move(value), true);
        params_.push_back({std::move(name), var});
        return var;
    }

    const ad::Var<T>& get(const std::string& name) const
    {
        for (const auto& p : params_)
            if (p.name == name)
                return p.var;
        throw std::out_of_range("ParamStore: no parameter named " + name);
    }

    bool contains(const std::string& name) const
    {
        for (const auto& p : params_)
            if (p.name == name)
                return true;
        return false;
    }

    std::vector<NamedParam<T>>& entries() { return params_; }
    const std::vector<NamedParam<T>>& entries() const { return params_; }

    std::size_t scalar_count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_)
            n += p.var.value().size();
        return n;
    }

    void set_trainable(bool on)
    {
        for (auto& p : params_)
            p.var.set_requires_grad(on);
    }

    void zero_grad()
    {
        for (auto& p : params_)
            p.var.zero_grad();
    }

    std::vector<T> flatten() const
    {
        std::vector<T> out;
        out.reserve(scalar_count());
        for (const auto& p : params_)
            out.insert(out.end(), p.var.value().data().begin(), p.var.value().data().end());
        return out;
    }

    /// Deep copy; the copy's leaves are independent nodes.
    ParamStore clone() const
    {
        ParamStore out;
        for (const auto& p : params_) {
            auto var = out.add(p.name, p.var.value());
            var.set_requires_grad(p.var.requires_grad());
        }
        return out;
    }

    template <typename U>
    ParamStore<U> cast() const
    {
        ParamStore<U> out;
        for (const auto& p : params_)
            out.add(p.name, p.var.value().template cast<U>());
        return out;
    }

private:
    std::vector<NamedParam<T>> params_;
};

/// Fan-in scaled uniform initialisation in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename T>
Tensor<T> fan_in_uniform(int rows, int fan_in, std::mt19937_64& rng)
{
    Tensor<T> t(rows, fan_in, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data())
        v = static_cast<T>(dist(rng));
    return t;
}

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimiser bound to the trainable entries of a ParamStore.
template <typename T>
class Adam {
public:
    explicit Adam(ParamStore<T>& store, AdamOptions options = {}) : store_(&store), options_(options)
    {
        for (const auto& p : store.entries()) {
            m_.emplace_back(p.var.value().size(), 0.0);
            v_.emplace_back(p.var.value().size(), 0.0);
        }
    }

    void step(double lr)
    {
        ++t_;
        const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
        auto& entries = store_->entries();
        for (std::size_t k = 0; k < entries.size(); ++k) {
            auto& var = entries[k].var;
            if (!var.requires_grad() || var.grad().empty())
                continue;
            auto& value = var.mutable_value();
            const auto& grad = var.grad();
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = static_cast<double>(grad[i]);
                m_[k][i] = options_.beta1 * m_[k][i] + (1.0 - options_.beta1) * g;
                v_[k][i] = options_.beta2 * v_[k][i] + (1.0 - options_.beta2) * g * g;
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                value[i] = static_cast<T>(static_cast<double>(value[i]) - lr * mhat / (std::sqrt(vhat) + options_.eps));
            }
        }
    }

    long long steps() const { return t_; }

private:
    ParamStore<T>* store_;
    AdamOptions options_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long long t_ = 0;
};

} // namespace percept_loop
