#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stitch/errors.hpp"

namespace stitch::model {

// All parameters live in one flat buffer. Gradients, Adam moments and the
// checkpoint payload mirror it index-for-index, and finite-difference
// probes perturb single flat entries.
class ParameterStore {
  public:
    struct Entry {
        std::string name;
        std::vector<int> shape;
        size_t offset = 0;
        size_t size = 0;
    };

    // Registers a tensor; returns its entry index. Call order fixes the
    // layout (and the checkpoint payload order).
    size_t add(const std::string& name, std::vector<int> shape) {
        if (index_.contains(name)) throw ConfigError("parameter registered twice: " + name);
        size_t sz = 1;
        for (int d : shape) sz *= static_cast<size_t>(d);
        Entry e{name, std::move(shape), values_.size(), sz};
        index_[name] = entries_.size();
        entries_.push_back(e);
        values_.resize(values_.size() + sz, 0.0);
        return entries_.size() - 1;
    }

    std::span<double> view(const std::string& name) {
        const Entry& e = entry(name);
        return {values_.data() + e.offset, e.size};
    }
    std::span<const double> view(const std::string& name) const {
        const Entry& e = entry(name);
        return {values_.data() + e.offset, e.size};
    }
    double* ptr(const std::string& name) { return values_.data() + entry(name).offset; }
    const double* ptr(const std::string& name) const { return values_.data() + entry(name).offset; }

    const Entry& entry(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second];
    }

    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return values_.size(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

  private:
    std::vector<double> values_;
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace stitch::model
