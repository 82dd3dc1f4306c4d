#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mud/nn/graph.hpp"
#include "mud/rng.hpp"

namespace mud::nn {

enum class Init { Zero, FanInUniform, Gaussian002 };

template <class S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
  };

  int add(const std::string& name, int rows, int cols, Init init, Rng& rng) {
    require(!index_.contains(name), ErrorKind::Usage, "duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.value.setZero(rows, cols);
    switch (init) {
      case Init::Zero:
        break;
      case Init::FanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        for (int c = 0; c < cols; ++c)
          for (int r = 0; r < rows; ++r)
            e.value(r, c) = static_cast<S>(rng.uniform(-bound, bound));
        break;
      }
      case Init::Gaussian002:
        for (int c = 0; c < cols; ++c)
          for (int r = 0; r < rows; ++r) e.value(r, c) = static_cast<S>(0.02 * rng.normal());
        break;
    }
    e.grad.setZero(rows, cols);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  int count() const { return static_cast<int>(entries_.size()); }
  Entry& at(int i) { return entries_[i]; }
  const Entry& at(int i) const { return entries_[i]; }
  int find(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::Usage, "unknown parameter: " + name);
    return it->second;
  }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += static_cast<size_t>(e.value.size());
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.setZero();
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.value.allFinite()) return false;
    return true;
  }

  template <class S2>
  void copy_values_from(const ParamStore<S2>& other) {
    require(count() == other.count(), ErrorKind::Shape, "copy_values_from: store mismatch");
    for (int i = 0; i < count(); ++i)
      entries_[i].value = other.at(i).value.template cast<S>();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

/// Per-graph binding of every parameter as a leaf node.
template <class S>
struct Binding {
  std::vector<typename Graph<S>::Id> ids;
  typename Graph<S>::Id operator[](int pidx) const { return ids[pidx]; }
};

template <class S>
Binding<S> bind(Graph<S>& g, const ParamStore<S>& store, bool needs_grad) {
  Binding<S> b;
  b.ids.reserve(store.count());
  for (int i = 0; i < store.count(); ++i) b.ids.push_back(g.leaf(&store.at(i).value, needs_grad));
  return b;
}

/// Adds each bound parameter's tape gradient into `sink` (one matrix per
/// parameter, zero-sized entries allocated on demand).
template <class S>
void harvest_grads(Graph<S>& g, const Binding<S>& b, const ParamStore<S>& store,
                   std::vector<Mat<S>>& sink) {
  if (sink.empty()) sink.resize(store.count());
  for (int i = 0; i < store.count(); ++i) {
    if (!g.has_grad(b.ids[i])) continue;
    if (sink[i].size() == 0)
      sink[i] = g.grad(b.ids[i]);
    else
      sink[i] += g.grad(b.ids[i]);
  }
}

// Adam / AdamW (decoupled weight decay). Table-driven defaults live in the
// training configs; this only implements the update rule.
template <class S>
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& store) {
    if (m_.empty()) {
      m_.resize(store.count());
      v_.resize(store.count());
      for (int i = 0; i < store.count(); ++i) {
        m_[i].setZero(store.at(i).value.rows(), store.at(i).value.cols());
        v_[i].setZero(store.at(i).value.rows(), store.at(i).value.cols());
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (int i = 0; i < store.count(); ++i) {
      auto& e = store.at(i);
      m_[i] = static_cast<S>(b1_) * m_[i] + static_cast<S>(1.0 - b1_) * e.grad;
      v_[i] = (static_cast<S>(b2_) * v_[i].array() +
               static_cast<S>(1.0 - b2_) * e.grad.array().square())
                  .matrix();
      auto mhat = m_[i].array() / static_cast<S>(bc1);
      auto vhat = v_[i].array() / static_cast<S>(bc2);
      e.value.array() -= static_cast<S>(lr_) * (mhat / (vhat.sqrt() + static_cast<S>(eps_)) +
                                                static_cast<S>(wd_) * e.value.array());
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace mud::nn
