#include "cts/params.hpp"

#include "cts/errors.hpp"

namespace cts {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw UsageError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter " + name);
  return entries_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

ParamStore ParamStore::from_named(const io::NamedTensors& named, bool requires_grad) {
  ParamStore out;
  for (const auto& [name, t] : named) {
    Tensor copy = t.clone();
    copy.set_requires_grad(requires_grad);
    out.add(name, std::move(copy));
  }
  return out;
}

void Sgd::step(ParamStore& params) { step(params, config_.lr); }

void Sgd::step(ParamStore& params, double lr) {
  for (auto& [name, t] : params) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    auto& vel = velocity_[name];
    if (vel.size() != t.numel()) vel.assign(t.numel(), 0.0);
    auto w = t.mutable_data();
    auto g = t.grad();
    const bool decay = t.rank() >= 2 && config_.weight_decay > 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = config_.momentum * vel[i] + g[i];
      w[i] -= lr * vel[i];
      if (decay) w[i] -= lr * config_.weight_decay * w[i];
    }
  }
}

}  // namespace cts
