#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cts/io.hpp"
#include "cts/tensor.hpp"

namespace cts {

/// Ordered collection of named learnable tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  ParamStore clone() const;

  io::NamedTensors to_named() const { return entries_; }
  static ParamStore from_named(const io::NamedTensors& named, bool requires_grad = true);

 private:
  io::NamedTensors entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// SGD with heavy-ball momentum and decoupled weight decay on rank >= 2 tensors.
class Sgd {
 public:
  explicit Sgd(SgdConfig config) : config_(config) {}

  void step(ParamStore& params);
  void step(ParamStore& params, double lr);

 private:
  SgdConfig config_;
  std::unordered_map<std::string, std::vector<double>> velocity_;
};

}  // namespace cts
