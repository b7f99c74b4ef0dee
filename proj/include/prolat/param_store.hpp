#pragma once

#include <cmath>
#include <map>
#include <string>

#include "prolat/bytes.hpp"
#include "prolat/matrix.hpp"

namespace prolat {

// One learnable tensor with its gradient accumulator and Adam moments.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;

  explicit Param(int rows, int cols)
      : value(rows, cols), grad(rows, cols), m(rows, cols), v(rows, cols) {}
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named parameter set. std::map keeps lexicographic order, which the
// checkpoint format requires, and node stability lets layers hold Param*.
class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols) {
    auto [it, inserted] = params_.try_emplace(name, rows, cols);
    if (!inserted) throw ConfigError("duplicate parameter name: " + name);
    return it->second;
  }

  Param& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Param>& all() { return params_; }
  const std::map<std::string, Param>& all() const { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
  }

  long step() const { return step_; }

  // Standard Adam with bias correction; clears gradients afterwards.
  void adam_step(const AdamConfig& cfg) {
    for (auto& [name, p] : params_) {
      for (double g : p.grad.data)
        if (!std::isfinite(g))
          throw TrainingError("non-finite gradient in " + name + " at step " +
                              std::to_string(step_ + 1));
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params_) {
      double* w = p.value.data.data();
      double* g = p.grad.data.data();
      double* m = p.m.data.data();
      double* v = p.v.data.data();
      const std::size_t n = p.value.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
      p.grad.fill(0.0);
    }
  }

  // Checkpoint format: magic "PSC1", then per parameter in lexicographic
  // name order: u32 name length, name bytes, u32 rows, u32 cols, row-major
  // f64 little-endian values. Optimizer state is not persisted.
  std::string serialize() const {
    std::string out = "PSC1";
    for (const auto& [name, p] : params_) {
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.append(name);
      put_u32(out, static_cast<std::uint32_t>(p.value.rows));
      put_u32(out, static_cast<std::uint32_t>(p.value.cols));
      for (double v : p.value.data) put_f64(out, v);
    }
    return out;
  }

  // Parses a PSC1 blob. Parameters must already exist with matching shapes
  // (the model defines the architecture; the checkpoint only fills values).
  void deserialize(const std::string& bytes) {
    ByteReader r(bytes, "PSC1 checkpoint");
    if (r.bytes(4) != "PSC1") throw SerializationError("bad checkpoint magic");
    std::size_t seen = 0;
    while (!r.at_end()) {
      const std::uint32_t name_len = r.u32();
      const std::string name = r.bytes(name_len);
      const int rows = static_cast<int>(r.u32());
      const int cols = static_cast<int>(r.u32());
      Param& p = get(name);
      if (p.value.rows != rows || p.value.cols != cols)
        throw SerializationError("shape mismatch for parameter " + name);
      for (double& v : p.value.data) v = r.f64();
      ++seen;
    }
    if (seen != params_.size())
      throw SerializationError("checkpoint parameter count mismatch");
  }

  void save(const std::string& path) const { write_file(path, serialize()); }

  void load(const std::string& path) { deserialize(read_file(path)); }

 private:
  std::map<std::string, Param> params_;
  long step_ = 0;
};

}  // namespace prolat
