#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eamri/tensor.hpp"

namespace eamri {

// Named learnable tensor with a paired gradient accumulator.
struct Parameter {
  std::string name;
  RealTensor value;
  RealTensor grad;
};

// Ordered collection of parameters; iteration order is registration order,
// which fixes checkpoint layout and Adam update order.
class ParamStore {
 public:
  int add(const std::string& name, RealTensor init) {
    require(by_name_.find(name) == by_name_.end(), "duplicate parameter name: " + name);
    int id = static_cast<int>(params_.size());
    RealTensor g = RealTensor::zeros(init.shape);
    params_.push_back(Parameter{name, std::move(init), std::move(g)});
    by_name_.emplace(name, id);
    return id;
  }

  Parameter& at(int id) { return params_[static_cast<size_t>(id)]; }
  const Parameter& at(int id) const { return params_[static_cast<size_t>(id)]; }

  int find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
  }

  int size() const { return static_cast<int>(params_.size()); }

  size_t total_parameters() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_)
      std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> by_name_;
};

// Handle to a value on a Trace.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Recorded computation: a value store plus an ordered list of VJP closures.
// Single-writer; one forward pass per Trace, one backward sweep.
class Trace {
 public:
  Trace() = default;
  Trace(const Trace&) = delete;
  Trace& operator=(const Trace&) = delete;

  // ---- value construction -------------------------------------------------

  Var input(RealTensor v) { return push(std::move(v.shape), std::move(v.data), false); }

  Var input(ComplexTensor v) { return push(std::move(v.shape), std::move(v.data), true); }

  // Learnable leaf: copies the parameter's current value in and registers a
  // record that pushes the slot gradient back into the parameter on
  // accumulate_param_grads().
  Var leaf(ParamStore& store, int pid) {
    const Parameter& p = store.at(pid);
    Var v = push(p.value.shape, p.value.data, false);
    leaves_.push_back(Leaf{&store, pid, v});
    return v;
  }

  // ---- access --------------------------------------------------------------

  bool is_complex(Var v) const { return slot(v).complex; }
  const std::vector<int>& shape(Var v) const { return slot(v).shape; }
  size_t logical_numel(Var v) const { return numel_of(slot(v).shape); }

  const std::vector<double>& data(Var v) const { return slot(v).value; }
  std::vector<double>& mutable_data(Var v) { return slot(v).value; }

  RealTensor real(Var v) const {
    require_shape(!slot(v).complex, "expected a real tensor");
    return RealTensor(slot(v).shape, slot(v).value);
  }
  ComplexTensor complex(Var v) const {
    require_shape(slot(v).complex, "expected a complex tensor");
    return ComplexTensor(slot(v).shape, slot(v).value);
  }

  // Gradient buffer, allocated on first touch. Same layout as the value.
  std::vector<double>& grad(Var v) {
    Slot& s = slot(v);
    if (!s.has_grad) {
      s.grad.assign(s.value.size(), 0.0);
      s.has_grad = true;
    }
    return s.grad;
  }
  bool has_grad(Var v) const { return slot(v).has_grad; }

  RealTensor grad_real(Var v) {
    require_shape(!slot(v).complex, "expected a real tensor");
    return RealTensor(slot(v).shape, grad(v));
  }
  ComplexTensor grad_complex(Var v) {
    require_shape(slot(v).complex, "expected a complex tensor");
    return ComplexTensor(slot(v).shape, grad(v));
  }

  // ---- op recording ---------------------------------------------------------

  Var make_value(std::vector<int> shape, std::vector<double> data, bool complex) {
    return push(std::move(shape), std::move(data), complex);
  }

  void record(std::function<void()> vjp) { records_.push_back(std::move(vjp)); }

  // ---- reverse sweep --------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and replays every record once, in reverse
  // execution order. By default also pushes leaf gradients into their
  // ParamStore; pass accumulate=false to defer (used for ordered merges
  // across concurrently processed samples).
  void backward(Var loss, bool accumulate = true) {
    require(loss.valid() && !slot(loss).complex && logical_numel(loss) == 1,
            "backward: loss must be a real scalar");
    grad(loss)[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    if (accumulate) accumulate_param_grads(1.0);
  }

  // Adds scale * d(loss)/d(leaf) into each bound parameter's grad, in leaf
  // registration order.
  void accumulate_param_grads(double scale) {
    for (const Leaf& l : leaves_) {
      Slot& s = slot(l.var);
      if (!s.has_grad) continue;
      auto& g = l.store->at(l.pid).grad.data;
      for (size_t i = 0; i < g.size(); ++i) g[i] += scale * s.grad[i];
    }
  }

  size_t num_records() const { return records_.size(); }

 private:
  struct Slot {
    std::vector<int> shape;
    std::vector<double> value;  // complex: interleaved (re, im)
    std::vector<double> grad;
    bool complex = false;
    bool has_grad = false;
  };
  struct Leaf {
    ParamStore* store;
    int pid;
    Var var;
  };

  Var push(std::vector<int> shape, std::vector<double> data, bool complex) {
    size_t expect = numel_of(shape) * (complex ? 2 : 1);
    require_shape(data.size() == expect, "trace value length mismatch for shape " + shape_str(shape));
    Slot s;
    s.shape = std::move(shape);
    s.value = std::move(data);
    s.complex = complex;
    slots_.push_back(std::move(s));
    return Var{static_cast<int>(slots_.size() - 1)};
  }

  Slot& slot(Var v) { return slots_[static_cast<size_t>(v.id)]; }
  const Slot& slot(Var v) const { return slots_[static_cast<size_t>(v.id)]; }

  std::vector<Slot> slots_;
  std::vector<std::function<void()>> records_;
  std::vector<Leaf> leaves_;
};

}  // namespace eamri
