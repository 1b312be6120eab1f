#include "indigo/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace indigo {

namespace {
std::atomic<uint64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::runtime_error("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::alloc(Shape shape) {
  Tensor t;
  t.numel_ = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.storage_ = std::make_shared<std::vector<float>>(static_cast<size_t>(t.numel_));
  t.id_ = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return t;
}

Tensor Tensor::zeros(Shape shape) { return alloc(std::move(shape)); }

Tensor Tensor::full(Shape shape, float v) {
  Tensor t = alloc(std::move(shape));
  std::fill(t.storage_->begin(), t.storage_->end(), v);
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  Tensor t;
  t.numel_ = shape_numel(shape);
  if (t.numel_ != static_cast<int64_t>(data.size()))
    throw std::runtime_error("from_data: shape " + shape_str(shape) + " needs " +
                             std::to_string(t.numel_) + " values, got " +
                             std::to_string(data.size()));
  t.shape_ = std::move(shape);
  t.storage_ = std::make_shared<std::vector<float>>(std::move(data));
  t.id_ = g_next_id.fetch_add(1, std::memory_order_relaxed);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(float v) { return from_data({1}, {v}); }

float Tensor::item() const {
  if (numel_ != 1) throw std::runtime_error("item(): tensor has " + std::to_string(numel_) + " elements");
  return (*storage_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.storage_ = storage_;
  t.shape_ = shape_;
  t.numel_ = numel_;
  t.id_ = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return t;
}

void Tensor::ensure_finite(const char* what) const {
  const float* p = data();
  for (int64_t i = 0; i < numel_; ++i) {
    if (!std::isfinite(p[i]))
      throw std::runtime_error(std::string(what) + ": non-finite value at index " +
                               std::to_string(i));
  }
}

Tape::Scope::Scope(Tape& t) {
  prev_ = g_active_tape;
  g_active_tape = &t;
}

Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::add_node(const Tensor& out, BackwardFn fn) {
  nodes_.push_back({out.id(), std::move(fn)});
}

std::vector<float>& Tape::grad_buf(const Tensor& t) {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    sizes_[t.id()] = t.numel();
    it = grads_.emplace(t.id(), std::vector<float>(static_cast<size_t>(t.numel()), 0.f)).first;
  }
  return it->second;
}

const std::vector<float>* Tape::find_grad(uint64_t id) const {
  auto it = grads_.find(id);
  return it == grads_.end() ? nullptr : &it->second;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_)
    throw std::runtime_error("Tape::backward called twice without reset()");
  if (loss.numel() != 1) throw std::runtime_error("Tape::backward: loss must be scalar");
  if (nodes_.empty()) throw std::runtime_error("Tape::backward: empty tape");
  consumed_ = true;
  grad_buf(loss)[0] = 1.f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (grads_.find(it->out_id) != grads_.end()) it->fn(*this);
  }
}

bool Tape::has_grad(const Tensor& t) const { return grads_.count(t.id()) != 0; }

Tensor Tape::grad(const Tensor& t) const {
  const auto* g = find_grad(t.id());
  if (!g) throw std::runtime_error("Tape::grad: no gradient recorded for tensor");
  return Tensor::from_data(t.shape(), *g);
}

Tensor Tape::grad_or_zero(const Tensor& t) const {
  const auto* g = find_grad(t.id());
  if (!g) return Tensor::zeros(t.shape());
  return Tensor::from_data(t.shape(), *g);
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  sizes_.clear();
  consumed_ = false;
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->tracked()) return true;
  return false;
}

}  // namespace indigo
