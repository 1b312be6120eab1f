#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace indigo {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense float32 tensor with value semantics. Storage is shared between
// copies; the contract is that data is never mutated once a tensor has been
// handed to an operation (raw() exists for filling freshly allocated
// tensors). Image tensors use N,C,H,W order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor alloc(Shape shape);  // uninitialized
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float v);
  static Tensor from_data(Shape shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float v);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return numel_; }

  const float* data() const { return storage_->data(); }
  float* raw() { return storage_->data(); }
  float at(int64_t i) const { return (*storage_)[static_cast<size_t>(i)]; }
  float item() const;

  uint64_t id() const { return id_; }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool b) {
    requires_grad_ = b;
    tracked_ = b;
  }
  // True when gradients should flow to/through this tensor on the active tape.
  bool tracked() const { return tracked_; }
  void mark_tracked() { tracked_ = true; }

  // Same storage, fresh identity, no gradient flow.
  Tensor detach() const;

  // Throws if any element is NaN/Inf; `what` names the producing operation.
  void ensure_finite(const char* what) const;

 private:
  std::shared_ptr<std::vector<float>> storage_;
  Shape shape_;
  int64_t numel_ = 0;
  uint64_t id_ = 0;
  bool requires_grad_ = false;
  bool tracked_ = false;
};

// Reverse-mode tape. Nodes are appended in execution order (which is a
// topological order by construction) and the backward pass walks them once,
// in reverse. Gradient buffers are keyed by tensor identity.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation on the current thread. Scopes may nest (inner tape wins).
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  using BackwardFn = std::function<void(Tape&)>;
  void add_node(const Tensor& out, BackwardFn fn);

  // Accumulation buffer for a tensor, created zeroed on first use.
  std::vector<float>& grad_buf(const Tensor& t);
  const std::vector<float>* find_grad(uint64_t id) const;

  // Seeds d(loss)/d(loss)=1 and runs all recorded nodes in reverse order.
  // Calling twice without reset() is an error.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  Tensor grad(const Tensor& t) const;          // error if absent
  Tensor grad_or_zero(const Tensor& t) const;  // zeros if absent
  void reset();

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    uint64_t out_id;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::unordered_map<uint64_t, std::vector<float>> grads_;
  std::unordered_map<uint64_t, int64_t> sizes_;
  bool consumed_ = false;
};

// True when a tape is active and gradients should flow from any input.
bool recording(std::initializer_list<const Tensor*> inputs);

}  // namespace indigo
