#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace stimpute {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles (rank <= 4) with an optional gradient
/// buffer. A Tensor is a cheap handle: copies alias the same storage, which
/// is what lets tape closures and parameter lists share one buffer.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int axis) const { return impl_->shape[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return impl_->data.size(); }

    // A Tensor is a handle: const applies to the handle, not the storage,
    // exactly as with shared_ptr. Backward rules mutate grads through
    // by-value captures, which C++ makes const copies of.
    double* data() const { return impl_->data.data(); }
    std::vector<double>& data_vec() const { return impl_->data; }

    /// Value of a single-element tensor.
    double value() const;

    /// Element access by multi-index (bounds-unchecked beyond rank).
    double at(std::initializer_list<int> index) const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) const;

    /// True when this tensor participates in gradient flow on the active
    /// tape (leaf with requires_grad, or derived from such a tensor).
    bool tracked() const { return impl_ && impl_->tracked; }
    void mark_tracked() const;

    double* grad() const { return impl_->grad.data(); }
    std::vector<double>& grad_vec() const { return impl_->grad; }
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    void zero_grad() const;

    bool all_finite() const;

    /// Identity of the underlying storage, for aliasing checks in tests.
    const void* id() const { return impl_.get(); }

private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty until tracked
        bool requires_grad = false;
        bool tracked = false;
    };

    std::shared_ptr<Impl> impl_;
};

/// A parameter (or any tensor) with a stable name, used for optimizer state,
/// checkpoints and gradient-check reports. The handle aliases the original.
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

/// Reverse-mode tape. Constructing a Tape installs it as the active tape for
/// the current thread (define-by-run); ops executed while it is active append
/// their backward rules. Destroying it restores the previous tape, so scopes
/// nest. One tape per forward/backward pass, rebuilt each step.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current();

    void record(std::function<void()> backward_step);
    std::size_t num_ops() const { return steps_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and replays recorded rules in reverse.
    /// Gradients accumulate additively into every tracked tensor reachable
    /// from the loss; tensors not on the path keep their (zero) gradient.
    void backward(Tensor& loss);

private:
    std::vector<std::function<void()>> steps_;
    Tape* previous_ = nullptr;
};

}  // namespace stimpute
