#include "stimpute/tensor.hpp"

#include <cmath>
#include <sstream>

#include "stimpute/error.hpp"

namespace stimpute {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

static void check_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4)
        throw DimensionError("tensor rank must be 1..4, got " + shape_str(shape));
    for (int d : shape)
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_str(shape));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_shape(shape);
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->data.assign(shape_numel(shape), 0.0);
    t.impl_->shape = std::move(shape);
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : t.impl_->data) v = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape);
    if (data.size() != shape_numel(shape))
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::value() const {
    if (size() != 1)
        throw ArgumentError("value() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> index) const {
    const Shape& s = impl_->shape;
    if (index.size() != s.size())
        throw ArgumentError("index rank mismatch for shape " + shape_str(s));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (int i : index) {
        if (i < 0 || i >= s[axis]) throw ArgumentError("index out of range");
        flat = flat * static_cast<std::size_t>(s[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return impl_->data[flat];
}

void Tensor::set_requires_grad(bool flag) const {
    impl_->requires_grad = flag;
    if (flag) mark_tracked();
}

void Tensor::mark_tracked() const {
    impl_->tracked = true;
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::zero_grad() const {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::current() { return g_active_tape; }

void Tape::record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
}

void Tape::backward(Tensor& loss) {
    if (loss.size() != 1)
        throw ArgumentError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.tracked()) return;  // loss does not depend on any tracked tensor
    loss.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace stimpute
