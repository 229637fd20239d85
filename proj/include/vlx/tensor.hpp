#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vlx/errors.hpp"

namespace vlx {

namespace detail {
struct TensorData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until a backward pass touches it
};
}  // namespace detail

// Dense rank-2 float64 tensor. Cheap handle with shared storage; scalars are
// 1x1. Values are validated finite at construction, and after every op in
// debug builds.
class Tensor {
  public:
    Tensor() : d_(nullptr) {}

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, double value,
                       bool requires_grad = false);
    static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    std::size_t rows() const { return d_->rows; }
    std::size_t cols() const { return d_->cols; }
    std::size_t numel() const { return d_->rows * d_->cols; }
    bool requires_grad() const { return d_->requires_grad; }

    const std::vector<double>& data() const { return d_->values; }
    double at(std::size_t r, std::size_t c) const { return d_->values[r * d_->cols + c]; }
    double item() const;

    // Gradient from the most recent backward pass; zeros if the tensor was
    // not reached. Shape matches the tensor.
    std::vector<double> grad() const;

    // Direct storage access for optimizer updates and input construction.
    // Never call while a tape referencing this tensor is still alive.
    std::vector<double>& mutable_data() { return d_->values; }

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  private:
    friend class Tape;
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<detail::TensorData> d_;
};

// Reverse-mode tape. Freshly built per forward pass; operations record their
// inputs, output and a local-gradient closure, in execution order. backward()
// replays the closures in exact reverse order. Single-threaded by contract:
// parallel callers each build their own tape.
class Tape {
  public:
    enum Mode { kRecord, kNoGrad };
    explicit Tape(Mode mode = kRecord) : recording_(mode == kRecord) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // a[m,k] * b[k,n] -> [m,n]
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);

    // Binary elementwise with broadcasting limited to scalar-with-tensor and
    // row-vector-with-matrix.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);

    Tensor scale(const Tensor& a, double c);
    Tensor gelu(const Tensor& a);  // tanh approximation, see gelu_value()
    Tensor relu(const Tensor& a);
    Tensor l2_normalize_rows(const Tensor& a);
    Tensor mean_pool_rows(const Tensor& a);  // [n,d] -> [1,d]
    Tensor sum(const Tensor& a);             // -> scalar
    Tensor softmax_rows(const Tensor& a);
    Tensor log_softmax_rows(const Tensor& a);

    // out[i] = a.flat[indices[i]]; backward scatter-adds. Serves patch
    // extraction, token-embedding lookup and diagonal picks.
    Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices,
                  std::size_t out_rows, std::size_t out_cols);

    Tensor concat_rows(const std::vector<Tensor>& parts);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    // requires_grad tensor reachable from loss. Gradients of tensors on this
    // tape are reset first, so each backward reports exactly d(loss)/d(x).
    void backward(const Tensor& loss);

    std::size_t num_entries() const { return entries_.size(); }
    bool recording() const { return recording_; }

  private:
    struct Entry {
        std::vector<std::shared_ptr<detail::TensorData>> inputs;
        std::shared_ptr<detail::TensorData> output;
        std::function<void()> backward;
    };

    enum class BinaryOp { Add, Sub, Mul };
    Tensor binary_op(const Tensor& a, const Tensor& b, BinaryOp op);
    Tensor make_output(std::size_t rows, std::size_t cols, std::vector<double> values,
                       const std::vector<Tensor>& inputs, std::function<void()> backward_fn);

    std::vector<Entry> entries_;
    bool recording_;
};

// The exact forward formula the analytic derivative in Tape::gelu matches:
// 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace vlx
