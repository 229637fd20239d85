#include "vlx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vlx {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << "(" << r << "x" << c << ")";
    return os.str();
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::Contract, std::string(what) + ": non-finite value");
        }
    }
}

// c += a[m,k] * b[k,n]
void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// c[m,k] += a[m,n] * b[k,n]^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
               std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* brow = b + kk * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
            crow[kk] += s;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            double* crow = c + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

constexpr double kNormEps = 1e-12;

using DataPtr = std::shared_ptr<detail::TensorData>;

// How one operand of a binary op maps output positions to its own storage.
enum class Bcast { Full, Scalar, Row };

Bcast bcast_kind(std::size_t r, std::size_t c, std::size_t out_r, std::size_t out_c) {
    if (r == out_r && c == out_c) return Bcast::Full;
    if (r == 1 && c == 1) return Bcast::Scalar;
    if (r == 1 && c == out_c) return Bcast::Row;
    throw Error(ErrorCode::Dimension, "broadcast: operand " + shape_str(r, c) +
                                          " incompatible with result " + shape_str(out_r, out_c));
}

std::size_t bcast_index(Bcast k, std::size_t i, std::size_t out_c) {
    switch (k) {
        case Bcast::Full: return i;
        case Bcast::Scalar: return 0;
        case Bcast::Row: return i % out_c;
    }
    return 0;
}

}  // namespace

double gelu_value(double x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    const double u = k * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    constexpr double k = 0.7978845608028654;
    const double u = k * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return from_data(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
    return from_data(rows, cols, std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::from_data(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad) {
    if (rows * cols != values.size()) {
        throw Error(ErrorCode::Dimension,
                    "tensor: shape " + shape_str(rows, cols) + " needs " +
                        std::to_string(rows * cols) + " values, got " +
                        std::to_string(values.size()));
    }
    check_finite(values, "tensor construction");
    auto d = std::make_shared<detail::TensorData>();
    d->rows = rows;
    d->cols = cols;
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(1, 1, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw Error(ErrorCode::Contract,
                    "item: tensor is " + shape_str(rows(), cols()) + ", not scalar");
    }
    return d_->values[0];
}

std::vector<double> Tensor::grad() const {
    if (d_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return d_->grad;
}

Tensor Tape::make_output(std::size_t rows, std::size_t cols, std::vector<double> values,
                         const std::vector<Tensor>& inputs, std::function<void()> backward_fn) {
#ifndef NDEBUG
    check_finite(values, "op output");
#endif
    auto d = std::make_shared<detail::TensorData>();
    d->rows = rows;
    d->cols = cols;
    d->values = std::move(values);
    d->requires_grad = false;
    for (const auto& in : inputs) {
        if (in.requires_grad()) d->requires_grad = true;
    }
    Tensor out(d);
    if (recording_ && d->requires_grad) {
        Entry e;
        for (const auto& in : inputs) e.inputs.push_back(in.d_);
        e.output = d;
        e.backward = std::move(backward_fn);
        entries_.push_back(std::move(e));
    }
    return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw Error(ErrorCode::Dimension, "matmul: inner dimensions disagree: " +
                                              shape_str(m, k) + " vs " + shape_str(k2, n));
    }
    std::vector<double> out(m * n, 0.0);
    mm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);

    DataPtr ad = a.d_, bd = b.d_;
    Tensor result = make_output(m, n, std::move(out), {a, b}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, bd, m, k, n]() {
            const double* g = od->grad.data();
            if (ad->requires_grad) mm_nt_acc(g, bd->values.data(), ad->grad.data(), m, n, k);
            if (bd->requires_grad) mm_tn_acc(ad->values.data(), g, bd->grad.data(), m, k, n);
        };
    }
    return result;
}

Tensor Tape::transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto& av = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];

    DataPtr ad = a.d_;
    Tensor result = make_output(n, m, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, m, n]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            double* ga = ad->grad.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        };
    }
    return result;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryOp::Add); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryOp::Sub); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryOp::Mul); }

Tensor Tape::binary_op(const Tensor& a, const Tensor& b, BinaryOp op) {
    std::size_t out_r, out_c;
    if (a.rows() == b.rows() && a.cols() == b.cols()) {
        out_r = a.rows();
        out_c = a.cols();
    } else if (a.numel() == 1) {
        out_r = b.rows();
        out_c = b.cols();
    } else if (b.numel() == 1) {
        out_r = a.rows();
        out_c = a.cols();
    } else if (a.rows() == 1 && a.cols() == b.cols()) {
        out_r = b.rows();
        out_c = b.cols();
    } else if (b.rows() == 1 && b.cols() == a.cols()) {
        out_r = a.rows();
        out_c = a.cols();
    } else {
        throw Error(ErrorCode::Dimension, "elementwise: shapes " +
                                              shape_str(a.rows(), a.cols()) + " and " +
                                              shape_str(b.rows(), b.cols()) + " do not broadcast");
    }

    const Bcast ka = bcast_kind(a.rows(), a.cols(), out_r, out_c);
    const Bcast kb = bcast_kind(b.rows(), b.cols(), out_r, out_c);
    const std::size_t total = out_r * out_c;
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double x = av[bcast_index(ka, i, out_c)];
        const double y = bv[bcast_index(kb, i, out_c)];
        switch (op) {
            case BinaryOp::Add: out[i] = x + y; break;
            case BinaryOp::Sub: out[i] = x - y; break;
            case BinaryOp::Mul: out[i] = x * y; break;
        }
    }

    DataPtr ad = a.d_, bd = b.d_;
    Tensor result = make_output(out_r, out_c, std::move(out), {a, b}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, bd, ka, kb, op, total, out_c]() {
            const double* g = od->grad.data();
            for (std::size_t i = 0; i < total; ++i) {
                const std::size_t ia = bcast_index(ka, i, out_c);
                const std::size_t ib = bcast_index(kb, i, out_c);
                if (ad->requires_grad) {
                    ad->grad[ia] += (op == BinaryOp::Mul) ? g[i] * bd->values[ib] : g[i];
                }
                if (bd->requires_grad) {
                    switch (op) {
                        case BinaryOp::Add: bd->grad[ib] += g[i]; break;
                        case BinaryOp::Sub: bd->grad[ib] -= g[i]; break;
                        case BinaryOp::Mul: bd->grad[ib] += g[i] * ad->values[ia]; break;
                    }
                }
            }
        };
    }
    return result;
}

Tensor Tape::scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw Error(ErrorCode::Contract, "scale: non-finite factor");
    const auto& av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;

    DataPtr ad = a.d_;
    Tensor result = make_output(a.rows(), a.cols(), std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, c]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            for (std::size_t i = 0; i < ad->grad.size(); ++i) ad->grad[i] += c * g[i];
        };
    }
    return result;
}

Tensor Tape::gelu(const Tensor& a) {
    const auto& av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = gelu_value(av[i]);

    DataPtr ad = a.d_;
    Tensor result = make_output(a.rows(), a.cols(), std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            for (std::size_t i = 0; i < ad->grad.size(); ++i) {
                ad->grad[i] += g[i] * gelu_derivative(ad->values[i]);
            }
        };
    }
    return result;
}

Tensor Tape::relu(const Tensor& a) {
    const auto& av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;

    DataPtr ad = a.d_;
    Tensor result = make_output(a.rows(), a.cols(), std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            for (std::size_t i = 0; i < ad->grad.size(); ++i) {
                if (ad->values[i] > 0.0) ad->grad[i] += g[i];
            }
        };
    }
    return result;
}

Tensor Tape::l2_normalize_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const auto& av = a.data();
    std::vector<double> out(m * n);
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += av[i * n + j] * av[i * n + j];
        const double norm = std::sqrt(s);
        if (norm < kNormEps) {
            throw Error(ErrorCode::Degenerate, "l2_normalize_rows: row " + std::to_string(i) +
                                                   " has near-zero norm (" +
                                                   std::to_string(norm) + ")");
        }
        norms[i] = norm;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / norm;
    }

    DataPtr ad = a.d_;
    Tensor result = make_output(m, n, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, norms, m, n]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            const double* y = od->values.data();
            for (std::size_t i = 0; i < m; ++i) {
                double gy = 0.0;
                for (std::size_t j = 0; j < n; ++j) gy += g[i * n + j] * y[i * n + j];
                for (std::size_t j = 0; j < n; ++j) {
                    ad->grad[i * n + j] += (g[i * n + j] - y[i * n + j] * gy) / norms[i];
                }
            }
        };
    }
    return result;
}

Tensor Tape::mean_pool_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const auto& av = a.data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
    for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);

    DataPtr ad = a.d_;
    Tensor result = make_output(1, n, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, m, n]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ad->grad[i * n + j] += g[j] * inv;
        };
    }
    return result;
}

Tensor Tape::sum(const Tensor& a) {
    const auto& av = a.data();
    double s = 0.0;
    for (double x : av) s += x;

    DataPtr ad = a.d_;
    Tensor result = make_output(1, 1, {s}, {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad]() {
            if (!ad->requires_grad) return;
            const double g = od->grad[0];
            for (std::size_t i = 0; i < ad->grad.size(); ++i) ad->grad[i] += g;
        };
    }
    return result;
}

Tensor Tape::softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const auto& av = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = av[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(av[i * n + j] - mx);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }

    DataPtr ad = a.d_;
    Tensor result = make_output(m, n, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, m, n]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            const double* y = od->values.data();
            for (std::size_t i = 0; i < m; ++i) {
                double gy = 0.0;
                for (std::size_t j = 0; j < n; ++j) gy += g[i * n + j] * y[i * n + j];
                for (std::size_t j = 0; j < n; ++j) {
                    ad->grad[i * n + j] += y[i * n + j] * (g[i * n + j] - gy);
                }
            }
        };
    }
    return result;
}

Tensor Tape::log_softmax_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const auto& av = a.data();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = av[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(av[i * n + j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] - lse;
    }

    DataPtr ad = a.d_;
    Tensor result = make_output(m, n, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, m, n]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            const double* y = od->values.data();  // log-probabilities
            for (std::size_t i = 0; i < m; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < n; ++j) gs += g[i * n + j];
                for (std::size_t j = 0; j < n; ++j) {
                    ad->grad[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * gs;
                }
            }
        };
    }
    return result;
}

Tensor Tape::gather(const Tensor& a, const std::vector<std::size_t>& indices,
                    std::size_t out_rows, std::size_t out_cols) {
    if (indices.size() != out_rows * out_cols) {
        throw Error(ErrorCode::Dimension, "gather: index count " + std::to_string(indices.size()) +
                                              " does not fill " + shape_str(out_rows, out_cols));
    }
    const auto& av = a.data();
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= av.size()) {
            throw Error(ErrorCode::Dimension,
                        "gather: index " + std::to_string(indices[i]) + " out of range for " +
                            std::to_string(av.size()) + " elements");
        }
        out[i] = av[indices[i]];
    }

    DataPtr ad = a.d_;
    Tensor result = make_output(out_rows, out_cols, std::move(out), {a}, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, ad, indices]() {
            if (!ad->requires_grad) return;
            const double* g = od->grad.data();
            for (std::size_t i = 0; i < indices.size(); ++i) ad->grad[indices[i]] += g[i];
        };
    }
    return result;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorCode::Contract, "concat_rows: no parts");
    const std::size_t n = parts[0].cols();
    std::size_t total_rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw Error(ErrorCode::Dimension, "concat_rows: column mismatch: " +
                                                  std::to_string(p.cols()) + " vs " +
                                                  std::to_string(n));
        }
        total_rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(total_rows * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

    std::vector<DataPtr> pds;
    pds.reserve(parts.size());
    for (const auto& p : parts) pds.push_back(p.d_);
    Tensor result = make_output(total_rows, n, std::move(out), parts, nullptr);
    if (recording_ && result.requires_grad()) {
        DataPtr od = result.d_;
        entries_.back().backward = [od, pds]() {
            const double* g = od->grad.data();
            std::size_t offset = 0;
            for (const auto& pd : pds) {
                const std::size_t count = pd->rows * pd->cols;
                if (pd->requires_grad) {
                    for (std::size_t i = 0; i < count; ++i) pd->grad[i] += g[offset + i];
                }
                offset += count;
            }
        };
    }
    return result;
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw Error(ErrorCode::Contract, "backward: loss must be scalar, got " +
                                             shape_str(loss.rows(), loss.cols()));
    }
    if (entries_.empty()) {
        throw Error(ErrorCode::Contract, "backward: tape is empty");
    }

    // Reset gradients of everything this tape touches, then seed the loss.
    std::unordered_set<detail::TensorData*> seen;
    for (auto& e : entries_) {
        for (auto& in : e.inputs) {
            if (in->requires_grad && seen.insert(in.get()).second) {
                in->grad.assign(in->rows * in->cols, 0.0);
            }
        }
        if (e.output->requires_grad && seen.insert(e.output.get()).second) {
            e.output->grad.assign(e.output->rows * e.output->cols, 0.0);
        }
    }
    if (!loss.requires_grad()) {
        throw Error(ErrorCode::Contract,
                    "backward: loss does not depend on any gradient-tracked tensor");
    }
    if (!seen.count(loss.d_.get())) {
        throw Error(ErrorCode::Contract, "backward: loss was not produced on this tape");
    }
    loss.d_->grad.assign(1, 1.0);

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->backward();
    }
}

}  // namespace vlx
