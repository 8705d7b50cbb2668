#pragma once

#include <cblas.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace sgcn {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value when requires_grad
    bool requires_grad = false;
};

// Shared handle to a dense 64-bit row-major tensor. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto d = std::make_shared<TensorData>();
        size_t n = 1;
        for (int s : shape) {
            if (s <= 0) throw std::invalid_argument("tensor dim must be positive");
            n *= size_t(s);
        }
        d->shape = std::move(shape);
        d->value.assign(n, 0.0);
        if (requires_grad) {
            d->grad.assign(n, 0.0);
            d->requires_grad = true;
        }
        return Tensor(std::move(d));
    }

    static Tensor from(Shape shape, std::vector<double> vals, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        if (vals.size() != t.numel())
            throw std::invalid_argument("value count does not match shape");
        t.d_->value = std::move(vals);
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    // Accessors are shallow-const: a const Tensor is a fixed handle to mutable
    // storage, like shared_ptr itself. Backward closures rely on this.
    bool defined() const { return bool(d_); }
    const Shape& shape() const { return d_->shape; }
    int ndim() const { return int(d_->shape.size()); }
    int dim(int i) const { return d_->shape[size_t(i)]; }
    size_t numel() const { return d_->value.size(); }

    int rows() const { return d_->shape[0]; }
    int cols() const { return ndim() == 1 ? 1 : d_->shape[1]; }

    double* data() const { return d_->value.data(); }
    std::vector<double>& values() const { return d_->value; }

    bool requires_grad() const { return d_->requires_grad; }
    double* grad() const { return d_->grad.data(); }
    std::vector<double>& grad_values() const { return d_->grad; }

    void zero_grad() const {
        if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
    }

    double& at(int i, int j) const { return d_->value[size_t(i) * size_t(cols()) + size_t(j)]; }
    double& operator[](size_t i) const { return d_->value[i]; }

    bool same_storage(const Tensor& o) const { return d_ == o.d_; }

private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;
};

// Ordered record of backward closures; replayed in reverse by backward().
class Tape {
public:
    void record(std::function<void()> f) { ops_.push_back(std::move(f)); }
    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    void backward(Tensor loss) {
        if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        if (!loss.requires_grad())
            throw std::logic_error("backward: loss does not require grad");
        loss.grad()[0] += 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

inline void blas_single_thread() {
    static const bool once = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)once;
}

inline void dgemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                  int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    if (m == 0 || n == 0) return;
    blas_single_thread();
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline bool want_grad(const Tape* tape, std::initializer_list<Tensor> inputs) {
    if (!tape) return false;
    for (const auto& t : inputs)
        if (t.requires_grad()) return true;
    return false;
}

inline void require_2d(const Tensor& t, const char* who) {
    if (t.ndim() != 2) throw std::invalid_argument(std::string(who) + ": tensor must be 2-D");
}

}  // namespace detail

// ---- basic ops ----

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
        throw std::invalid_argument("matmul: inner dims " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    bool rg = detail::want_grad(tape, {a, b});
    Tensor out = Tensor::zeros({m, n}, rg);
    detail::dgemm(false, false, m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, out.data(), n);
    if (rg) {
        tape->record([a, b, out, m, k, n]() mutable {
            if (a.requires_grad())
                detail::dgemm(false, true, m, k, n, 1.0, out.grad(), n, b.data(), n, 1.0,
                              a.grad(), k);
            if (b.requires_grad())
                detail::dgemm(true, false, k, n, m, 1.0, a.data(), k, out.grad(), n, 1.0,
                              b.grad(), n);
        });
    }
    return out;
}

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    bool rg = detail::want_grad(tape, {a, b});
    Tensor out = Tensor::zeros(a.shape(), rg);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
    if (rg) {
        tape->record([a, b, out]() mutable {
            if (a.requires_grad())
                for (size_t i = 0; i < out.numel(); ++i) a.grad()[i] += out.grad()[i];
            if (b.requires_grad())
                for (size_t i = 0; i < out.numel(); ++i) b.grad()[i] += out.grad()[i];
        });
    }
    return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
    bool rg = detail::want_grad(tape, {a, b});
    Tensor out = Tensor::zeros(a.shape(), rg);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
    if (rg) {
        tape->record([a, b, out]() mutable {
            if (a.requires_grad())
                for (size_t i = 0; i < out.numel(); ++i) a.grad()[i] += out.grad()[i] * b[i];
            if (b.requires_grad())
                for (size_t i = 0; i < out.numel(); ++i) b.grad()[i] += out.grad()[i] * a[i];
        });
    }
    return out;
}

inline Tensor scale(Tape* tape, const Tensor& a, double c) {
    bool rg = detail::want_grad(tape, {a});
    Tensor out = Tensor::zeros(a.shape(), rg);
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * c;
    if (rg) {
        tape->record([a, out, c]() mutable {
            for (size_t i = 0; i < out.numel(); ++i) a.grad()[i] += out.grad()[i] * c;
        });
    }
    return out;
}

inline Tensor sum(Tape* tape, const Tensor& a) {
    bool rg = detail::want_grad(tape, {a});
    Tensor out = Tensor::zeros({1}, rg);
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a[i];
    out[0] = s;
    if (rg) {
        tape->record([a, out]() mutable {
            double g = out.grad()[0];
            for (size_t i = 0; i < a.numel(); ++i) a.grad()[i] += g;
        });
    }
    return out;
}

// broadcast bias over rows: out[i][j] = x[i][j] + b[j]
inline Tensor add_bias_cols(Tape* tape, const Tensor& x, const Tensor& b) {
    detail::require_2d(x, "add_bias_cols");
    if (b.ndim() != 1 || b.dim(0) != x.cols())
        throw std::invalid_argument("add_bias_cols: bias length must equal column count");
    int n = x.rows(), f = x.cols();
    bool rg = detail::want_grad(tape, {x, b});
    Tensor out = Tensor::zeros({n, f}, rg);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) out.at(i, j) = x.at(i, j) + b[size_t(j)];
    if (rg) {
        tape->record([x, b, out, n, f]() mutable {
            if (x.requires_grad())
                for (size_t i = 0; i < out.numel(); ++i) x.grad()[i] += out.grad()[i];
            if (b.requires_grad())
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < f; ++j)
                        b.grad()[j] += out.grad()[size_t(i) * size_t(f) + size_t(j)];
        });
    }
    return out;
}

inline Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_bias_cols(tape, matmul(tape, x, w), b);
}

enum class Activation { relu, selu };

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline Tensor activation(Tape* tape, Activation kind, const Tensor& x) {
    bool rg = detail::want_grad(tape, {x});
    Tensor out = Tensor::zeros(x.shape(), rg);
    if (kind == Activation::relu) {
        for (size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    } else {
        for (size_t i = 0; i < x.numel(); ++i)
            out[i] = x[i] > 0.0 ? kSeluLambda * x[i]
                                : kSeluLambda * kSeluAlpha * (std::exp(x[i]) - 1.0);
    }
    if (rg) {
        tape->record([x, out, kind]() mutable {
            if (kind == Activation::relu) {
                for (size_t i = 0; i < x.numel(); ++i)
                    if (x[i] > 0.0) x.grad()[i] += out.grad()[i];
            } else {
                for (size_t i = 0; i < x.numel(); ++i)
                    x.grad()[i] += out.grad()[i] * (x[i] > 0.0
                                                        ? kSeluLambda
                                                        : kSeluLambda * kSeluAlpha * std::exp(x[i]));
            }
        });
    }
    return out;
}

inline Tensor relu(Tape* tape, const Tensor& x) { return activation(tape, Activation::relu, x); }
inline Tensor selu(Tape* tape, const Tensor& x) { return activation(tape, Activation::selu, x); }

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    detail::require_2d(x, "layer_norm");
    int n = x.rows(), f = x.cols();
    if (gain.ndim() != 1 || gain.dim(0) != f || bias.ndim() != 1 || bias.dim(0) != f)
        throw std::invalid_argument("layer_norm: gain/bias length must equal feature count");
    bool rg = detail::want_grad(tape, {x, gain, bias});
    Tensor out = Tensor::zeros({n, f}, rg);
    // normalized rows and inverse stddevs are reused by the backward closure
    auto xhat = std::make_shared<std::vector<double>>(size_t(n) * size_t(f));
    auto inv = std::make_shared<std::vector<double>>(size_t(n));
    for (int i = 0; i < n; ++i) {
        const double* xi = x.data() + size_t(i) * size_t(f);
        double mean = 0.0;
        for (int j = 0; j < f; ++j) mean += xi[j];
        mean /= f;
        double var = 0.0;
        for (int j = 0; j < f; ++j) {
            double d = xi[j] - mean;
            var += d * d;
        }
        var /= f;
        double iv = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv)[size_t(i)] = iv;
        for (int j = 0; j < f; ++j) {
            double xh = (xi[j] - mean) * iv;
            (*xhat)[size_t(i) * size_t(f) + size_t(j)] = xh;
            out.at(i, j) = gain[size_t(j)] * xh + bias[size_t(j)];
        }
    }
    if (rg) {
        tape->record([x, gain, bias, out, xhat, inv, n, f]() mutable {
            std::vector<double> dxh(size_t(f), 0.0);
            for (int i = 0; i < n; ++i) {
                const double* go = out.grad() + size_t(i) * size_t(f);
                const double* xh = xhat->data() + size_t(i) * size_t(f);
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < f; ++j) {
                    dxh[size_t(j)] = go[j] * gain[size_t(j)];
                    m1 += dxh[size_t(j)];
                    m2 += dxh[size_t(j)] * xh[j];
                }
                m1 /= f;
                m2 /= f;
                if (x.requires_grad()) {
                    double iv = (*inv)[size_t(i)];
                    double* gx = x.grad() + size_t(i) * size_t(f);
                    for (int j = 0; j < f; ++j)
                        gx[j] += iv * (dxh[size_t(j)] - m1 - xh[j] * m2);
                }
                if (gain.requires_grad())
                    for (int j = 0; j < f; ++j) gain.grad()[j] += go[j] * xh[j];
                if (bias.requires_grad())
                    for (int j = 0; j < f; ++j) bias.grad()[j] += go[j];
            }
        });
    }
    return out;
}

// zero out rows where keep[i] == 0
inline Tensor mask_rows(Tape* tape, const Tensor& x, std::shared_ptr<const std::vector<uint8_t>> keep) {
    detail::require_2d(x, "mask_rows");
    if (int(keep->size()) != x.rows())
        throw std::invalid_argument("mask_rows: mask length must equal row count");
    int n = x.rows(), f = x.cols();
    bool rg = detail::want_grad(tape, {x});
    Tensor out = Tensor::zeros({n, f}, rg);
    for (int i = 0; i < n; ++i)
        if ((*keep)[size_t(i)])
            for (int j = 0; j < f; ++j) out.at(i, j) = x.at(i, j);
    if (rg) {
        tape->record([x, out, keep, n, f]() mutable {
            for (int i = 0; i < n; ++i)
                if ((*keep)[size_t(i)]) {
                    double* gx = x.grad() + size_t(i) * size_t(f);
                    const double* go = out.grad() + size_t(i) * size_t(f);
                    for (int j = 0; j < f; ++j) gx[j] += go[j];
                }
        });
    }
    return out;
}

// copy x into the first x.cols() columns of an N x f_out tensor (residual projection)
inline Tensor zeropad_cols(Tape* tape, const Tensor& x, int f_out) {
    detail::require_2d(x, "zeropad_cols");
    int n = x.rows(), f_in = x.cols();
    if (f_out < f_in) throw std::invalid_argument("zeropad_cols: target width too small");
    bool rg = detail::want_grad(tape, {x});
    Tensor out = Tensor::zeros({n, f_out}, rg);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < f_in; ++j) out.at(i, j) = x.at(i, j);
    if (rg) {
        tape->record([x, out, n, f_in]() mutable {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < f_in; ++j) x.grad()[size_t(i) * size_t(f_in) + size_t(j)] +=
                    out.grad()[size_t(i) * size_t(out.cols()) + size_t(j)];
        });
    }
    return out;
}

// ---- sparse relations ----

struct Edge {
    int src = 0;
    int dst = 0;
    double w = 1.0;
};

struct SparseRelation {
    int n_vertices = 0;
    std::vector<Edge> edges;
    bool normalized = false;

    void validate() const {
        for (const Edge& e : edges) {
            if (e.src < 0 || e.src >= n_vertices || e.dst < 0 || e.dst >= n_vertices)
                throw std::invalid_argument("relation edge index out of range");
            if (!(e.w > 0.0)) throw std::invalid_argument("relation edge weight must be positive");
        }
    }
};

// transpose: every edge flipped, weights kept. Symmetric degree normalization
// commutes with this, so a normalized relation stays normalized.
inline SparseRelation reversed(const SparseRelation& rel) {
    SparseRelation out;
    out.n_vertices = rel.n_vertices;
    out.normalized = rel.normalized;
    out.edges.reserve(rel.edges.size());
    for (const Edge& e : rel.edges) out.edges.push_back({e.dst, e.src, e.w});
    return out;
}

// out[i] = sum over edges (j -> i) of w * h[j]
inline Tensor propagate(Tape* tape, const SparseRelation& rel, const Tensor& h) {
    detail::require_2d(h, "propagate");
    if (!rel.normalized) throw std::logic_error("propagate: relation must be normalized");
    if (rel.n_vertices != h.rows())
        throw std::invalid_argument("propagate: vertex count mismatch");
    int f = h.cols();
    bool rg = detail::want_grad(tape, {h});
    Tensor out = Tensor::zeros({rel.n_vertices, f}, rg);
    for (const Edge& e : rel.edges) {
        const double* src = h.data() + size_t(e.src) * size_t(f);
        double* dst = out.data() + size_t(e.dst) * size_t(f);
        for (int j = 0; j < f; ++j) dst[j] += e.w * src[j];
    }
    if (rg) {
        auto edges = std::make_shared<std::vector<Edge>>(rel.edges);
        tape->record([h, out, edges, f]() mutable {
            for (const Edge& e : *edges) {
                double* gsrc = h.grad() + size_t(e.src) * size_t(f);
                const double* gdst = out.grad() + size_t(e.dst) * size_t(f);
                for (int j = 0; j < f; ++j) gsrc[j] += e.w * gdst[j];
            }
        });
    }
    return out;
}

// ---- dilated temporal convolution ----

namespace detail {

inline void check_conv_args(const Tensor& w, int dilation, int pad) {
    if (w.ndim() != 3) throw std::invalid_argument("conv1d: weight must be C_out x C_in x K");
    if (dilation < 0 || pad < 0)
        throw std::invalid_argument("conv1d: dilation and pad must be non-negative");
    if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be positive");
    int k = w.dim(2);
    if (2 * pad != dilation * (k - 1))
        throw std::invalid_argument("conv1d: pad must preserve length (2*pad == dilation*(K-1))");
}

// contiguous C_out x C_in slice of w at kernel tap k
inline std::vector<double> kernel_slice(const Tensor& w, int k) {
    int c_out = w.dim(0), c_in = w.dim(1), kk = w.dim(2);
    std::vector<double> s(size_t(c_out) * size_t(c_in));
    for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci)
            s[size_t(co) * size_t(c_in) + size_t(ci)] =
                w[(size_t(co) * size_t(c_in) + size_t(ci)) * size_t(kk) + size_t(k)];
    return s;
}

inline void kernel_slice_scatter_add(const Tensor& w, int k, const std::vector<double>& g) {
    int c_out = w.dim(0), c_in = w.dim(1), kk = w.dim(2);
    for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci)
            w.grad()[(size_t(co) * size_t(c_in) + size_t(ci)) * size_t(kk) + size_t(k)] +=
                g[size_t(co) * size_t(c_in) + size_t(ci)];
}

}  // namespace detail

// x: C_in x T (channel rows), w: C_out x C_in x K -> C_out x T, zero padded, stride 1
inline Tensor conv1d_dilated(Tape* tape, const Tensor& x, const Tensor& w, int dilation, int pad) {
    detail::require_2d(x, "conv1d_dilated");
    detail::check_conv_args(w, dilation, pad);
    int c_in = x.rows(), t_len = x.cols();
    int c_out = w.dim(0), k_len = w.dim(2);
    if (w.dim(1) != c_in) throw std::invalid_argument("conv1d_dilated: channel mismatch");
    bool rg = detail::want_grad(tape, {x, w});
    Tensor out = Tensor::zeros({c_out, t_len}, rg);
    for (int k = 0; k < k_len; ++k) {
        int s = k * dilation - pad;  // input col = output col + s
        int lo = std::max(0, -s), hi = std::min(t_len, t_len - s);
        if (hi <= lo) continue;
        std::vector<double> wk = detail::kernel_slice(w, k);
        detail::dgemm(false, false, c_out, hi - lo, c_in, 1.0, wk.data(), c_in,
                      x.data() + (lo + s), t_len, 1.0, out.data() + lo, t_len);
    }
    if (rg) {
        tape->record([x, w, out, dilation, pad, c_in, c_out, t_len, k_len]() mutable {
            for (int k = 0; k < k_len; ++k) {
                int s = k * dilation - pad;
                int lo = std::max(0, -s), hi = std::min(t_len, t_len - s);
                if (hi <= lo) continue;
                if (x.requires_grad()) {
                    std::vector<double> wk = detail::kernel_slice(w, k);
                    detail::dgemm(true, false, c_in, hi - lo, c_out, 1.0, wk.data(), c_in,
                                  out.grad() + lo, t_len, 1.0, x.grad() + (lo + s), t_len);
                }
                if (w.requires_grad()) {
                    std::vector<double> gk(size_t(c_out) * size_t(c_in), 0.0);
                    detail::dgemm(false, true, c_out, c_in, hi - lo, 1.0, out.grad() + lo, t_len,
                                  x.data() + (lo + s), t_len, 0.0, gk.data(), c_in);
                    detail::kernel_slice_scatter_add(w, k, gk);
                }
            }
        });
    }
    return out;
}

// Same convolution applied independently to every vertex of a stacked sequence tensor.
// x: (T*n_vertices) x C_in, frame-major rows (row t*n_vertices + v); per vertex the rows
// form a strided T x C_in matrix that feeds dgemm directly.
inline Tensor conv1d_dilated_stacked(Tape* tape, const Tensor& x, int n_vertices, const Tensor& w,
                                     int dilation, int pad) {
    detail::require_2d(x, "conv1d_dilated_stacked");
    detail::check_conv_args(w, dilation, pad);
    if (x.rows() % n_vertices != 0)
        throw std::invalid_argument("conv1d_dilated_stacked: rows not divisible by vertex count");
    int t_len = x.rows() / n_vertices;
    int c_in = x.cols(), c_out = w.dim(0), k_len = w.dim(2);
    if (w.dim(1) != c_in) throw std::invalid_argument("conv1d_dilated_stacked: channel mismatch");
    bool rg = detail::want_grad(tape, {x, w});
    Tensor out = Tensor::zeros({x.rows(), c_out}, rg);
    int lda = n_vertices * c_in, ldc = n_vertices * c_out;
    for (int k = 0; k < k_len; ++k) {
        int s = k * dilation - pad;
        int lo = std::max(0, -s), hi = std::min(t_len, t_len - s);
        if (hi <= lo) continue;
        std::vector<double> wk = detail::kernel_slice(w, k);
        for (int v = 0; v < n_vertices; ++v)
            detail::dgemm(false, true, hi - lo, c_out, c_in, 1.0,
                          x.data() + size_t(lo + s) * size_t(lda) + size_t(v) * size_t(c_in), lda,
                          wk.data(), c_in, 1.0,
                          out.data() + size_t(lo) * size_t(ldc) + size_t(v) * size_t(c_out), ldc);
    }
    if (rg) {
        tape->record([x, w, out, dilation, pad, n_vertices, t_len, c_in, c_out, k_len]() mutable {
            int lda = n_vertices * c_in, ldc = n_vertices * c_out;
            for (int k = 0; k < k_len; ++k) {
                int s = k * dilation - pad;
                int lo = std::max(0, -s), hi = std::min(t_len, t_len - s);
                if (hi <= lo) continue;
                std::vector<double> wk = detail::kernel_slice(w, k);
                std::vector<double> gk(size_t(c_out) * size_t(c_in), 0.0);
                for (int v = 0; v < n_vertices; ++v) {
                    const double* go = out.grad() + size_t(lo) * size_t(ldc) + size_t(v) * size_t(c_out);
                    if (x.requires_grad())
                        detail::dgemm(false, false, hi - lo, c_in, c_out, 1.0, go, ldc, wk.data(),
                                      c_in, 1.0,
                                      x.grad() + size_t(lo + s) * size_t(lda) + size_t(v) * size_t(c_in),
                                      lda);
                    if (w.requires_grad())
                        detail::dgemm(true, false, c_out, c_in, hi - lo, 1.0, go, ldc,
                                      x.data() + size_t(lo + s) * size_t(lda) + size_t(v) * size_t(c_in),
                                      lda, 1.0, gk.data(), c_in);
                }
                if (w.requires_grad()) detail::kernel_slice_scatter_add(w, k, gk);
            }
        });
    }
    return out;
}

// ---- pooling and loss ----

// out[g] = mean of x rows listed in groups[g]; every group must be non-empty
inline Tensor masked_mean_pool(Tape* tape, const Tensor& x,
                               std::shared_ptr<const std::vector<std::vector<int>>> groups) {
    detail::require_2d(x, "masked_mean_pool");
    int f = x.cols(), t = int(groups->size());
    for (const auto& g : *groups)
        if (g.empty()) throw std::logic_error("masked_mean_pool: empty vertex group");
    bool rg = detail::want_grad(tape, {x});
    Tensor out = Tensor::zeros({t, f}, rg);
    for (int i = 0; i < t; ++i) {
        const auto& g = (*groups)[size_t(i)];
        double inv = 1.0 / double(g.size());
        double* o = out.data() + size_t(i) * size_t(f);
        for (int r : g) {
            const double* xr = x.data() + size_t(r) * size_t(f);
            for (int j = 0; j < f; ++j) o[j] += inv * xr[j];
        }
    }
    if (rg) {
        tape->record([x, out, groups, t, f]() mutable {
            for (int i = 0; i < t; ++i) {
                const auto& g = (*groups)[size_t(i)];
                double inv = 1.0 / double(g.size());
                const double* go = out.grad() + size_t(i) * size_t(f);
                for (int r : g) {
                    double* gx = x.grad() + size_t(r) * size_t(f);
                    for (int j = 0; j < f; ++j) gx[j] += inv * go[j];
                }
            }
        });
    }
    return out;
}

inline void softmax_row(const double* x, double* p, int c) {
    double m = x[0];
    for (int j = 1; j < c; ++j) m = std::max(m, x[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
        p[j] = std::exp(x[j] - m);
        z += p[j];
    }
    for (int j = 0; j < c; ++j) p[j] /= z;
}

inline Tensor softmax_rows(const Tensor& logits) {
    detail::require_2d(logits, "softmax_rows");
    Tensor p = Tensor::zeros(logits.shape());
    int n = logits.rows(), c = logits.cols();
    for (int i = 0; i < n; ++i)
        softmax_row(logits.data() + size_t(i) * size_t(c), p.data() + size_t(i) * size_t(c), c);
    return p;
}

// mean over rows of class_weight[label] * (-log softmax(logits)[label])
inline Tensor weighted_softmax_ce(Tape* tape, const Tensor& logits, const std::vector<int>& labels,
                                  const std::vector<double>& class_weights) {
    detail::require_2d(logits, "weighted_softmax_ce");
    int t = logits.rows(), c = logits.cols();
    if (int(labels.size()) != t)
        throw std::invalid_argument("weighted_softmax_ce: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= c) throw std::invalid_argument("weighted_softmax_ce: label out of range");
    if (int(class_weights.size()) != c)
        throw std::invalid_argument("weighted_softmax_ce: weight count mismatch");
    bool rg = detail::want_grad(tape, {logits});
    Tensor out = Tensor::zeros({1}, rg);
    auto probs = std::make_shared<std::vector<double>>(size_t(t) * size_t(c));
    double total = 0.0;
    for (int i = 0; i < t; ++i) {
        const double* xi = logits.data() + size_t(i) * size_t(c);
        double* pi = probs->data() + size_t(i) * size_t(c);
        double m = xi[0];
        for (int j = 1; j < c; ++j) m = std::max(m, xi[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(xi[j] - m);
        double lse = m + std::log(z);
        for (int j = 0; j < c; ++j) pi[j] = std::exp(xi[j] - lse);
        total += class_weights[size_t(labels[size_t(i)])] * (lse - xi[labels[size_t(i)]]);
    }
    out[0] = total / t;
    if (rg) {
        auto lab = std::make_shared<std::vector<int>>(labels);
        auto cw = std::make_shared<std::vector<double>>(class_weights);
        tape->record([logits, out, probs, lab, cw, t, c]() mutable {
            double g = out.grad()[0];
            for (int i = 0; i < t; ++i) {
                int y = (*lab)[size_t(i)];
                double scale = g * (*cw)[size_t(y)] / t;
                double* gx = logits.grad() + size_t(i) * size_t(c);
                const double* pi = probs->data() + size_t(i) * size_t(c);
                for (int j = 0; j < c; ++j) gx[j] += scale * (pi[j] - (j == y ? 1.0 : 0.0));
            }
        });
    }
    return out;
}

}  // namespace sgcn
