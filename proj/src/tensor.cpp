#include "fdnn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fdnn/errors.hpp"

namespace fdnn {

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

void require_matrix(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a matrix, got " + shape_str(t));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_nonempty(const Tensor& t, const char* who) {
    if (t.empty()) throw DomainError(std::string(who) + ": empty tensor");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (checked_numel(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

void matmul_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double ait = arow[t];
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ait * brow[j];
        }
    }
}

void matmul_nt_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
            crow[j] = acc;
        }
    }
}

void matmul_tn_acc_raw(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                       std::size_t n) {
    for (std::size_t i = 0; i < k; ++i) {
        const double* arow = a + i * m;
        const double* brow = b + i * n;
        for (std::size_t t = 0; t < m; ++t) {
            const double ait = arow[t];
            double* crow = c + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ait * brow[j];
        }
    }
}

void matmul_nt_acc_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.shape()[1] != b.shape()[0])
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) + " vs " + shape_str(b));
    Tensor c({a.shape()[0], b.shape()[1]});
    matmul_raw(a.data(), b.data(), c.data(), a.shape()[0], a.shape()[1], b.shape()[1]);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.shape()[1] != b.shape()[1])
        throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_str(a) + " vs " +
                         shape_str(b));
    Tensor c({a.shape()[0], b.shape()[0]});
    matmul_nt_raw(a.data(), b.data(), c.data(), a.shape()[0], a.shape()[1], b.shape()[0]);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    if (a.shape()[0] != b.shape()[0])
        throw ShapeError("matmul_tn: inner dimensions disagree, " + shape_str(a) + " vs " +
                         shape_str(b));
    Tensor c({a.shape()[1], b.shape()[1]});
    matmul_tn_acc_raw(a.data(), b.data(), c.data(), a.shape()[0], a.shape()[1], b.shape()[1]);
    return c;
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("stride must be positive");
    const std::size_t padded = in + 2 * pad;
    if (padded < k)
        throw ShapeError("kernel " + std::to_string(k) + " exceeds padded extent " +
                         std::to_string(padded));
    const std::size_t span = padded - k;
    if (span % stride != 0)
        throw ShapeError("non-integral output size: (" + std::to_string(in) + " + 2*" +
                         std::to_string(pad) + " - " + std::to_string(k) + ") % " +
                         std::to_string(stride) + " != 0");
    return span / stride + 1;
}

void im2col_raw(const double* x, double* cols, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    const std::size_t ho = conv_out_dim(h, kh, stride, pad);
    const std::size_t wo = conv_out_dim(w, kw, stride, pad);
    const std::size_t ncols = ho * wo;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xc = x + ch * h * w;
        for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
                double* row = cols + ((ch * kh + u) * kw + v) * ncols;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + u) - static_cast<std::ptrdiff_t>(pad);
                    const bool y_in = iy >= 0 && iy < static_cast<std::ptrdiff_t>(h);
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + v) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        const bool in = y_in && ix >= 0 && ix < static_cast<std::ptrdiff_t>(w);
                        row[oy * wo + ox] = in ? xc[iy * static_cast<std::ptrdiff_t>(w) + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_raw(const double* cols, double* x, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    const std::size_t ho = conv_out_dim(h, kh, stride, pad);
    const std::size_t wo = conv_out_dim(w, kw, stride, pad);
    const std::size_t ncols = ho * wo;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double* xc = x + ch * h * w;
        for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
                const double* row = cols + ((ch * kh + u) * kw + v) * ncols;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + u) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + v) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        xc[iy * static_cast<std::ptrdiff_t>(w) + ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3) throw ShapeError("im2col: expected CxHxW input, got " + shape_str(x));
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t ho = conv_out_dim(h, kh, stride, pad);
    const std::size_t wo = conv_out_dim(w, kw, stride, pad);
    Tensor cols({c * kh * kw, ho * wo});
    im2col_raw(x.data(), cols.data(), c, h, w, kh, kw, stride, pad);
    return cols;
}

Tensor col2im(const Tensor& cols, std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad, std::size_t c, std::size_t h, std::size_t w) {
    require_matrix(cols, "col2im");
    const std::size_t ho = conv_out_dim(h, kh, stride, pad);
    const std::size_t wo = conv_out_dim(w, kw, stride, pad);
    if (cols.shape()[0] != c * kh * kw || cols.shape()[1] != ho * wo)
        throw ShapeError("col2im: columns " + shape_str(cols) + " inconsistent with output [" +
                         std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) +
                         "], kernel " + std::to_string(kh) + "x" + std::to_string(kw));
    Tensor x({c, h, w});
    col2im_raw(cols.data(), x.data(), c, h, w, kh, kw, stride, pad);
    return x;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
    return c;
}

double sum(const Tensor& x) {
    require_nonempty(x, "sum");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
    return acc;
}

double sum_sq(const Tensor& x) {
    require_nonempty(x, "sum_sq");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i];
    return acc;
}

double reduce_mean(const Tensor& x) {
    require_nonempty(x, "reduce_mean");
    return sum(x) / static_cast<double>(x.size());
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw ShapeError("dot: element counts disagree, " + shape_str(a) + " vs " + shape_str(b));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

bool all_finite(const Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

}  // namespace fdnn
