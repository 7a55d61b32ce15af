#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fdnn {

// Dense row-major N-d array of doubles. All public kernels below are pure:
// they never modify their inputs and identical inputs give bit-identical
// outputs (fixed loop and reduction order, no internal threading).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Same data, new shape; element count must match.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    void fill(double v);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);
std::string shape_str(const Tensor& t);

// c = a * b               (a: m x k, b: k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a * b^T             (a: m x k, b: n x k)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// c = a^T * b             (a: k x m, b: k x n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Raw kernels over flat row-major buffers; used by the layer library so it
// can run on tensor views without slicing copies.
void matmul_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n);
void matmul_nt_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
// Accumulating variant of a^T * b: c += a^T b  (a: k x m, b: k x n).
void matmul_tn_acc_raw(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                       std::size_t n);
// Accumulating variant of a * b^T: c += a b^T  (a: m x k, b: n x k).
void matmul_nt_acc_raw(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                       std::size_t n);

// Lowers a C x H x W image to a (C*kh*kw) x (Ho*Wo) matrix. Column j holds
// the receptive field of output position j; rows are channel-major, then
// row-major within the kernel. Padding reads as zero.
Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad);
void im2col_raw(const double* x, double* cols, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad);

// Exact linear adjoint of im2col: overlapping contributions are summed,
// padded positions are dropped.
Tensor col2im(const Tensor& cols, std::size_t kh, std::size_t kw, std::size_t stride,
              std::size_t pad, std::size_t c, std::size_t h, std::size_t w);
void col2im_raw(const double* cols, double* x, std::size_t c, std::size_t h, std::size_t w,
                std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad);

// Output spatial size of a convolution along one axis; throws ShapeError if
// the geometry does not divide evenly or collapses below 1.
std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double sum(const Tensor& x);
double sum_sq(const Tensor& x);
double reduce_mean(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& x);

}  // namespace fdnn
