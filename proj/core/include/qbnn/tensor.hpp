#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace qbnn {

/// Dense row-major f64 tensor. The single numeric carrier for weights,
/// activations and gradients. All reductions in the ops below run in
/// ascending index order so results are bit-reproducible.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> dims);                          // zero-filled
    Tensor(std::vector<int> dims, std::vector<double> data);

    static Tensor zeros(std::vector<int> dims);
    static Tensor full(std::vector<int> dims, double value);
    static Tensor identity(int n);
    static Tensor vector1d(std::initializer_list<double> values);

    const std::vector<int>& dims() const { return dims_; }
    int rank() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    int size() const { return static_cast<int>(data_.size()); }

    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }

    // 2-d / 3-d accessors (row-major)
    double& at(int r, int c);
    double at(int r, int c) const;
    double& at(int c, int h, int w);
    double at(int c, int h, int w) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
    bool all_finite() const;

  private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

namespace ops {

/// Standard matrix product, a[m x k] * b[k x n]. Summation ascends over k.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Valid (unpadded) cross-correlation. input [C x H x W], kernels
/// [F x C x kh x kw], output [F x H' x W'] with H' = (H-kh)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride);

/// Max over non-overlapping 2x1 windows along H; a trailing odd row is
/// dropped. input [C x H x W] -> [C x H/2 x W].
Tensor maxpool_2x1(const Tensor& input);

/// Same as maxpool_2x1 but also records, per output element, the flat input
/// index the maximum came from (first index on ties). Needed for backprop.
Tensor maxpool_2x1_with_argmax(const Tensor& input, std::vector<int>& argmax);

/// Numerically stable softmax over a 1-d tensor.
Tensor softmax(const Tensor& logits);

/// -ln(probs[label]) with the probability floored at 1e-12 before the log.
double cross_entropy(const Tensor& probs, int label);

Tensor relu(const Tensor& x);

// Backward kernels used by the manual backprop in bayes_net.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels,
                             const std::vector<int>& input_dims, int stride);
Tensor conv2d_backward_kernels(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& kernel_dims, int stride);
Tensor maxpool_2x1_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                            const std::vector<int>& input_dims);

Tensor transpose_hw(const Tensor& x); // [C x H x W] -> [C x W x H]

} // namespace ops

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

} // namespace qbnn
