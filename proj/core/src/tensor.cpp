#include "qbnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qbnn/errors.hpp"

namespace qbnn {

namespace {

size_t checked_count(const std::vector<int>& dims) {
    if (dims.empty()) throw ShapeError("tensor must have at least one dimension");
    size_t n = 1;
    for (int d : dims) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + std::to_string(d));
        n *= static_cast<size_t>(d);
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> dims) : dims_(std::move(dims)), data_(checked_count(dims_), 0.0) {}

Tensor::Tensor(std::vector<int> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_count(dims_) != data_.size())
        throw ShapeError("tensor data length does not match the product of dims");
}

Tensor Tensor::zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

Tensor Tensor::full(std::vector<int> dims, double value) {
    Tensor t(std::move(dims));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::vector1d(std::initializer_list<double> values) {
    return Tensor({static_cast<int>(values.size())}, std::vector<double>(values));
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<size_t>(r) * dims_[1] + c];
}
double Tensor::at(int r, int c) const {
    return data_[static_cast<size_t>(r) * dims_[1] + c];
}
double& Tensor::at(int c, int h, int w) {
    return data_[(static_cast<size_t>(c) * dims_[1] + h) * dims_[2] + w];
}
double Tensor::at(int c, int h, int w) const {
    return data_[(static_cast<size_t>(c) * dims_[1] + h) * dims_[2] + w];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 tensors");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(k) + " vs " +
                         std::to_string(b.dim(0)));
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride) {
    if (input.rank() != 3 || kernels.rank() != 4)
        throw ShapeError("conv2d expects input [CxHxW] and kernels [FxCxkhxkw]");
    if (stride < 1) throw ShapeError("conv2d stride must be positive");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int f = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kc != c) throw ShapeError("conv2d kernel channel count does not match input");
    if (kh > h || kw > w) throw ShapeError("conv2d kernel larger than input");
    const int oh = (h - kh) / stride + 1;
    const int ow = (w - kw) / stride + 1;
    Tensor out({f, oh, ow});
    for (int fo = 0; fo < f; ++fo) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (int ci = 0; ci < c; ++ci)
                    for (int u = 0; u < kh; ++u)
                        for (int v = 0; v < kw; ++v)
                            acc += input.at(ci, i * stride + u, j * stride + v) *
                                   kernels[((fo * c + ci) * kh + u) * kw + v];
                out.at(fo, i, j) = acc;
            }
        }
    }
    return out;
}

Tensor maxpool_2x1(const Tensor& input) {
    std::vector<int> argmax;
    return maxpool_2x1_with_argmax(input, argmax);
}

Tensor maxpool_2x1_with_argmax(const Tensor& input, std::vector<int>& argmax) {
    if (input.rank() != 3) throw ShapeError("maxpool_2x1 expects a [CxHxW] tensor");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h < 2) throw ShapeError("maxpool_2x1 needs H >= 2");
    const int oh = h / 2;
    Tensor out({c, oh, w});
    argmax.assign(static_cast<size_t>(c) * oh * w, 0);
    size_t o = 0;
    for (int ci = 0; ci < c; ++ci) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < w; ++j, ++o) {
                const int top = (ci * h + 2 * i) * w + j;
                const int bot = top + w;
                // ties keep the first (top) element
                if (input[bot] > input[top]) {
                    out[static_cast<int>(o)] = input[bot];
                    argmax[o] = bot;
                } else {
                    out[static_cast<int>(o)] = input[top];
                    argmax[o] = top;
                }
            }
        }
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() < 1)
        throw ShapeError("softmax expects a non-empty 1-d tensor");
    double mx = logits[0];
    for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    Tensor out(logits.dims());
    double sum = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (int i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
}

double cross_entropy(const Tensor& probs, int label) {
    if (label < 0 || label >= probs.size())
        throw DomainError("cross_entropy label out of range");
    return -std::log(std::max(probs[label], 1e-12));
}

Tensor relu(const Tensor& x) {
    Tensor out(x.dims());
    for (int i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels,
                             const std::vector<int>& input_dims, int stride) {
    const int c = input_dims[0];
    const int f = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const int oh = grad_out.dim(1), ow = grad_out.dim(2);
    Tensor grad_in(input_dims);
    for (int fo = 0; fo < f; ++fo)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const double g = grad_out.at(fo, i, j);
                if (g == 0.0) continue;
                for (int ci = 0; ci < c; ++ci)
                    for (int u = 0; u < kh; ++u)
                        for (int v = 0; v < kw; ++v)
                            grad_in.at(ci, i * stride + u, j * stride + v) +=
                                g * kernels[((fo * c + ci) * kh + u) * kw + v];
            }
    return grad_in;
}

Tensor conv2d_backward_kernels(const Tensor& grad_out, const Tensor& input,
                               const std::vector<int>& kernel_dims, int stride) {
    const int c = input.dim(0);
    const int f = kernel_dims[0], kh = kernel_dims[2], kw = kernel_dims[3];
    const int oh = grad_out.dim(1), ow = grad_out.dim(2);
    Tensor grad_k(kernel_dims);
    for (int fo = 0; fo < f; ++fo)
        for (int ci = 0; ci < c; ++ci)
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v) {
                    double acc = 0.0;
                    for (int i = 0; i < oh; ++i)
                        for (int j = 0; j < ow; ++j)
                            acc += grad_out.at(fo, i, j) *
                                   input.at(ci, i * stride + u, j * stride + v);
                    grad_k[((fo * c + ci) * kh + u) * kw + v] = acc;
                }
    return grad_k;
}

Tensor maxpool_2x1_backward(const Tensor& grad_out, const std::vector<int>& argmax,
                            const std::vector<int>& input_dims) {
    Tensor grad_in(input_dims);
    for (int i = 0; i < grad_out.size(); ++i)
        grad_in[argmax[static_cast<size_t>(i)]] += grad_out[i];
    return grad_in;
}

Tensor transpose_hw(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("transpose_hw expects a [CxHxW] tensor");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, w, h});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.at(ci, j, i) = x.at(ci, i, j);
    return out;
}

} // namespace ops

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    // y = ln(1 + e^x)  =>  x = y + ln(1 - e^-y)
    if (y > 30.0) return y;
    return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace qbnn
