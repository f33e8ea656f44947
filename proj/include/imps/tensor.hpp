#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include "imps/errors.hpp"

namespace imps {

using cx = std::complex<double>;

/// Dense n-dimensional complex tensor, row-major (last axis fastest).
/// Value semantics; all shape/data invariants checked on construction.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape);
    Tensor(std::vector<long> shape, std::vector<cx> data);

    long rank() const { return static_cast<long>(shape_.size()); }
    long extent(long axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    const std::vector<long>& shape() const { return shape_; }
    long size() const { return static_cast<long>(data_.size()); }
    bool empty() const { return data_.empty(); }

    cx* data() { return data_.data(); }
    const cx* data() const { return data_.data(); }
    std::vector<cx>& storage() { return data_; }
    const std::vector<cx>& storage() const { return data_; }

    cx& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
    const cx& operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

    /// Element access by multi-index; intended for tests and small tensors.
    cx& at(std::initializer_list<long> idx);
    const cx& at(std::initializer_list<long> idx) const;

    /// Same data, new shape (product of extents must match).
    Tensor reshaped(std::vector<long> new_shape) const&;
    Tensor reshaped(std::vector<long> new_shape) &&;

    /// Axis permutation: result extent(i) = extent(axes[i]).
    Tensor permuted(const std::vector<long>& axes) const;

    double norm() const;
    Tensor& operator*=(cx s);
    Tensor& operator+=(const Tensor& other);
    Tensor& axpy(cx alpha, const Tensor& x);

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  private:
    std::vector<long> shape_;
    std::vector<cx> data_;
};

Tensor conj(const Tensor& t);

/// Checks shapes and entries for equality within atol (tests/diagnostics).
double max_abs_difference(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& t);

/// Einstein contraction over the given axis pairs (first of a, second of b).
/// Result axes: unpaired axes of a in order, then unpaired axes of b.
/// Implemented as permute + tiled GEMM, OpenMP-parallel over output tiles;
/// results are identical for any thread count.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<long, long>>& pairs);

namespace ref {
/// Serial index-loop reference implementation of contract; kept as the
/// brute-force oracle for the parallel kernel and for clarity.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<long, long>>& pairs);
} // namespace ref

/// Inner product <a|b> = sum conj(a_i) b_i over identical shapes.
cx inner(const Tensor& a, const Tensor& b);

} // namespace imps
