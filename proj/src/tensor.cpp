#include "imps/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace imps {

namespace {

long product(const std::vector<long>& v) {
    long p = 1;
    for (long e : v) p *= e;
    return p;
}

std::vector<long> row_major_strides(const std::vector<long>& shape) {
    std::vector<long> s(shape.size(), 1);
    for (long i = static_cast<long>(shape.size()) - 2; i >= 0; --i)
        s[i] = s[i + 1] * shape[i + 1];
    return s;
}

std::string shape_string(const std::vector<long>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

using RowMat = Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

Tensor::Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    for (long e : shape_)
        if (e < 0) throw DimensionError("negative tensor extent in " + shape_string(shape_));
    data_.assign(static_cast<std::size_t>(product(shape_)), cx(0, 0));
}

Tensor::Tensor(std::vector<long> shape, std::vector<cx> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != static_cast<long>(data_.size()))
        throw DimensionError("tensor data length does not match shape " + shape_string(shape_));
}

cx& Tensor::at(std::initializer_list<long> idx) {
    return const_cast<cx&>(static_cast<const Tensor*>(this)->at(idx));
}

const cx& Tensor::at(std::initializer_list<long> idx) const {
    if (static_cast<long>(idx.size()) != rank())
        throw DimensionError("index rank mismatch in Tensor::at");
    auto strides = row_major_strides(shape_);
    long flat = 0;
    long axis = 0;
    for (long i : idx) {
        if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)])
            throw DimensionError("index out of range in Tensor::at");
        flat += i * strides[static_cast<std::size_t>(axis)];
        ++axis;
    }
    return data_[static_cast<std::size_t>(flat)];
}

Tensor Tensor::reshaped(std::vector<long> new_shape) const& {
    if (product(new_shape) != size())
        throw DimensionError("reshape " + shape_string(shape_) + " -> " + shape_string(new_shape) +
                             " changes element count");
    return Tensor(std::move(new_shape), data_);
}

Tensor Tensor::reshaped(std::vector<long> new_shape) && {
    if (product(new_shape) != size())
        throw DimensionError("reshape " + shape_string(shape_) + " -> " + shape_string(new_shape) +
                             " changes element count");
    return Tensor(std::move(new_shape), std::move(data_));
}

Tensor Tensor::permuted(const std::vector<long>& axes) const {
    const long r = rank();
    if (static_cast<long>(axes.size()) != r)
        throw DimensionError("permutation rank mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    std::vector<long> new_shape(static_cast<std::size_t>(r));
    for (long i = 0; i < r; ++i) {
        long a = axes[static_cast<std::size_t>(i)];
        if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)])
            throw DimensionError("invalid axis permutation");
        seen[static_cast<std::size_t>(a)] = true;
        new_shape[static_cast<std::size_t>(i)] = shape_[static_cast<std::size_t>(a)];
    }

    Tensor out(new_shape);
    if (size() == 0) return out;

    const auto in_strides = row_major_strides(shape_);
    const auto out_shape = new_shape;
    const long n = size();
    // stride of output axis i measured in the input layout
    std::vector<long> mapped(static_cast<std::size_t>(r));
    for (long i = 0; i < r; ++i)
        mapped[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];

    const cx* src = data_.data();
    cx* dst = out.data();
#pragma omp parallel for schedule(static) if (n > 16384)
    for (long flat = 0; flat < n; ++flat) {
        long rem = flat;
        long src_idx = 0;
        for (long i = r - 1; i >= 0; --i) {
            const long e = out_shape[static_cast<std::size_t>(i)];
            const long q = rem / e;
            src_idx += (rem - q * e) * mapped[static_cast<std::size_t>(i)];
            rem = q;
        }
        dst[flat] = src[src_idx];
    }
    return out;
}

double Tensor::norm() const {
    double s = 0;
    for (const cx& v : data_) s += std::norm(v);
    return std::sqrt(s);
}

Tensor& Tensor::operator*=(cx s) {
    for (cx& v : data_) v *= s;
    return *this;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (shape_ != other.shape_) throw DimensionError("tensor addition shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::axpy(cx alpha, const Tensor& x) {
    if (shape_ != x.shape_) throw DimensionError("axpy shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * x.data_[i];
    return *this;
}

Tensor conj(const Tensor& t) {
    Tensor out = t;
    for (cx& v : out.storage()) v = std::conj(v);
    return out;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_difference shape mismatch");
    double m = 0;
    for (long i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& t) {
    for (long i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i].real()) || !std::isfinite(t[i].imag())) return false;
    return true;
}

cx inner(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("inner product shape mismatch");
    cx s(0, 0);
    for (long i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

namespace {

struct ContractPlan {
    std::vector<long> free_a, free_b, con_a, con_b;
    std::vector<long> out_shape;
    long m = 1, n = 1, k = 1;
};

ContractPlan plan_contraction(const Tensor& a, const Tensor& b,
                              const std::vector<std::pair<long, long>>& pairs) {
    ContractPlan p;
    std::vector<bool> paired_a(static_cast<std::size_t>(a.rank()), false);
    std::vector<bool> paired_b(static_cast<std::size_t>(b.rank()), false);
    for (auto [ia, ib] : pairs) {
        if (ia < 0 || ia >= a.rank() || ib < 0 || ib >= b.rank())
            throw DimensionError("contraction axis out of range");
        if (paired_a[static_cast<std::size_t>(ia)] || paired_b[static_cast<std::size_t>(ib)])
            throw DimensionError("contraction axis used twice");
        if (a.extent(ia) != b.extent(ib)) {
            std::ostringstream os;
            os << "contraction extent mismatch: a axis " << ia << " (" << a.extent(ia)
               << ") vs b axis " << ib << " (" << b.extent(ib) << ")";
            throw DimensionError(os.str());
        }
        paired_a[static_cast<std::size_t>(ia)] = true;
        paired_b[static_cast<std::size_t>(ib)] = true;
    }
    for (long i = 0; i < a.rank(); ++i)
        if (!paired_a[static_cast<std::size_t>(i)]) {
            p.free_a.push_back(i);
            p.out_shape.push_back(a.extent(i));
            p.m *= a.extent(i);
        }
    for (long i = 0; i < b.rank(); ++i)
        if (!paired_b[static_cast<std::size_t>(i)]) {
            p.free_b.push_back(i);
            p.out_shape.push_back(b.extent(i));
            p.n *= b.extent(i);
        }
    for (auto [ia, ib] : pairs) {
        p.con_a.push_back(ia);
        p.con_b.push_back(ib);
        p.k *= a.extent(ia);
    }
    return p;
}

} // namespace

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<long, long>>& pairs) {
    ContractPlan p = plan_contraction(a, b, pairs);

    std::vector<long> perm_a = p.free_a;
    perm_a.insert(perm_a.end(), p.con_a.begin(), p.con_a.end());
    std::vector<long> perm_b = p.con_b;
    perm_b.insert(perm_b.end(), p.free_b.begin(), p.free_b.end());

    Tensor ta = a.permuted(perm_a);
    Tensor tb = b.permuted(perm_b);

    Tensor out(p.out_shape);
    if (out.size() == 0 || p.k == 0) return out;

    Eigen::Map<const RowMat> ma(ta.data(), p.m, p.k);
    Eigen::Map<const RowMat> mb(tb.data(), p.k, p.n);
    Eigen::Map<RowMat> mc(out.data(), p.m, p.n);

    // Row blocks of the output are independent; each block is a serial GEMM,
    // so the result does not depend on the number of threads.
    const long block = 64;
    const long nblocks = (p.m + block - 1) / block;
#pragma omp parallel for schedule(static) if (p.m * p.n * p.k > 32768)
    for (long ib = 0; ib < nblocks; ++ib) {
        const long r0 = ib * block;
        const long rows = std::min(block, p.m - r0);
        mc.middleRows(r0, rows).noalias() = ma.middleRows(r0, rows) * mb;
    }
    return out;
}

namespace ref {

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<long, long>>& pairs) {
    ContractPlan p = plan_contraction(a, b, pairs);
    Tensor out(p.out_shape);
    if (out.size() == 0 || p.k == 0) return out;

    const auto sa = row_major_strides(a.shape());
    const auto sb = row_major_strides(b.shape());

    auto stride_list = [](const std::vector<long>& axes, const std::vector<long>& strides) {
        std::vector<long> r;
        for (long ax : axes) r.push_back(strides[static_cast<std::size_t>(ax)]);
        return r;
    };
    auto extent_list = [](const Tensor& t, const std::vector<long>& axes) {
        std::vector<long> r;
        for (long ax : axes) r.push_back(t.extent(ax));
        return r;
    };

    const auto fa_str = stride_list(p.free_a, sa);
    const auto fb_str = stride_list(p.free_b, sb);
    const auto ca_str = stride_list(p.con_a, sa);
    const auto cb_str = stride_list(p.con_b, sb);
    const auto fa_ext = extent_list(a, p.free_a);
    const auto fb_ext = extent_list(b, p.free_b);
    const auto c_ext = extent_list(a, p.con_a);

    std::vector<long> ia(fa_ext.size(), 0), ib(fb_ext.size(), 0);
    auto advance = [](std::vector<long>& idx, const std::vector<long>& ext) {
        for (long i = static_cast<long>(idx.size()) - 1; i >= 0; --i) {
            if (++idx[static_cast<std::size_t>(i)] < ext[static_cast<std::size_t>(i)]) return true;
            idx[static_cast<std::size_t>(i)] = 0;
        }
        return false;
    };
    auto offset = [](const std::vector<long>& idx, const std::vector<long>& str) {
        long o = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) o += idx[i] * str[i];
        return o;
    };

    long flat = 0;
    do {
        const long base_a = offset(ia, fa_str);
        std::fill(ib.begin(), ib.end(), 0);
        do {
            const long base_b = offset(ib, fb_str);
            cx acc(0, 0);
            std::vector<long> ic(c_ext.size(), 0);
            do {
                acc += a[base_a + offset(ic, ca_str)] * b[base_b + offset(ic, cb_str)];
            } while (advance(ic, c_ext));
            out[flat++] = acc;
        } while (advance(ib, fb_ext));
    } while (advance(ia, fa_ext));
    return out;
}

} // namespace ref

} // namespace imps
