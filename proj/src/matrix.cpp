#include "cama/matrix.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace cama {

namespace {
constexpr size_t kMaxPooledPerSize = 512;

// Size-keyed free lists, one pool per thread. Matrices with static storage
// duration can outlive the pool at thread/process teardown, so a trivially
// destructible flag records its death and late releases fall through to the
// allocator.
thread_local bool t_pool_dead = false;

struct PoolHolder {
    std::unordered_map<size_t, std::vector<std::vector<double>>> lists;
    ~PoolHolder() { t_pool_dead = true; }
};

PoolHolder& pool() {
    thread_local PoolHolder p;
    return p;
}
}  // namespace

std::vector<double> pooled_buffer_raw(size_t n) {
    if (n == 0) return {};
    if (!t_pool_dead) {
        auto& lists = pool().lists;
        auto it = lists.find(n);
        if (it != lists.end() && !it->second.empty()) {
            std::vector<double> v = std::move(it->second.back());
            it->second.pop_back();
            return v;
        }
    }
    return std::vector<double>(n);
}

std::vector<double> pooled_buffer(size_t n) {
    std::vector<double> v = pooled_buffer_raw(n);
    std::fill(v.begin(), v.end(), 0.0);
    return v;
}

void release_buffer(std::vector<double>&& v) {
    if (v.empty() || t_pool_dead) return;
    auto& list = pool().lists[v.size()];
    if (list.size() < kMaxPooledPerSize) list.push_back(std::move(v));
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < m.rows(); ++i) {
        if (static_cast<int>(rows[i].size()) != m.cols())
            throw std::invalid_argument("from_rows: ragged rows");
        for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t = Matrix::uninitialized(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

namespace {
void check_mul(const Matrix& a, const Matrix& b, int inner_a, int inner_b, const char* what) {
    if (inner_a != inner_b)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
}
}  // namespace

void gemm_raw_acc(double* __restrict c, const double* __restrict a, const double* __restrict b, int m,
                  int k, int n, int lda, int ldb, int ldc) {
    // Two-row blocking with local accumulators: B rows are reused across a
    // pair of A rows and the accumulators are provably alias-free, which is
    // what lets the j loop stay in vector registers.
    if (n <= 256) {
        double acc0[256], acc1[256];
        int i = 0;
        for (; i + 1 < m; i += 2) {
            double* c0 = c + static_cast<size_t>(i) * ldc;
            double* c1 = c0 + ldc;
            for (int j = 0; j < n; ++j) {
                acc0[j] = c0[j];
                acc1[j] = c1[j];
            }
            const double* a0 = a + static_cast<size_t>(i) * lda;
            const double* a1 = a0 + lda;
            for (int p = 0; p < k; ++p) {
                const double x0 = a0[p], x1 = a1[p];
                const double* bp = b + static_cast<size_t>(p) * ldb;
                for (int j = 0; j < n; ++j) {
                    acc0[j] += x0 * bp[j];
                    acc1[j] += x1 * bp[j];
                }
            }
            for (int j = 0; j < n; ++j) {
                c0[j] = acc0[j];
                c1[j] = acc1[j];
            }
        }
        for (; i < m; ++i) {
            double* ci = c + static_cast<size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) acc0[j] = ci[j];
            const double* ai = a + static_cast<size_t>(i) * lda;
            for (int p = 0; p < k; ++p) {
                const double aip = ai[p];
                const double* bp = b + static_cast<size_t>(p) * ldb;
                for (int j = 0; j < n; ++j) acc0[j] += aip * bp[j];
            }
            for (int j = 0; j < n; ++j) ci[j] = acc0[j];
        }
        return;
    }
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * ldc;
        const double* ai = a + static_cast<size_t>(i) * lda;
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + static_cast<size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_tn_raw_acc(double* __restrict c, const double* __restrict a, const double* __restrict b,
                     int m, int k, int n, int lda, int ldb, int ldc) {
    // Four accumulated rank-1 updates per sweep over C; the k dimension is
    // the tall one here (node count), so this quarters the C traffic.
    int p = 0;
    for (; p + 3 < k; p += 4) {
        const double* a0 = a + static_cast<size_t>(p) * lda;
        const double* a1 = a0 + lda;
        const double* a2 = a1 + lda;
        const double* a3 = a2 + lda;
        const double* b0 = b + static_cast<size_t>(p) * ldb;
        const double* b1 = b0 + ldb;
        const double* b2 = b1 + ldb;
        const double* b3 = b2 + ldb;
        for (int i = 0; i < m; ++i) {
            const double x0 = a0[i], x1 = a1[i], x2 = a2[i], x3 = a3[i];
            double* ci = c + static_cast<size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) ci[j] += x0 * b0[j] + x1 * b1[j] + x2 * b2[j] + x3 * b3[j];
        }
    }
    for (; p < k; ++p) {
        const double* ap = a + static_cast<size_t>(p) * lda;
        const double* bp = b + static_cast<size_t>(p) * ldb;
        for (int i = 0; i < m; ++i) {
            const double api = ap[i];
            double* ci = c + static_cast<size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void gemm_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.rows(), "gemm");
    gemm_raw_acc(c.data(), a.data(), b.data(), a.rows(), a.cols(), b.cols(), a.cols(), b.cols(),
                 c.cols());
}

Matrix gemm(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    gemm_acc(c, a, b);
    return c;
}

void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.rows(), b.rows(), "gemm_tn");
    if (c.rows() != a.cols() || c.cols() != b.cols())
        throw std::invalid_argument("gemm_tn: bad output shape");
    gemm_tn_raw_acc(c.data(), a.data(), b.data(), a.cols(), a.rows(), b.cols(), a.cols(), b.cols(),
                    c.cols());
}

void gemm_nt_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    check_mul(a, b, a.cols(), b.cols(), "gemm_nt");
    if (c.rows() != a.rows() || c.cols() != b.rows())
        throw std::invalid_argument("gemm_nt: bad output shape");
    // Materializing B^T keeps the inner loop contiguous; B is always the
    // small operand here.
    const Matrix bt = b.transposed();
    gemm_raw_acc(c.data(), a.data(), bt.data(), a.rows(), a.cols(), bt.cols(), a.cols(), bt.cols(),
                 c.cols());
}

void add_inplace(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double* pa = a.data();
    const double* pb = b.data();
    for (size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void add_scaled_inplace(Matrix& a, const Matrix& b, double s) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add_scaled: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double* pa = a.data();
    const double* pb = b.data();
    for (size_t i = 0; i < a.size(); ++i) pa[i] += s * pb[i];
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("hadamard: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Matrix c(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace cama
