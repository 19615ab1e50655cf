#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cama {

// Returns a zeroed buffer, preferring a thread-local free list over the
// allocator; training builds and tears down tapes millions of times.
std::vector<double> pooled_buffer(size_t n);
// As above but with unspecified contents; for callers that overwrite fully.
std::vector<double> pooled_buffer_raw(size_t n);
void release_buffer(std::vector<double>&& v);

// Dense row-major matrix of doubles. All linear algebra in this project runs
// on graphs with at most a few hundred nodes, so everything stays dense.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols)
        : rows_(rows), cols_(cols), data_(pooled_buffer(static_cast<size_t>(rows) * cols)) {}
    Matrix(int rows, int cols, double fill) : Matrix(rows, cols) {
        std::fill(data_.begin(), data_.end(), fill);
    }
    Matrix(const Matrix& o)
        : rows_(o.rows_), cols_(o.cols_), data_(pooled_buffer_raw(o.data_.size())) {
        std::copy(o.data_.begin(), o.data_.end(), data_.begin());
    }
    // Contents unspecified; caller promises to overwrite every entry.
    static Matrix uninitialized(int rows, int cols) {
        Matrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.data_ = pooled_buffer_raw(static_cast<size_t>(rows) * cols);
        return m;
    }
    Matrix(Matrix&& o) noexcept = default;
    Matrix& operator=(const Matrix& o) {
        if (this != &o) {
            if (data_.size() != o.data_.size()) {
                release_buffer(std::move(data_));
                data_ = pooled_buffer_raw(o.data_.size());
            }
            rows_ = o.rows_;
            cols_ = o.cols_;
            std::copy(o.data_.begin(), o.data_.end(), data_.begin());
        }
        return *this;
    }
    Matrix& operator=(Matrix&& o) noexcept {
        if (this != &o) {
            release_buffer(std::move(data_));
            rows_ = o.rows_;
            cols_ = o.cols_;
            data_ = std::move(o.data_);
            o.rows_ = o.cols_ = 0;
        }
        return *this;
    }
    ~Matrix() { release_buffer(std::move(data_)); }

    static Matrix identity(int n);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void resize(int rows, int cols) {
        release_buffer(std::move(data_));
        rows_ = rows;
        cols_ = cols;
        data_ = pooled_buffer(static_cast<size_t>(rows) * cols);
    }

    Matrix transposed() const;

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

    std::string shape_str() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C += A * B
void gemm_acc(Matrix& c, const Matrix& a, const Matrix& b);
// C = A * B
Matrix gemm(const Matrix& a, const Matrix& b);
// C += A^T * B
void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b);
// C += A * B^T
void gemm_nt_acc(Matrix& c, const Matrix& a, const Matrix& b);

// Raw strided kernels for row-range views (block-diagonal batched ops).
// c(m x n) += a(m x k) * b(k x n)
void gemm_raw_acc(double* c, const double* a, const double* b, int m, int k, int n, int lda, int ldb,
                  int ldc);
// c(m x n) += a^T where a is (k x m), b is (k x n)
void gemm_tn_raw_acc(double* c, const double* a, const double* b, int m, int k, int n, int lda,
                     int ldb, int ldc);

void add_inplace(Matrix& a, const Matrix& b);         // a += b
void add_scaled_inplace(Matrix& a, const Matrix& b, double s);  // a += s*b
Matrix hadamard(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace cama
