#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace caki {

/// Dense real vector. Used for raw scores, features and token embeddings.
using Vector = std::vector<double>;

/// A feature vector with unit L2 norm. Every embedding handed out by an
/// encoder backend satisfies this; nothing in the type enforces it.
using Embedding = Vector;

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// An L x Dt learnable prompt: one row per prompt token.
using TokenMatrix = Matrix;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Returns v / |v|. Throws DegenerateInput for a zero vector.
Vector normalized(std::span<const double> v);

/// y = M x
Vector matvec(const Matrix& m, std::span<const double> x);
/// y = M^T x
Vector matvec_transposed(const Matrix& m, std::span<const double> x);

/// Column-wise mean over the rows of `m`.
Vector mean_rows(const Matrix& m);

bool all_finite(std::span<const double> v);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

/// softmax(scores / temperature), computed with max-subtraction.
Vector softmax(std::span<const double> scores, double temperature);

/// <a, b> / (|a| |b|). Throws DegenerateInput when either norm is zero.
double cosine(std::span<const double> a, std::span<const double> b);

/// Probabilities below this are clamped before taking the log.
inline constexpr double kLogFloor = 1e-300;

/// -log(probabilities[target]), with the argument floored at kLogFloor.
double cross_entropy(std::span<const double> probabilities, std::size_t target);

/// -log softmax(scores / temperature)[target], computed from the scores
/// directly so that near-certain predictions keep relative precision.
double softmax_cross_entropy(std::span<const double> scores, double temperature,
                             std::size_t target);

struct AdamWHyper {
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

struct AdamWState {
    Matrix first_moment;
    Matrix second_moment;
    std::uint64_t step_count = 0;

    static AdamWState zeros_like(const Matrix& params);
};

/// In-place AdamW update with decoupled weight decay and bias-corrected moments.
void adamw_update(Matrix& params, const Matrix& grads, AdamWState& state, const AdamWHyper& hyper);

struct AdamWResult {
    Matrix params;
    AdamWState state;
};

/// Value-semantics wrapper over adamw_update.
AdamWResult adamw_step(const Matrix& params, const Matrix& grads, const AdamWState& state,
                       const AdamWHyper& hyper);

}  // namespace caki
