#include "caki/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "caki/error.hpp"

namespace caki {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw InvalidArgument("matrix value count " + std::to_string(values_.size()) +
                              " does not match " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("dot: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector normalized(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateInput("cannot normalize a zero or non-finite vector");
    }
    Vector out(v.begin(), v.end());
    for (double& x : out) {
        x /= n;
    }
    return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.cols()) {
        throw InvalidArgument("matvec: expected length " + std::to_string(m.cols()) + ", got " +
                              std::to_string(x.size()));
    }
    Vector y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        y[r] = dot(m.row(r), x);
    }
    return y;
}

Vector matvec_transposed(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.rows()) {
        throw InvalidArgument("matvec_transposed: expected length " + std::to_string(m.rows()) +
                              ", got " + std::to_string(x.size()));
    }
    Vector y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            y[c] += row[c] * x[r];
        }
    }
    return y;
}

Vector mean_rows(const Matrix& m) {
    Vector mean(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            mean[c] += row[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(m.rows());
    for (double& x : mean) {
        x *= inv;
    }
    return mean;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) {
        throw InvalidArgument("argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

Vector softmax(std::span<const double> scores, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("softmax: temperature must be positive and finite");
    }
    if (scores.empty()) {
        throw InvalidArgument("softmax: empty score vector");
    }
    if (!all_finite(scores)) {
        throw InvalidArgument("softmax: non-finite score");
    }
    const double top = scores[argmax(scores)];
    Vector out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - top) / temperature);
        total += out[i];
    }
    for (double& x : out) {
        x /= total;
    }
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("cosine: length mismatch");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DegenerateInput("cosine: zero-norm input");
    }
    return dot(a, b) / (na * nb);
}

double cross_entropy(std::span<const double> probabilities, std::size_t target) {
    if (target >= probabilities.size()) {
        throw InvalidArgument("cross_entropy: target index " + std::to_string(target) +
                              " out of range for " + std::to_string(probabilities.size()) +
                              " classes");
    }
    return -std::log(std::max(probabilities[target], kLogFloor));
}

double softmax_cross_entropy(std::span<const double> scores, double temperature,
                             std::size_t target) {
    if (target >= scores.size()) {
        throw InvalidArgument("softmax_cross_entropy: target index " + std::to_string(target) +
                              " out of range for " + std::to_string(scores.size()) + " classes");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("softmax_cross_entropy: temperature must be positive and finite");
    }
    if (!all_finite(scores)) throw InvalidArgument("softmax_cross_entropy: non-finite score");
    const double top = *std::max_element(scores.begin(), scores.end()) / temperature;
    const double zt = scores[target] / temperature;
    if (zt == top) {
        // log1p keeps full relative precision when the target dominates
        double rest = 0.0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (j != target) rest += std::exp(scores[j] / temperature - top);
        }
        return std::log1p(rest);
    }
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s / temperature - top);
    return (top - zt) + std::log(sum);
}

void AdamWHyper::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("adamw: learning_rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw InvalidArgument("adamw: beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw InvalidArgument("adamw: beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw InvalidArgument("adamw: epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("adamw: weight_decay must be >= 0");
}

AdamWState AdamWState::zeros_like(const Matrix& params) {
    return {Matrix(params.rows(), params.cols()), Matrix(params.rows(), params.cols()), 0};
}

void adamw_update(Matrix& params, const Matrix& grads, AdamWState& state, const AdamWHyper& hyper) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment)) {
        throw InvalidArgument("adamw_step: parameter, gradient and moment shapes differ");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(hyper.beta1, t);
    const double bias2 = 1.0 - std::pow(hyper.beta2, t);

    auto p = params.values();
    auto g = grads.values();
    auto m = state.first_moment.values();
    auto v = state.second_moment.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] -= hyper.learning_rate * hyper.weight_decay * p[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        p[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
}

AdamWResult adamw_step(const Matrix& params, const Matrix& grads, const AdamWState& state,
                       const AdamWHyper& hyper) {
    AdamWResult out{params, state};
    adamw_update(out.params, grads, out.state, hyper);
    return out;
}

}  // namespace caki
