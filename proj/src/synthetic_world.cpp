#include "caki/synthetic_world.hpp"

#include <bit>
#include <cmath>
#include <cstdio>

#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

namespace {

// Bumped whenever the generation procedure changes, so old fingerprints stop matching.
constexpr std::uint64_t kGeneratorVersion = 1;
constexpr double kBiasScale = 0.25;

enum Stream : std::uint64_t {
    kPromptMap = 1,
    kClassMap,
    kBias,
    kDomainShift,
    kClassToken,
    kClassShift,
    kImageNoise,
    kSampleIds,
};

Vector gaussian_vector(std::size_t n, double scale, std::uint64_t seed) {
    Rng rng(seed);
    Vector v(n);
    for (double& x : v) {
        x = scale * gaussian(rng);
    }
    return v;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, std::uint64_t seed) {
    return Matrix(rows, cols, gaussian_vector(rows * cols, scale, seed));
}

void add_into(Vector& acc, std::span<const double> v) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += v[i];
    }
}

EncoderFingerprint synthetic_fingerprint(const SyntheticWorldSpec& s) {
    std::vector<std::uint8_t> bytes;
    auto put = [&bytes](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    };
    put(kGeneratorVersion);
    put(s.seed);
    put(s.classes);
    put(s.dim);
    put(s.token_dim);
    put(s.prompt_len);
    put(std::bit_cast<std::uint64_t>(s.sigma));
    put(std::bit_cast<std::uint64_t>(s.domain_shift_scale));
    put(std::bit_cast<std::uint64_t>(s.class_shift_scale));
    put(std::bit_cast<std::uint64_t>(s.prompt_gain));
    put(std::bit_cast<std::uint64_t>(s.logit_scale));
    return {BackendKind::synthetic, s.dim, s.token_dim, s.prompt_len, sha256(bytes)};
}

}  // namespace

void SyntheticWorldSpec::validate() const {
    if (classes < 1 || dim < 1 || token_dim < 1 || prompt_len < 1) {
        throw InvalidArgument("synthetic world: all dimensions must be >= 1");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw InvalidArgument("synthetic world: sigma must be >= 0");
    }
    if (!(domain_shift_scale >= 0.0) || !(class_shift_scale >= 0.0) ||
        !std::isfinite(domain_shift_scale) || !std::isfinite(class_shift_scale)) {
        throw InvalidArgument("synthetic world: shift scales must be finite and >= 0");
    }
    if (!(prompt_gain > 0.0) || !std::isfinite(prompt_gain)) {
        throw InvalidArgument("synthetic world: prompt_gain must be > 0");
    }
    if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) {
        throw InvalidArgument("synthetic world: logit_scale must be > 0");
    }
}

std::string synthetic_class_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%03zu", index);
    return buf;
}

SyntheticEncoder::SyntheticEncoder(const SyntheticWorldSpec& spec) : spec_(spec) {
    spec_.validate();
    fingerprint_ = synthetic_fingerprint(spec_);

    const std::size_t d = spec_.dim;
    const std::size_t dt = spec_.token_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const std::uint64_t s = spec_.seed;

    prompt_map_ = gaussian_matrix(d, dt, spec_.prompt_gain * inv_sqrt_d, mix_seed({s, kPromptMap}));
    class_map_ = gaussian_matrix(d, dt, inv_sqrt_d, mix_seed({s, kClassMap}));
    bias_ = gaussian_vector(d, kBiasScale * inv_sqrt_d, mix_seed({s, kBias}));
    domain_shift_ =
        gaussian_vector(d, spec_.domain_shift_scale * inv_sqrt_d, mix_seed({s, kDomainShift}));

    for (std::size_t c = 0; c < spec_.classes; ++c) {
        class_tokens_.push_back(normalized(gaussian_vector(dt, 1.0, mix_seed({s, kClassToken, c}))));
        class_shift_.push_back(
            gaussian_vector(d, spec_.class_shift_scale * inv_sqrt_d, mix_seed({s, kClassShift, c})));

        // Same accumulation order as the zero-prompt text path, so a shift-free
        // world reproduces it bit for bit.
        Vector u = matvec(class_map_, class_tokens_.back());
        add_into(u, bias_);
        add_into(u, domain_shift_);
        add_into(u, class_shift_.back());
        prototypes_.push_back(normalized(u));
    }
}

Embedding SyntheticEncoder::encode_image(const Sample& sample) const {
    if (sample.label >= spec_.classes) {
        throw NotFound("synthetic sample references class " + std::to_string(sample.label) +
                       " but the world has " + std::to_string(spec_.classes));
    }
    const Embedding& mu = prototypes_[sample.label];
    if (spec_.sigma == 0.0) {
        return mu;
    }
    Vector noisy = gaussian_vector(spec_.dim, spec_.sigma,
                                   mix_seed({spec_.seed, kImageNoise, sample.label, sample.id}));
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        noisy[i] += mu[i];
    }
    return normalized(noisy);
}

Vector SyntheticEncoder::pre_normalized_text(const TokenMatrix& prompt,
                                             std::span<const double> class_token) const {
    check_prompt_shape(prompt);
    if (class_token.size() != spec_.token_dim) {
        throw InvalidArgument("class token width " + std::to_string(class_token.size()) +
                              " does not match Dt=" + std::to_string(spec_.token_dim));
    }
    Vector u = matvec(prompt_map_, mean_rows(prompt));
    add_into(u, matvec(class_map_, class_token));
    add_into(u, bias_);
    return u;
}

Embedding SyntheticEncoder::encode_text(const TokenMatrix& prompt,
                                        std::span<const double> class_token) const {
    return normalized(pre_normalized_text(prompt, class_token));
}

TokenMatrix SyntheticEncoder::encode_text_vjp(const TokenMatrix& prompt,
                                              std::span<const double> class_token,
                                              std::span<const double> cotangent) const {
    if (cotangent.size() != spec_.dim) {
        throw InvalidArgument("cotangent length " + std::to_string(cotangent.size()) +
                              " does not match D=" + std::to_string(spec_.dim));
    }
    const Vector u = pre_normalized_text(prompt, class_token);
    const double norm_u = l2_norm(u);
    if (!(norm_u > 0.0)) {
        throw DegenerateInput("text pre-activation has zero norm");
    }
    Vector t = u;
    for (double& x : t) {
        x /= norm_u;
    }
    // Pull back through t = u / |u|:  du = (I - t t^T) g / |u|.
    const double along = dot(t, cotangent);
    Vector du(spec_.dim);
    for (std::size_t i = 0; i < du.size(); ++i) {
        du[i] = (cotangent[i] - t[i] * along) / norm_u;
    }
    // Then through A and the mean-pool, which spreads 1/L to every row.
    Vector d_mean = matvec_transposed(prompt_map_, du);
    const double inv_len = 1.0 / static_cast<double>(spec_.prompt_len);
    TokenMatrix grad(prompt.rows(), prompt.cols());
    for (std::size_t r = 0; r < grad.rows(); ++r) {
        auto row = grad.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = d_mean[c] * inv_len;
        }
    }
    return grad;
}

std::vector<Sample> SyntheticEncoder::draw_samples(std::uint32_t label, std::size_t count,
                                                   std::uint64_t seed) const {
    if (label >= spec_.classes) {
        throw NotFound("synthetic world has no class " + std::to_string(label));
    }
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back({label, mix_seed({seed, kSampleIds, label, i})});
    }
    return out;
}

SyntheticWorld make_synthetic_world(const SyntheticWorldSpec& spec) {
    auto encoder = std::make_shared<const SyntheticEncoder>(spec);
    ClassCatalog catalog;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        catalog.names.push_back(synthetic_class_name(c));
        catalog.class_tokens.push_back(encoder->class_token(c));
    }
    return {std::move(encoder), std::move(catalog)};
}

}  // namespace caki
