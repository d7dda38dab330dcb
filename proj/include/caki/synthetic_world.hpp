#pragma once

#include <cstdint>
#include <memory>

#include "caki/encoder.hpp"

namespace caki {

/// Parameters of the seeded stand-in for a vision-language encoder.
///
/// Text features are normalize(A * meanpool(P) + B * e_c + b). Image
/// prototypes are normalize(B * e_c + b + m + r_c): `m` is a shift shared by
/// every class (recoverable by one shared prompt) and `r_c` a per-class
/// residual (only reachable by class-specific prompts).
struct SyntheticWorldSpec {
    std::uint64_t seed = 7;
    std::uint32_t classes = 32;
    std::uint32_t dim = 32;
    std::uint32_t token_dim = 16;
    std::uint32_t prompt_len = static_cast<std::uint32_t>(kDefaultPromptTokens);
    double sigma = 0.05;               ///< per-component image noise
    double domain_shift_scale = 1.0;   ///< expected norm of m
    double class_shift_scale = 1.0;    ///< expected norm of each r_c
    double prompt_gain = 4.0;          ///< expected |A v| / |v|
    double logit_scale = 20.0;         ///< frozen multiplier on cosine logits

    void validate() const;
};

class SyntheticEncoder final : public Encoder {
public:
    explicit SyntheticEncoder(const SyntheticWorldSpec& spec);

    std::size_t dim() const override { return spec_.dim; }
    std::size_t token_dim() const override { return spec_.token_dim; }
    std::size_t prompt_len() const override { return spec_.prompt_len; }
    const EncoderFingerprint& fingerprint() const override { return fingerprint_; }
    double logit_scale() const override { return spec_.logit_scale; }

    Embedding encode_image(const Sample& sample) const override;
    Embedding encode_text(const TokenMatrix& prompt,
                          std::span<const double> class_token) const override;

    bool supports_vjp() const override { return true; }
    TokenMatrix encode_text_vjp(const TokenMatrix& prompt, std::span<const double> class_token,
                                std::span<const double> cotangent) const override;

    std::vector<Sample> draw_samples(std::uint32_t label, std::size_t count,
                                     std::uint64_t seed) const override;

    const SyntheticWorldSpec& spec() const noexcept { return spec_; }
    const Matrix& prompt_map() const noexcept { return prompt_map_; }
    const Matrix& class_map() const noexcept { return class_map_; }
    const Vector& text_bias() const noexcept { return bias_; }
    const Vector& domain_shift() const noexcept { return domain_shift_; }
    const Vector& class_shift(std::size_t c) const { return class_shift_.at(c); }
    const Embedding& prototype(std::size_t c) const { return prototypes_.at(c); }
    const Vector& class_token(std::size_t c) const { return class_tokens_.at(c); }

private:
    Vector pre_normalized_text(const TokenMatrix& prompt, std::span<const double> class_token) const;

    SyntheticWorldSpec spec_;
    EncoderFingerprint fingerprint_;
    Matrix prompt_map_;  // A: D x Dt
    Matrix class_map_;   // B: D x Dt
    Vector bias_;
    Vector domain_shift_;
    std::vector<Vector> class_tokens_;
    std::vector<Vector> class_shift_;
    std::vector<Embedding> prototypes_;
};

struct SyntheticWorld {
    std::shared_ptr<const SyntheticEncoder> encoder;
    ClassCatalog catalog;
};

SyntheticWorld make_synthetic_world(const SyntheticWorldSpec& spec);

/// Canonical display name for synthetic class `index`.
std::string synthetic_class_name(std::size_t index);

}  // namespace caki
