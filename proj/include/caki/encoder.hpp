#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caki/numerics.hpp"

namespace caki {

/// Text template whose pseudo-embedding seeds every freshly initialized prompt.
inline constexpr std::string_view kPromptTemplate = "a photo of a";
inline constexpr std::size_t kDefaultPromptTokens = 4;

enum class BackendKind : std::uint8_t {
    synthetic = 1,
    offline = 2,
};

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

/// Identifies an encoder configuration. Two backends with equal fingerprints
/// produce identical encodings.
struct EncoderFingerprint {
    BackendKind kind = BackendKind::synthetic;
    std::uint32_t dim = 0;
    std::uint32_t token_dim = 0;
    std::uint32_t prompt_len = 0;
    Digest digest{};

    std::string to_string() const;
    friend bool operator==(const EncoderFingerprint&, const EncoderFingerprint&) = default;
};

/// Ordered class names with their token embeddings (width Dt). The position
/// of a name is its class index.
struct ClassCatalog {
    std::vector<std::string> names;
    std::vector<Vector> class_tokens;

    std::size_t size() const noexcept { return names.size(); }

    /// Throws InvalidArgument on duplicate names or inconsistent token widths.
    void validate() const;

    /// Catalog restricted to `indices`, in the given order.
    ClassCatalog subset(std::span<const std::size_t> indices) const;
};

/// A drawable input. `label` is the class index in the full catalog; `id` is
/// the noise key (synthetic) or the record number (offline).
struct Sample {
    std::uint32_t label = 0;
    std::uint64_t id = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Frozen image/text encoder pair. Implementations are immutable after
/// construction, so every method is safe to call concurrently.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual std::size_t dim() const = 0;
    virtual std::size_t token_dim() const = 0;
    virtual std::size_t prompt_len() const = 0;
    virtual const EncoderFingerprint& fingerprint() const = 0;

    /// Frozen multiplier applied to cosine similarities before the temperature
    /// (CLIP's exp(logit_scale)).
    virtual double logit_scale() const = 0;

    virtual Embedding encode_image(const Sample& sample) const = 0;

    /// Text feature of the prompt followed by one class token.
    virtual Embedding encode_text(const TokenMatrix& prompt,
                                  std::span<const double> class_token) const = 0;

    virtual bool supports_vjp() const { return false; }

    /// Gradient of <cotangent, encode_text(prompt, class_token)> with respect
    /// to the prompt. Backends without a differentiable text path throw
    /// Unsupported.
    virtual TokenMatrix encode_text_vjp(const TokenMatrix& prompt,
                                        std::span<const double> class_token,
                                        std::span<const double> cotangent) const;

    /// `count` distinct samples of class `label`, chosen deterministically from `seed`.
    virtual std::vector<Sample> draw_samples(std::uint32_t label, std::size_t count,
                                             std::uint64_t seed) const = 0;

protected:
    void check_prompt_shape(const TokenMatrix& prompt) const;
};

/// Deterministic pseudo-embedding of kPromptTemplate, one row per token.
TokenMatrix template_prompt(std::size_t prompt_len, std::size_t token_dim);

}  // namespace caki
