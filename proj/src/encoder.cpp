#include "caki/encoder.hpp"

#include <cmath>
#include <set>

#include <openssl/evp.h>

#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

namespace {

// Per-entry scale of the template pseudo-embedding.
constexpr double kTemplateScale = 0.1;

}  // namespace

Digest sha256(std::span<const std::uint8_t> bytes) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw Error("sha256 failed");
    }
    return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

std::string EncoderFingerprint::to_string() const {
    const char* k = kind == BackendKind::synthetic ? "synthetic"
                    : kind == BackendKind::offline ? "offline"
                                                   : "unknown";
    return std::string(k) + "(D=" + std::to_string(dim) + ", Dt=" + std::to_string(token_dim) +
           ", L=" + std::to_string(prompt_len) + ", digest=" + to_hex(digest).substr(0, 16) + ")";
}

void ClassCatalog::validate() const {
    if (names.size() != class_tokens.size()) {
        throw InvalidArgument("catalog: name and token counts differ");
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) {
            throw InvalidArgument("catalog: duplicate class name '" + n + "'");
        }
    }
    for (const auto& t : class_tokens) {
        if (t.size() != class_tokens.front().size() || t.empty()) {
            throw InvalidArgument("catalog: inconsistent class token width");
        }
    }
}

ClassCatalog ClassCatalog::subset(std::span<const std::size_t> indices) const {
    ClassCatalog out;
    for (std::size_t i : indices) {
        if (i >= size()) {
            throw InvalidArgument("catalog: index " + std::to_string(i) + " out of range");
        }
        out.names.push_back(names[i]);
        out.class_tokens.push_back(class_tokens[i]);
    }
    return out;
}

TokenMatrix Encoder::encode_text_vjp(const TokenMatrix&, std::span<const double>,
                                     std::span<const double>) const {
    throw Unsupported("encoder backend " + fingerprint().to_string() +
                      " has no differentiable text path");
}

void Encoder::check_prompt_shape(const TokenMatrix& prompt) const {
    if (prompt.rows() != prompt_len() || prompt.cols() != token_dim()) {
        throw InvalidArgument("prompt shape " + std::to_string(prompt.rows()) + "x" +
                              std::to_string(prompt.cols()) + " does not match encoder " +
                              std::to_string(prompt_len()) + "x" + std::to_string(token_dim()));
    }
}

TokenMatrix template_prompt(std::size_t prompt_len, std::size_t token_dim) {
    if (prompt_len == 0 || token_dim == 0) {
        throw InvalidArgument("template prompt needs positive dimensions");
    }
    TokenMatrix p(prompt_len, token_dim);
    for (std::size_t r = 0; r < prompt_len; ++r) {
        Rng rng(mix_seed({stable_hash(kPromptTemplate), r}));
        for (double& x : p.row(r)) {
            x = kTemplateScale * gaussian(rng);
        }
    }
    return p;
}

}  // namespace caki
