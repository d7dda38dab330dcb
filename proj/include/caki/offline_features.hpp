#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "caki/encoder.hpp"

namespace caki {

inline constexpr char kFeatureMagic[8] = {'C', 'A', 'K', 'I', 'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureFormatVersion = 1;
/// CLIP's trained logit scale; features in these files are assumed to come from CLIP-like encoders.
inline constexpr double kOfflineLogitScale = 100.0;

/// In-memory form of an offline feature file.
///
/// Layout (little-endian):
///   "CAKIFEAT" | version u32 | D u32 | Dt u32 | C u32 | N u64
///   C x { name_len u16 | name bytes | Dt x f32 class token | D x f32 template text feature }
///   N x { class id u32 | D x f32 image feature }
struct FeatureRecord {
    std::uint32_t label = 0;
    Vector feature;
};

struct OfflineFeatureSet {
    std::uint32_t dim = 0;
    std::uint32_t token_dim = 0;
    ClassCatalog catalog;
    std::vector<Vector> text_features;  ///< per class, under the template prompt
    std::vector<FeatureRecord> records;
};

std::vector<std::uint8_t> serialize_features(const OfflineFeatureSet& set);

/// Parses and renormalizes. `renormalized` counts vectors whose norm moved by more than 1e-3.
struct ParsedFeatures {
    OfflineFeatureSet set;
    std::size_t renormalized = 0;
};
ParsedFeatures parse_features(std::span<const std::uint8_t> bytes);

/// Exports image features for `samples` and template text features for every
/// class of `catalog` from any encoder.
OfflineFeatureSet export_features(const Encoder& encoder, const ClassCatalog& catalog,
                                  std::span<const Sample> samples);

void save_offline_features(const OfflineFeatureSet& set, const std::filesystem::path& path);

/// Serves stored features. Record ids are positions in the record section.
///
/// Text features: the stored template feature of the class plus a frozen
/// linear head applied to (meanpool(P) - meanpool(template)). The head is
/// seeded from the file digest, so the template prompt reproduces the stored
/// feature and other prompts still move the text embedding. No VJP.
class OfflineEncoder final : public Encoder {
public:
    OfflineEncoder(OfflineFeatureSet set, const Digest& file_digest,
                   std::size_t prompt_len = kDefaultPromptTokens);

    std::size_t dim() const override { return set_.dim; }
    std::size_t token_dim() const override { return set_.token_dim; }
    std::size_t prompt_len() const override { return prompt_len_; }
    const EncoderFingerprint& fingerprint() const override { return fingerprint_; }
    double logit_scale() const override { return kOfflineLogitScale; }

    Embedding encode_image(const Sample& sample) const override;
    Embedding encode_text(const TokenMatrix& prompt,
                          std::span<const double> class_token) const override;
    std::vector<Sample> draw_samples(std::uint32_t label, std::size_t count,
                                     std::uint64_t seed) const override;

    std::size_t record_count() const noexcept { return set_.records.size(); }
    const OfflineFeatureSet& features() const noexcept { return set_; }

private:
    OfflineFeatureSet set_;
    std::size_t prompt_len_;
    EncoderFingerprint fingerprint_;
    Matrix head_;
    Vector template_mean_;
};

struct OfflineWorld {
    std::shared_ptr<const OfflineEncoder> encoder;
    ClassCatalog catalog;
    std::size_t renormalization_warnings = 0;
};

OfflineWorld load_offline_features(const std::filesystem::path& path,
                                   std::size_t prompt_len = kDefaultPromptTokens);

}  // namespace caki
