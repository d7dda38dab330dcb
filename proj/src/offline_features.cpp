#include "caki/offline_features.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <limits>
#include <set>

#include "caki/binary_io.hpp"
#include "caki/error.hpp"
#include "caki/random.hpp"

namespace caki {

namespace {

constexpr double kRenormTolerance = 1e-3;
constexpr double kHeadGain = 4.0;

// Renormalizes in place and reports whether the norm was off by more than the tolerance.
bool renormalize(Vector& v, std::uint64_t offset) {
    const double n = l2_norm(v);
    if (!(n > 0.0)) {
        throw FormatError("zero-norm feature vector", offset);
    }
    for (double& x : v) x /= n;
    return std::abs(n - 1.0) > kRenormTolerance;
}

}  // namespace

std::vector<std::uint8_t> serialize_features(const OfflineFeatureSet& set) {
    set.catalog.validate();
    if (set.text_features.size() != set.catalog.size()) {
        throw InvalidArgument("feature set: one text feature per class required");
    }
    ByteWriter w;
    w.text({kFeatureMagic, sizeof kFeatureMagic});
    w.u32(kFeatureFormatVersion);
    w.u32(set.dim);
    w.u32(set.token_dim);
    w.u32(static_cast<std::uint32_t>(set.catalog.size()));
    w.u64(set.records.size());
    for (std::size_t c = 0; c < set.catalog.size(); ++c) {
        const auto& name = set.catalog.names[c];
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw InvalidArgument("class name too long: " + name.substr(0, 32) + "...");
        }
        if (set.catalog.class_tokens[c].size() != set.token_dim ||
            set.text_features[c].size() != set.dim) {
            throw InvalidArgument("feature set: class '" + name + "' has wrong vector widths");
        }
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.text(name);
        w.f32s(set.catalog.class_tokens[c]);
        w.f32s(set.text_features[c]);
    }
    for (const auto& r : set.records) {
        if (r.label >= set.catalog.size() || r.feature.size() != set.dim) {
            throw InvalidArgument("feature set: malformed record");
        }
        w.u32(r.label);
        w.f32s(r.feature);
    }
    return w.release();
}

ParsedFeatures parse_features(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    ParsedFeatures out;
    auto& set = out.set;

    auto magic = r.take(sizeof kFeatureMagic, "header magic");
    if (std::memcmp(magic.data(), kFeatureMagic, sizeof kFeatureMagic) != 0) {
        throw FormatError("bad magic: not a CAKIFEAT feature file", 0);
    }
    const std::uint64_t version_at = r.offset();
    const std::uint32_t version = r.u32("header version");
    if (version != kFeatureFormatVersion) {
        throw FormatError("unsupported feature format version " + std::to_string(version),
                          version_at);
    }
    const std::uint64_t dims_at = r.offset();
    set.dim = r.u32("header dimensions");
    set.token_dim = r.u32("header dimensions");
    const std::uint32_t class_count = r.u32("header class count");
    const std::uint64_t record_count = r.u64("header record count");
    if (set.dim == 0 || set.token_dim == 0) {
        throw FormatError("dimension mismatch: D and Dt must be positive", dims_at);
    }

    std::set<std::string> seen;
    for (std::uint32_t c = 0; c < class_count; ++c) {
        const std::uint64_t entry_at = r.offset();
        const std::uint16_t len = r.u16("class entries");
        auto name_bytes = r.take(len, "class entries");
        std::string name(name_bytes.begin(), name_bytes.end());
        if (!seen.insert(name).second) {
            throw FormatError("duplicate class name '" + name + "'", entry_at);
        }
        Vector token = r.f32s(set.token_dim, "class entries");
        const std::uint64_t text_at = r.offset();
        Vector text = r.f32s(set.dim, "class entries");
        if (renormalize(text, text_at)) ++out.renormalized;
        set.catalog.names.push_back(std::move(name));
        set.catalog.class_tokens.push_back(std::move(token));
        set.text_features.push_back(std::move(text));
    }

    // Each record is at least 4 + 4*D bytes; reject absurd counts before allocating.
    const std::uint64_t record_bytes = 4 + 4ULL * set.dim;
    if (record_count > r.remaining() / record_bytes) {
        throw FormatError("truncated file: missing records section (" +
                              std::to_string(record_count) + " records declared)",
                          r.offset());
    }
    set.records.reserve(record_count);
    for (std::uint64_t i = 0; i < record_count; ++i) {
        const std::uint64_t rec_at = r.offset();
        FeatureRecord rec;
        rec.label = r.u32("records section");
        if (rec.label >= class_count) {
            throw FormatError("record " + std::to_string(i) + " references unknown class id " +
                                  std::to_string(rec.label),
                              rec_at);
        }
        rec.feature = r.f32s(set.dim, "records section");
        if (renormalize(rec.feature, rec_at)) ++out.renormalized;
        set.records.push_back(std::move(rec));
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes after records section", r.offset());
    }
    return out;
}

OfflineFeatureSet export_features(const Encoder& encoder, const ClassCatalog& catalog,
                                  std::span<const Sample> samples) {
    OfflineFeatureSet set;
    set.dim = static_cast<std::uint32_t>(encoder.dim());
    set.token_dim = static_cast<std::uint32_t>(encoder.token_dim());
    set.catalog = catalog;
    const TokenMatrix tmpl = template_prompt(encoder.prompt_len(), encoder.token_dim());
    for (const auto& token : catalog.class_tokens) {
        set.text_features.push_back(encoder.encode_text(tmpl, token));
    }
    for (const auto& s : samples) {
        set.records.push_back({s.label, encoder.encode_image(s)});
    }
    return set;
}

void save_offline_features(const OfflineFeatureSet& set, const std::filesystem::path& path) {
    write_file(path, serialize_features(set));
}

OfflineEncoder::OfflineEncoder(OfflineFeatureSet set, const Digest& file_digest,
                               std::size_t prompt_len)
    : set_(std::move(set)), prompt_len_(prompt_len) {
    if (prompt_len_ == 0) {
        throw InvalidArgument("offline encoder: prompt length must be >= 1");
    }
    fingerprint_ = {BackendKind::offline, set_.dim, set_.token_dim,
                    static_cast<std::uint32_t>(prompt_len_), file_digest};

    std::uint64_t head_seed = 0;
    for (int i = 0; i < 8; ++i) head_seed |= static_cast<std::uint64_t>(file_digest[i]) << (8 * i);
    Rng rng(mix_seed({head_seed, prompt_len_}));
    const double scale = kHeadGain / std::sqrt(static_cast<double>(set_.dim));
    head_ = Matrix(set_.dim, set_.token_dim);
    for (double& x : head_.values()) x = scale * gaussian(rng);
    template_mean_ = mean_rows(template_prompt(prompt_len_, set_.token_dim));
}

Embedding OfflineEncoder::encode_image(const Sample& sample) const {
    if (sample.id >= set_.records.size()) {
        throw NotFound("offline features have no record " + std::to_string(sample.id));
    }
    return set_.records[sample.id].feature;
}

Embedding OfflineEncoder::encode_text(const TokenMatrix& prompt,
                                      std::span<const double> class_token) const {
    check_prompt_shape(prompt);
    const auto& tokens = set_.catalog.class_tokens;
    std::size_t c = 0;
    while (c < tokens.size() &&
           !std::equal(tokens[c].begin(), tokens[c].end(), class_token.begin(), class_token.end())) {
        ++c;
    }
    if (c == tokens.size()) {
        throw NotFound("class token is not part of the offline catalog");
    }
    Vector delta = mean_rows(prompt);
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= template_mean_[i];
    Vector u = matvec(head_, delta);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += set_.text_features[c][i];
    return normalized(u);
}

std::vector<Sample> OfflineEncoder::draw_samples(std::uint32_t label, std::size_t count,
                                                 std::uint64_t seed) const {
    std::vector<Sample> pool;
    for (std::size_t i = 0; i < set_.records.size(); ++i) {
        if (set_.records[i].label == label) pool.push_back({label, i});
    }
    if (pool.size() < count) {
        throw InvalidArgument("offline features hold " + std::to_string(pool.size()) +
                              " records of class " + std::to_string(label) + ", " +
                              std::to_string(count) + " requested");
    }
    Rng rng(mix_seed({seed, label}));
    shuffle(pool, rng);
    pool.resize(count);
    return pool;
}

OfflineWorld load_offline_features(const std::filesystem::path& path, std::size_t prompt_len) {
    const auto bytes = read_file(path);
    auto parsed = parse_features(bytes);
    ClassCatalog catalog = parsed.set.catalog;
    auto encoder = std::make_shared<const OfflineEncoder>(std::move(parsed.set), sha256(bytes),
                                                          prompt_len);
    return {std::move(encoder), std::move(catalog), parsed.renormalized};
}

}  // namespace caki
