#include "caki/knowledge_bank.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <set>

#include <boost/crc.hpp>

#include "caki/binary_io.hpp"
#include "caki/error.hpp"

namespace caki {

std::uint32_t crc32c(std::span<const std::uint8_t> bytes) {
    boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

PromptBank build_bank(const Encoder& encoder, const ClassCatalog& catalog,
                      const TokenMatrix& shared_prompt, std::span<const TokenMatrix> class_prompts,
                      KeyTemplate key_template) {
    catalog.validate();
    if (class_prompts.size() != catalog.size()) {
        throw InvalidArgument("build_bank: " + std::to_string(class_prompts.size()) +
                              " class prompts for " + std::to_string(catalog.size()) + " classes");
    }
    const TokenMatrix key_prompt = key_template == KeyTemplate::shared
                                       ? shared_prompt
                                       : template_prompt(encoder.prompt_len(), encoder.token_dim());
    PromptBank bank;
    bank.shared_prompt = shared_prompt;
    bank.fingerprint = encoder.fingerprint();
    for (std::size_t c = 0; c < catalog.size(); ++c) {
        if (!class_prompts[c].same_shape(shared_prompt) || !all_finite(class_prompts[c].values())) {
            throw InvalidArgument("build_bank: class prompt " + std::to_string(c) +
                                  " has the wrong shape or non-finite values");
        }
        bank.entries.push_back({catalog.names[c],
                                encoder.encode_text(key_prompt, catalog.class_tokens[c]),
                                class_prompts[c]});
    }
    return bank;
}

std::vector<std::uint8_t> serialize_bank(const PromptBank& bank) {
    const std::size_t d = bank.entries.empty() ? bank.fingerprint.dim : bank.entries[0].key.size();
    const TokenMatrix& shared = bank.shared_prompt;

    ByteWriter w;
    w.text({kBankMagic, sizeof kBankMagic});
    w.u32(bank.format_version);
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(shared.cols()));
    w.u32(static_cast<std::uint32_t>(shared.rows()));
    w.u32(static_cast<std::uint32_t>(bank.entries.size()));
    w.u8(static_cast<std::uint8_t>(bank.fingerprint.kind));
    w.bytes(bank.fingerprint.digest);
    w.f32s(shared.values());
    for (const auto& e : bank.entries) {
        if (e.class_name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw InvalidArgument("class name too long for the bank format");
        }
        if (e.key.size() != d || !e.value.same_shape(shared)) {
            throw InvalidArgument("bank entry '" + e.class_name + "' has inconsistent dimensions");
        }
        w.u16(static_cast<std::uint16_t>(e.class_name.size()));
        w.text(e.class_name);
        w.f32s(e.key);
        w.f32s(e.value.values());
    }
    w.u32(crc32c(w.buffer()));
    return w.release();
}

namespace {

struct BankHeader {
    std::uint32_t version = 0;
    std::uint32_t dim = 0;
    std::uint32_t token_dim = 0;
    std::uint32_t prompt_len = 0;
    std::uint32_t count = 0;
    EncoderFingerprint fingerprint;
};

BankHeader read_header(ByteReader& r) {
    auto magic = r.take(sizeof kBankMagic, "header magic");
    if (std::memcmp(magic.data(), kBankMagic, sizeof kBankMagic) != 0) {
        throw FormatError("bad magic: not a CAKIBANK file", 0);
    }
    BankHeader h;
    const std::uint64_t version_at = r.offset();
    h.version = r.u32("header version");
    if (h.version != kBankFormatVersion) {
        throw FormatError("unsupported bank format version " + std::to_string(h.version),
                          version_at);
    }
    h.dim = r.u32("header dimensions");
    h.token_dim = r.u32("header dimensions");
    h.prompt_len = r.u32("header dimensions");
    h.count = r.u32("header class count");
    const std::uint64_t kind_at = r.offset();
    const std::uint8_t kind = r.u8("fingerprint block");
    if (kind != static_cast<std::uint8_t>(BackendKind::synthetic) &&
        kind != static_cast<std::uint8_t>(BackendKind::offline)) {
        throw FormatError("unknown encoder kind " + std::to_string(kind), kind_at);
    }
    auto digest = r.take(32, "fingerprint block");
    h.fingerprint.kind = static_cast<BackendKind>(kind);
    h.fingerprint.dim = h.dim;
    h.fingerprint.token_dim = h.token_dim;
    h.fingerprint.prompt_len = h.prompt_len;
    std::copy(digest.begin(), digest.end(), h.fingerprint.digest.begin());
    return h;
}

// Walks the payload without decoding floats; returns the byte length the
// header and name lengths imply, excluding the checksum.
std::uint64_t layout_size(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const BankHeader h = read_header(r);
    const std::uint64_t prompt_bytes = 4ULL * h.prompt_len * h.token_dim;
    r.take(prompt_bytes, "shared prompt");
    for (std::uint32_t c = 0; c < h.count; ++c) {
        const std::uint16_t name_len = r.u16("bank entries");
        r.take(name_len + 4ULL * h.dim + prompt_bytes, "bank entries");
    }
    r.take(4, "checksum");
    if (r.remaining() != 0) {
        throw FormatError("unexpected bytes after checksum", r.offset());
    }
    return r.offset() - 4;
}

}  // namespace

PromptBank parse_bank(std::span<const std::uint8_t> bytes) {
    const std::uint64_t payload = layout_size(bytes);
    ByteReader tail(bytes.subspan(payload));
    if (crc32c(bytes.first(payload)) != tail.u32("checksum")) {
        throw FormatError("checksum mismatch", payload);
    }

    ByteReader r(bytes.first(payload));
    const BankHeader h = read_header(r);
    PromptBank bank;
    bank.format_version = h.version;
    bank.fingerprint = h.fingerprint;
    const std::size_t prompt_size = static_cast<std::size_t>(h.prompt_len) * h.token_dim;
    bank.shared_prompt = TokenMatrix(h.prompt_len, h.token_dim, r.f32s(prompt_size, "shared prompt"));
    std::set<std::string> seen;
    for (std::uint32_t c = 0; c < h.count; ++c) {
        const std::uint64_t entry_at = r.offset();
        const std::uint16_t name_len = r.u16("bank entries");
        auto name_bytes = r.take(name_len, "bank entries");
        BankEntry e;
        e.class_name.assign(name_bytes.begin(), name_bytes.end());
        if (!seen.insert(e.class_name).second) {
            throw FormatError("duplicate class name '" + e.class_name + "'", entry_at);
        }
        e.key = r.f32s(h.dim, "bank entries");
        e.value = TokenMatrix(h.prompt_len, h.token_dim, r.f32s(prompt_size, "bank entries"));
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

void save_bank(const PromptBank& bank, const std::filesystem::path& path) {
    write_file(path, serialize_bank(bank));
}

PromptBank load_bank(const std::filesystem::path& path) { return parse_bank(read_file(path)); }

std::vector<BankEntry> bank_lookup(const PromptBank& bank, std::span<const std::size_t> indices) {
    std::vector<BankEntry> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= bank.size()) {
            throw InvalidArgument("bank index " + std::to_string(i) + " out of range for " +
                                  std::to_string(bank.size()) + " entries");
        }
        out.push_back(bank.entries[i]);
    }
    return out;
}

}  // namespace caki
