#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "caki/encoder.hpp"
#include "caki/numerics.hpp"

namespace caki {

inline constexpr char kBankMagic[8] = {'C', 'A', 'K', 'I', 'B', 'A', 'N', 'K'};
inline constexpr std::uint32_t kBankFormatVersion = 1;

/// Which prompt produces the bank keys: the learned class-shared prompt, or
/// the hand-crafted template.
enum class KeyTemplate { shared, handcrafted };

struct BankEntry {
    std::string class_name;
    Embedding key;      ///< D
    TokenMatrix value;  ///< L x Dt class-specific prompt
};

/// Class-level key-value prompt cache. Entry order defines cache indices.
struct PromptBank {
    std::vector<BankEntry> entries;
    TokenMatrix shared_prompt;
    EncoderFingerprint fingerprint;
    std::uint32_t format_version = kBankFormatVersion;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
};

/// Keys are encode_text(key prompt, class token); values are the given class prompts.
PromptBank build_bank(const Encoder& encoder, const ClassCatalog& catalog,
                      const TokenMatrix& shared_prompt, std::span<const TokenMatrix> class_prompts,
                      KeyTemplate key_template = KeyTemplate::shared);

/// Little-endian layout:
///   "CAKIBANK" | version u32 | D u32 | Dt u32 | L u32 | C u32
///   | fingerprint kind u8 | digest 32 bytes | shared prompt L*Dt f32
///   | C x { name_len u16 | name | key D f32 | value L*Dt f32 } | CRC32C u32
std::vector<std::uint8_t> serialize_bank(const PromptBank& bank);
PromptBank parse_bank(std::span<const std::uint8_t> bytes);

void save_bank(const PromptBank& bank, const std::filesystem::path& path);
PromptBank load_bank(const std::filesystem::path& path);

/// Entries at `indices`, in that order.
std::vector<BankEntry> bank_lookup(const PromptBank& bank, std::span<const std::size_t> indices);

/// CRC32C (Castagnoli) of `bytes`.
std::uint32_t crc32c(std::span<const std::uint8_t> bytes);

}  // namespace caki
