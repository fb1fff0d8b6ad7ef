#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "zett/tok/tokenizer.hpp"

namespace zett::tok {

// Native schema:
//   {"kind":"unigram"|"bpe","vocab":[[token,score?],...],"merges":[["l","r"],...],
//    "pretokenizer":{"rule":"gpt2m","prefix_space":bool,"ws_run_max":int},"byte_level":bool}
// Tokens that are not valid UTF-8 are written as {"b64":"..."}.
std::string tokenizer_to_json(const TokenizerSpec& t);

// Parses either the native schema or a community tokenizer.json
// ("model": {"type": "BPE"|"Unigram", ...}). For the latter, byte-level BPE
// symbols are unmapped from the printable-unicode alphabet back to raw
// bytes; unigram "▁" becomes a space and "<0xNN>" pieces become single bytes.
TokenizerSpec tokenizer_from_json(std::string_view text);

TokenizerSpec load_tokenizer(const std::filesystem::path& path);
void save_tokenizer(const TokenizerSpec& t, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace zett::tok
