#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace zett {

// Documents are the non-empty lines of a plain-text file, or the "text"
// fields of a JSON-lines file (detected by a .jsonl extension or a leading
// '{'). Throws EmptyCorpus when nothing remains.
std::vector<std::string> load_corpus(const std::filesystem::path& path);

std::size_t total_bytes(const std::vector<std::string>& docs);

}  // namespace zett
