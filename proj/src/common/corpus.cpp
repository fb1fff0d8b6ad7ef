#include "zett/common/corpus.hpp"

#include <fstream>

#include "json.hpp"
#include "zett/common/error.hpp"

namespace zett {

std::vector<std::string> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open corpus " + path.string());
  std::vector<std::string> docs;
  std::string line;
  bool jsonl = path.extension() == ".jsonl";
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      jsonl = jsonl || (!line.empty() && line.front() == '{');
      first = false;
    }
    if (line.empty()) continue;
    if (jsonl) {
      try {
        auto j = nlohmann::json::parse(line);
        std::string text = j.at("text").get<std::string>();
        if (!text.empty()) docs.push_back(std::move(text));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidFormat, "corpus line " + std::to_string(docs.size() + 1) + ": " + e.what());
      }
    } else {
      docs.push_back(std::move(line));
    }
  }
  require(!docs.empty(), ErrorCode::EmptyCorpus, "corpus has no documents: " + path.string());
  return docs;
}

std::size_t total_bytes(const std::vector<std::string>& docs) {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

}  // namespace zett
