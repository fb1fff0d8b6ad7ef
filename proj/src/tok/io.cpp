#include "zett/tok/io.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "zett/common/base64.hpp"
#include "zett/common/error.hpp"
#include "zett/tok/utf8.hpp"

namespace zett::tok {

using nlohmann::json;

namespace {

json token_to_json(const std::string& token) {
  if (is_valid_utf8(token)) return token;
  return json{{"b64", base64_encode(token)}};
}

std::string token_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_object() && j.contains("b64") && j.at("b64").is_string()) return base64_decode(j.at("b64").get<std::string>());
  fail(ErrorCode::InvalidFormat, "token must be a string or {\"b64\": ...}");
}

// GPT-2's reversible byte <-> printable code point table.
std::array<char32_t, 256> byte_to_unicode() {
  std::array<char32_t, 256> table{};
  std::array<bool, 256> printable{};
  for (int b = '!'; b <= '~'; ++b) printable[b] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) table[b] = printable[b] ? char32_t(b) : next++;
  return table;
}

std::string unmap_byte_level(std::string_view symbol, const std::unordered_map<char32_t, char>& inverse) {
  std::string out;
  for (std::size_t pos = 0; pos < symbol.size();) {
    auto unit = next_utf8(symbol, pos);
    auto it = unit.valid ? inverse.find(unit.code_point) : inverse.end();
    if (it == inverse.end()) return std::string(symbol);  // not a byte-level symbol (e.g. a special token)
    out += it->second;
    pos += unit.length;
  }
  return out;
}

PretokenizerConfig pretok_from_json(const json& j) {
  PretokenizerConfig cfg;
  for (auto& [key, value] : j.items()) {
    if (key == "rule") cfg.rule = value.get<std::string>();
    else if (key == "prefix_space") cfg.prefix_space = value.get<bool>();
    else if (key == "ws_run_max") cfg.whitespace_run_max = value.get<int>();
    else fail(ErrorCode::InvalidFormat, "unknown pretokenizer key '" + key + "'");
  }
  require(cfg.rule == "gpt2m", ErrorCode::InvalidFormat, "unknown pretokenizer rule '" + cfg.rule + "'");
  require(cfg.whitespace_run_max >= 1, ErrorCode::InvalidFormat, "ws_run_max must be >= 1");
  return cfg;
}

TokenizerSpec from_native(const json& j) {
  for (auto& [key, value] : j.items()) {
    (void)value;
    if (key != "kind" && key != "vocab" && key != "merges" && key != "pretokenizer" && key != "byte_level")
      fail(ErrorCode::InvalidFormat, "unknown tokenizer key '" + key + "'");
  }
  std::string kind = j.at("kind").get<std::string>();
  PretokenizerConfig pretok = j.contains("pretokenizer") ? pretok_from_json(j.at("pretokenizer")) : PretokenizerConfig{};
  bool byte_level = j.value("byte_level", false);

  Vocabulary vocab;
  std::vector<double> scores;
  for (const auto& entry : j.at("vocab")) {
    require(entry.is_array() && !entry.empty() && entry.size() <= 2, ErrorCode::InvalidFormat,
            "vocab entries must be [token] or [token, score]");
    vocab.add(token_from_json(entry[0]));
    if (entry.size() == 2) scores.push_back(entry[1].get<double>());
  }

  if (kind == "unigram") {
    require(scores.size() == vocab.size(), ErrorCode::InvalidFormat, "every unigram token needs a score");
    TokenizerSpec t{UnigramModel(std::move(vocab), std::move(scores)), pretok, byte_level};
    validate(t);
    return t;
  }
  require(kind == "bpe", ErrorCode::InvalidFormat, "kind must be 'unigram' or 'bpe'");
  std::vector<Merge> merges;
  if (j.contains("merges")) {
    for (const auto& m : j.at("merges")) {
      require(m.is_array() && m.size() == 2, ErrorCode::InvalidFormat, "merges must be [left, right] pairs");
      merges.emplace_back(token_from_json(m[0]), token_from_json(m[1]));
    }
  }
  return make_bpe_tokenizer(BpeModel(std::move(vocab), std::move(merges)), pretok, byte_level);
}

bool has_type(const json& j, std::string_view type) {
  if (!j.is_object()) return false;
  if (j.value("type", "") == type) return true;
  if (j.contains("pretokenizers"))
    for (const auto& p : j.at("pretokenizers"))
      if (has_type(p, type)) return true;
  return false;
}

bool prefix_space_flag(const json& j) {
  if (!j.is_object()) return false;
  if (j.value("add_prefix_space", false)) return true;
  if (j.value("prepend_scheme", "") == "always" || j.value("prepend_scheme", "") == "first") return true;
  if (j.contains("pretokenizers"))
    for (const auto& p : j.at("pretokenizers"))
      if (prefix_space_flag(p)) return true;
  return false;
}

TokenizerSpec from_community(const json& j) {
  const json& model = j.at("model");
  const json pre = j.contains("pre_tokenizer") ? j.at("pre_tokenizer") : json();
  PretokenizerConfig pretok;
  pretok.prefix_space = prefix_space_flag(pre);
  std::string type = model.value("type", "");

  if (type == "Unigram") {
    Vocabulary vocab;
    std::vector<double> scores;
    for (const auto& entry : model.at("vocab")) {
      std::string piece = entry.at(0).get<std::string>();
      if (piece.size() == 6 && piece.starts_with("<0x") && piece.back() == '>') {
        piece = std::string(1, static_cast<char>(std::stoi(piece.substr(3, 2), nullptr, 16)));
      } else {
        std::string replaced;
        for (std::size_t pos = 0; pos < piece.size();) {
          if (piece.compare(pos, 3, "\xE2\x96\x81") == 0) {
            replaced += ' ';
            pos += 3;
          } else {
            replaced += piece[pos++];
          }
        }
        piece = std::move(replaced);
      }
      if (vocab.contains(piece)) continue;  // e.g. "<0x20>" next to "▁"
      vocab.add(piece);
      scores.push_back(entry.at(1).get<double>());
    }
    return make_unigram_tokenizer(UnigramModel(std::move(vocab), std::move(scores)), pretok);
  }

  require(type == "BPE" || (type.empty() && model.contains("merges")), ErrorCode::InvalidFormat,
          "unsupported community model type '" + type + "'");
  bool byte_level = has_type(pre, "ByteLevel") || has_type(j.value("decoder", json()), "ByteLevel");
  std::unordered_map<char32_t, char> inverse;
  if (byte_level) {
    auto table = byte_to_unicode();
    for (int b = 0; b < 256; ++b) inverse[table[b]] = static_cast<char>(b);
  }
  auto unmap = [&](const std::string& s) { return byte_level ? unmap_byte_level(s, inverse) : s; };

  std::vector<std::pair<std::uint64_t, std::string>> by_id;
  for (auto& [token, id] : model.at("vocab").items()) by_id.emplace_back(id.get<std::uint64_t>(), unmap(token));
  std::sort(by_id.begin(), by_id.end());
  std::vector<std::string> tokens;
  tokens.reserve(by_id.size());
  for (auto& [id, token] : by_id) {
    require(id == tokens.size(), ErrorCode::InvalidFormat, "community vocab ids must be contiguous from 0");
    tokens.push_back(std::move(token));
  }

  std::vector<Merge> merges;
  for (const auto& m : model.at("merges")) {
    if (m.is_string()) {
      std::string s = m.get<std::string>();
      auto space = s.find(' ');
      require(space != std::string::npos && space > 0 && space + 1 < s.size(), ErrorCode::InvalidFormat,
              "merge string must be 'left right'");
      merges.emplace_back(unmap(s.substr(0, space)), unmap(s.substr(space + 1)));
    } else {
      merges.emplace_back(unmap(m.at(0).get<std::string>()), unmap(m.at(1).get<std::string>()));
    }
  }
  TokenizerSpec t{BpeModel(Vocabulary(std::move(tokens)), std::move(merges)), pretok, false};
  t.byte_level = byte_level && covers_all_bytes(t);
  return t;
}

}  // namespace

std::string tokenizer_to_json(const TokenizerSpec& t) {
  json j;
  j["kind"] = t.kind() == ModelKind::Unigram ? "unigram" : "bpe";
  json vocab = json::array();
  const auto& tokens = t.vocab().tokens();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    json entry = json::array({token_to_json(tokens[i])});
    if (t.kind() == ModelKind::Unigram) entry.push_back(t.unigram().scores[i]);
    vocab.push_back(std::move(entry));
  }
  j["vocab"] = std::move(vocab);
  json merges = json::array();
  if (t.kind() == ModelKind::Bpe)
    for (const auto& [l, r] : t.bpe().merges()) merges.push_back(json::array({token_to_json(l), token_to_json(r)}));
  j["merges"] = std::move(merges);
  j["pretokenizer"] = {{"rule", t.pretok.rule}, {"prefix_space", t.pretok.prefix_space},
                       {"ws_run_max", t.pretok.whitespace_run_max}};
  j["byte_level"] = t.byte_level;
  return j.dump();
}

TokenizerSpec tokenizer_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
    if (j.contains("model")) return from_community(j);
    return from_native(j);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string("tokenizer json: ") + e.what());
  }
}

TokenizerSpec load_tokenizer(const std::filesystem::path& path) { return tokenizer_from_json(read_file(path)); }

void save_tokenizer(const TokenizerSpec& t, const std::filesystem::path& path) {
  write_file(path, tokenizer_to_json(t));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace zett::tok
