#include "speechllm/vocab.h"

#include <algorithm>
#include <fstream>

#include "speechllm/error.h"

namespace speechllm {

namespace {
const char* const kSpecialSymbols[kNumSpecialTokens] = {"<pad>", "<s>", "</s>"};
}

Vocabulary::Vocabulary(std::string_view symbols) {
  std::fill(std::begin(char_to_id_), std::end(char_to_id_), -1);
  for (const char* s : kSpecialSymbols) symbols_.emplace_back(s);
  for (char c : symbols) {
    auto& slot = char_to_id_[static_cast<unsigned char>(c)];
    if (slot >= 0) throw ConfigError(std::string("duplicate vocabulary symbol '") + c + "'");
    if (c == '\n' || c == '\r') throw ConfigError("line breaks cannot be vocabulary symbols");
    slot = static_cast<int>(symbols_.size());
    symbols_.emplace_back(1, c);
  }
}

Vocabulary Vocabulary::standard() {
  std::string symbols = " ";
  for (char c = 'A'; c <= 'Z'; ++c) symbols += c;
  for (char c = 'a'; c <= 'z'; ++c) symbols += c;
  return Vocabulary(symbols);
}

Vocabulary Vocabulary::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::string line;
  std::string symbols;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < kNumSpecialTokens) {
      if (line != kSpecialSymbols[line_no]) {
        throw ParseError("vocabulary line " + std::to_string(line_no + 1) + ": expected " +
                         kSpecialSymbols[line_no] + ", got '" + line + "'");
      }
    } else {
      if (line.size() != 1) {
        throw ParseError("vocabulary line " + std::to_string(line_no + 1) + ": expected one character, got '" +
                         line + "'");
      }
      symbols += line;
    }
    ++line_no;
  }
  if (line_no < kNumSpecialTokens) throw ParseError("vocabulary " + path.string() + " lacks the reserved ids");
  return Vocabulary(symbols);
}

void Vocabulary::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const std::string& s : symbols_) out << s << '\n';
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) throw ContractViolation("token id " + std::to_string(id) + " outside vocabulary");
  return symbols_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::tokenize(std::string_view text, TokenRole role) const {
  TokenSequence seq;
  seq.role = role;
  seq.ids.reserve(text.size());
  for (char c : text) {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0) throw TokenizeError(std::string("character '") + c + "' is not in the vocabulary", c);
    seq.ids.push_back(id);
  }
  return seq;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id >= kNumSpecialTokens) out += symbol(id);
  }
  return out;
}

}  // namespace speechllm
