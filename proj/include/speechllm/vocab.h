#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace speechllm {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kNumSpecialTokens = 3;

enum class TokenRole { prompt, transcript, generated };

struct TokenSequence {
  std::vector<int> ids;
  TokenRole role = TokenRole::transcript;
  bool truncated = false;  // generation stopped at max_len without EOS
};

// Character-level vocabulary: ids 0-2 are PAD/BOS/EOS, then one id per symbol.
class Vocabulary {
 public:
  explicit Vocabulary(std::string_view symbols);
  // Space, A-Z, a-z.
  static Vocabulary standard();

  // Plain text, one symbol per line, line index = id.
  static Vocabulary read_file(const std::filesystem::path& path);
  void write_file(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const;

  // Throws TokenizeError naming the first character not in the vocabulary.
  TokenSequence tokenize(std::string_view text, TokenRole role) const;
  // Special ids are skipped.
  std::string detokenize(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  Vocabulary() = default;
  std::vector<std::string> symbols_;
  int char_to_id_[256];
};

}  // namespace speechllm
