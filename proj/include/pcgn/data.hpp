#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace pcgn {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kReservedTokens = 4;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";

/// Malformed or unusable input data. `line()` is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& message, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RawRecord {
  std::vector<std::string> blog;
  std::vector<std::string> comment;
  std::string user_id;
  std::string province;
  std::string city;
  std::string gender;
  std::string marital_status;
  std::optional<int> age;
  std::vector<std::string> description;
  std::vector<std::string> common_words;

  bool operator==(const RawRecord&) const = default;
};

/// Splits on runs of whitespace; never yields empty tokens.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

RawRecord record_from_json(const nlohmann::json& object, std::size_t line = 0);
nlohmann::json record_to_json(const RawRecord& record);

/// One JSON object per line; blank lines are skipped. Errors carry the 1-based line number.
std::vector<RawRecord> parse_dataset(std::istream& in);
std::vector<RawRecord> parse_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, std::span<const RawRecord> records);

/// Drops short blogs/comments, then users left with fewer than `min_user_records` records.
std::vector<RawRecord> filter_records(std::span<const RawRecord> records, std::size_t min_tokens = 2,
                                      std::size_t min_user_records = 2);

class Vocab {
 public:
  Vocab();

  /// Reserved tokens followed by `tokens` in order. Duplicates and reserved names are rejected.
  static Vocab from_tokens(std::span<const std::string> tokens, std::size_t max_size);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  std::size_t max_size() const { return max_size_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_ && max_size_ == other.max_size_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_size_ = 0;
};

/// Counts blog, comment and description tokens; keeps the `max_size - 4` most frequent,
/// ties broken lexicographically.
Vocab build_vocab(std::span<const RawRecord> train, std::size_t max_size);

struct CategoryBlock {
  std::vector<std::string> categories;

  /// Categories plus the trailing unknown bucket.
  std::size_t width() const { return categories.size() + 1; }
  std::size_t index(std::string_view value) const;
};

struct FeatureSchema {
  CategoryBlock province;
  CategoryBlock city;
  CategoryBlock gender;
  CategoryBlock marital_status;
  double age_divisor = 100.0;

  std::size_t width() const;
  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);
  bool operator==(const FeatureSchema& other) const;
};

FeatureSchema fit_schema(std::span<const RawRecord> train, double age_divisor = 100.0);

/// One-hot blocks (province, city, gender, marital status) followed by age / divisor.
std::vector<double> featurize_user(const RawRecord& record, const FeatureSchema& schema);

/// Description followed by the first k common words; a lone UNK when both are empty.
std::vector<std::string> augment_common_words(const RawRecord& record, std::size_t k = 20);

struct DatasetSplits {
  std::vector<RawRecord> train;
  std::vector<RawRecord> dev;
  std::vector<RawRecord> test;
};

/// Assigns whole blogs (keyed by exact token sequence) to train/dev/test after a seeded shuffle.
DatasetSplits split_by_blog(std::span<const RawRecord> records, std::array<double, 3> ratios, std::uint64_t seed);

struct EncodedExample {
  std::vector<TokenId> blog;
  std::vector<TokenId> comment;  // BOS ... EOS
  std::vector<double> features;
  std::vector<TokenId> description;

  /// Number of predicted tokens (comment minus BOS).
  std::size_t target_tokens() const { return comment.empty() ? 0 : comment.size() - 1; }
};

EncodedExample encode_example(const RawRecord& record, const Vocab& vocab, const FeatureSchema& schema,
                              std::size_t common_word_k = 0);
std::vector<EncodedExample> encode_examples(std::span<const RawRecord> records, const Vocab& vocab,
                                            const FeatureSchema& schema, std::size_t common_word_k = 0);

/// Template-grammar corpus in which every blog is commented on by every user and the first
/// comment token is a fixed function of the user. Records are blog-major.
std::vector<RawRecord> synthetic_corpus(std::size_t records, std::size_t users, std::uint64_t seed);

/// Position (0-based, counting predicted tokens) of the user-determined token in synthetic comments.
inline constexpr std::size_t kSyntheticUserTokenPosition = 0;

}  // namespace pcgn
