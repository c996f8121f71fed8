#include "pcgn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pcgn/random.hpp"
#include "pcgn/tensor.hpp"

namespace pcgn {

using nlohmann::json;

DataError::DataError(const std::string& message, std::size_t line)
    : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------- JSON records

namespace {

const json* optional_field(const json& object, const char* key) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string string_field(const json& object, const char* key, std::size_t line, bool required) {
  const json* value = optional_field(object, key);
  if (value == nullptr) {
    if (required) throw DataError(std::string("missing required key \"") + key + "\"", line);
    return {};
  }
  if (!value->is_string()) throw DataError(std::string("key \"") + key + "\" must be a string", line);
  return value->get<std::string>();
}

}  // namespace

RawRecord record_from_json(const json& object, std::size_t line) {
  if (!object.is_object()) throw DataError("expected a JSON object", line);
  RawRecord r;
  r.blog = tokenize(string_field(object, "blog", line, true));
  r.comment = tokenize(string_field(object, "comment", line, true));
  r.user_id = string_field(object, "user_id", line, true);
  if (r.user_id.empty()) throw DataError("user_id must be non-empty", line);
  r.province = string_field(object, "province", line, false);
  r.city = string_field(object, "city", line, false);
  r.gender = string_field(object, "gender", line, false);
  r.marital_status = string_field(object, "marital_status", line, false);
  if (const json* age = optional_field(object, "age")) {
    if (!age->is_number_integer() || age->get<long long>() < 0) {
      throw DataError("key \"age\" must be a non-negative integer", line);
    }
    r.age = static_cast<int>(age->get<long long>());
  }
  r.description = tokenize(string_field(object, "description", line, false));
  if (const json* words = optional_field(object, "common_words")) {
    if (!words->is_array()) throw DataError("key \"common_words\" must be an array of strings", line);
    for (const json& w : *words) {
      if (!w.is_string()) throw DataError("key \"common_words\" must be an array of strings", line);
      for (auto& t : tokenize(w.get<std::string>())) r.common_words.push_back(std::move(t));
    }
  }
  return r;
}

json record_to_json(const RawRecord& r) {
  json j;
  j["blog"] = join_tokens(r.blog);
  j["comment"] = join_tokens(r.comment);
  j["user_id"] = r.user_id;
  j["province"] = r.province;
  j["city"] = r.city;
  j["gender"] = r.gender;
  j["age"] = r.age ? json(*r.age) : json(nullptr);
  j["marital_status"] = r.marital_status;
  j["description"] = join_tokens(r.description);
  j["common_words"] = r.common_words;
  return j;
}

std::vector<RawRecord> parse_dataset(std::istream& in) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (tokenize(line).empty()) continue;
    json object;
    try {
      object = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    records.push_back(record_from_json(object, line_no));
  }
  return records;
}

std::vector<RawRecord> parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what(), e.line());
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const RawRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const RawRecord& r : records) out << record_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------- filtering

std::vector<RawRecord> filter_records(std::span<const RawRecord> records, std::size_t min_tokens,
                                      std::size_t min_user_records) {
  if (min_tokens < 1 || min_user_records < 1) throw DomainError("filter_records: thresholds must be >= 1");
  std::vector<const RawRecord*> kept;
  std::map<std::string, std::size_t> per_user;
  for (const RawRecord& r : records) {
    if (r.blog.size() < min_tokens || r.comment.size() < min_tokens) continue;
    kept.push_back(&r);
    ++per_user[r.user_id];
  }
  std::vector<RawRecord> out;
  for (const RawRecord* r : kept) {
    if (per_user[r->user_id] >= min_user_records) out.push_back(*r);
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

Vocab::Vocab() {
  for (std::string_view t : {kPadToken, kUnkToken, kBosToken, kEosToken}) {
    ids_.emplace(std::string(t), static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
  max_size_ = kReservedTokens;
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens, std::size_t max_size) {
  if (max_size <= kReservedTokens) throw DomainError("vocab: max size must exceed the 4 reserved tokens");
  if (tokens.size() + kReservedTokens > max_size) throw DomainError("vocab: more tokens than max size");
  Vocab v;
  v.max_size_ = max_size;
  for (const std::string& t : tokens) {
    if (t.empty()) throw DataError("vocab: empty token");
    if (!v.ids_.emplace(t, static_cast<TokenId>(v.tokens_.size())).second) {
      throw DataError("vocab: duplicate or reserved token '" + t + "'");
    }
    v.tokens_.push_back(t);
  }
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

json Vocab::to_json() const {
  return json{{"max_size", max_size_},
              {"tokens", std::vector<std::string>(tokens_.begin() + kReservedTokens, tokens_.end())}};
}

Vocab Vocab::from_json(const json& j) {
  return from_tokens(j.at("tokens").get<std::vector<std::string>>(), j.at("max_size").get<std::size_t>());
}

Vocab build_vocab(std::span<const RawRecord> train, std::size_t max_size) {
  if (max_size <= kReservedTokens) throw DomainError("build_vocab: max_size must be > 4");
  std::unordered_map<std::string, std::size_t> counts;
  for (const RawRecord& r : train) {
    for (const auto* list : {&r.blog, &r.comment, &r.description})
      for (const std::string& t : *list) ++counts[t];
  }
  for (std::string_view reserved : {kPadToken, kUnkToken, kBosToken, kEosToken}) counts.erase(std::string(reserved));
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size - kReservedTokens) ranked.resize(max_size - kReservedTokens);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [t, c] : ranked) tokens.push_back(t);
  return Vocab::from_tokens(tokens, max_size);
}

// ---------------------------------------------------------------- user features

std::size_t CategoryBlock::index(std::string_view value) const {
  if (!value.empty()) {
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it != categories.end()) return static_cast<std::size_t>(it - categories.begin());
  }
  return categories.size();
}

std::size_t FeatureSchema::width() const {
  return province.width() + city.width() + gender.width() + marital_status.width() + 1;
}

json FeatureSchema::to_json() const {
  return json{{"province", province.categories},
              {"city", city.categories},
              {"gender", gender.categories},
              {"marital_status", marital_status.categories},
              {"age_divisor", age_divisor}};
}

FeatureSchema FeatureSchema::from_json(const json& j) {
  FeatureSchema s;
  s.province.categories = j.at("province").get<std::vector<std::string>>();
  s.city.categories = j.at("city").get<std::vector<std::string>>();
  s.gender.categories = j.at("gender").get<std::vector<std::string>>();
  s.marital_status.categories = j.at("marital_status").get<std::vector<std::string>>();
  s.age_divisor = j.at("age_divisor").get<double>();
  if (!(s.age_divisor > 0.0)) throw DataError("schema: age_divisor must be positive");
  return s;
}

bool FeatureSchema::operator==(const FeatureSchema& o) const {
  return province.categories == o.province.categories && city.categories == o.city.categories &&
         gender.categories == o.gender.categories && marital_status.categories == o.marital_status.categories &&
         age_divisor == o.age_divisor;
}

FeatureSchema fit_schema(std::span<const RawRecord> train, double age_divisor) {
  if (train.empty()) throw DataError("fit_schema: empty training set");
  if (!(age_divisor > 0.0)) throw DomainError("fit_schema: age divisor must be positive");
  FeatureSchema s;
  s.age_divisor = age_divisor;
  auto note = [](CategoryBlock& block, const std::string& value) {
    if (!value.empty() && std::find(block.categories.begin(), block.categories.end(), value) == block.categories.end()) {
      block.categories.push_back(value);
    }
  };
  for (const RawRecord& r : train) {
    note(s.province, r.province);
    note(s.city, r.city);
    note(s.gender, r.gender);
    note(s.marital_status, r.marital_status);
  }
  return s;
}

std::vector<double> featurize_user(const RawRecord& r, const FeatureSchema& schema) {
  std::vector<double> f;
  f.reserve(schema.width());
  for (const auto& [block, value] : {std::pair{&schema.province, &r.province}, std::pair{&schema.city, &r.city},
                                     std::pair{&schema.gender, &r.gender},
                                     std::pair{&schema.marital_status, &r.marital_status}}) {
    const std::size_t hot = block->index(*value);
    for (std::size_t i = 0; i < block->width(); ++i) f.push_back(i == hot ? 1.0 : 0.0);
  }
  f.push_back(r.age ? static_cast<double>(*r.age) / schema.age_divisor : 0.0);
  return f;
}

std::vector<std::string> augment_common_words(const RawRecord& r, std::size_t k) {
  std::vector<std::string> d = r.description;
  const std::size_t n = std::min(k, r.common_words.size());
  d.insert(d.end(), r.common_words.begin(), r.common_words.begin() + static_cast<std::ptrdiff_t>(n));
  if (d.empty()) d.emplace_back(kUnkToken);
  return d;
}

// ---------------------------------------------------------------- splitting

DatasetSplits split_by_blog(std::span<const RawRecord> records, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0)) throw DomainError("split_by_blog: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw DomainError("split_by_blog: ratios must sum to 1");
  }
  std::vector<std::vector<std::string>> keys;
  std::map<std::vector<std::string>, std::size_t> key_index;
  for (const RawRecord& r : records) {
    if (key_index.emplace(r.blog, keys.size()).second) keys.push_back(r.blog);
  }
  const std::size_t n = keys.size();
  if (n < 3) throw DataError("split_by_blog: need at least 3 distinct blogs, found " + std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  auto count = [n](double ratio) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * n))); };
  std::size_t n_dev = count(ratios[1]);
  std::size_t n_test = count(ratios[2]);
  while (n_dev + n_test > n - 1) (n_dev >= n_test ? n_dev : n_test)--;

  // 0 = train, 1 = dev, 2 = test, indexed by first-appearance blog index
  std::vector<int> assignment(n, 0);
  for (std::size_t i = 0; i < n_dev; ++i) assignment[order[n - n_test - n_dev + i]] = 1;
  for (std::size_t i = 0; i < n_test; ++i) assignment[order[n - n_test + i]] = 2;

  DatasetSplits out;
  for (const RawRecord& r : records) {
    switch (assignment[key_index.at(r.blog)]) {
      case 0: out.train.push_back(r); break;
      case 1: out.dev.push_back(r); break;
      default: out.test.push_back(r); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------- encoding

EncodedExample encode_example(const RawRecord& r, const Vocab& vocab, const FeatureSchema& schema,
                              std::size_t common_word_k) {
  EncodedExample ex;
  ex.blog = vocab.encode(r.blog);
  ex.comment.reserve(r.comment.size() + 2);
  ex.comment.push_back(kBosId);
  for (TokenId id : vocab.encode(r.comment)) ex.comment.push_back(id);
  ex.comment.push_back(kEosId);
  ex.features = featurize_user(r, schema);
  ex.description = vocab.encode(augment_common_words(r, common_word_k));
  return ex;
}

std::vector<EncodedExample> encode_examples(std::span<const RawRecord> records, const Vocab& vocab,
                                            const FeatureSchema& schema, std::size_t common_word_k) {
  std::vector<EncodedExample> out;
  out.reserve(records.size());
  for (const RawRecord& r : records) out.push_back(encode_example(r, vocab, schema, common_word_k));
  return out;
}

// ---------------------------------------------------------------- synthetic corpus

std::vector<RawRecord> synthetic_corpus(std::size_t records, std::size_t users, std::uint64_t seed) {
  if (users == 0 || records == 0) throw DomainError("synthetic_corpus: need at least one user and one record");
  static const std::vector<std::string> kUserWords = {"love", "haha", "awesome", "sigh", "wow", "cute", "angry", "lol"};
  static const std::vector<std::string> kSubjects = {"star", "movie", "team", "phone", "concert", "drama",
                                                     "game", "album", "show", "novel", "brand", "city"};
  static const std::vector<std::string> kVerbs = {"wins", "releases", "announces", "cancels", "launches", "teases"};
  static const std::vector<std::string> kProvinces = {"beijing", "shanghai", "guangdong", "sichuan", "zhejiang"};
  static const std::vector<std::string> kStatus = {"single", "married", "dating"};

  Rng rng(seed);
  std::vector<std::string> subjects = kSubjects;
  std::vector<std::string> verbs = kVerbs;
  rng.shuffle(subjects);
  rng.shuffle(verbs);

  auto user_word = [&](std::size_t u) {
    return u < kUserWords.size() ? kUserWords[u] : kUserWords[u % kUserWords.size()] + std::to_string(u);
  };

  std::vector<RawRecord> profiles(users);
  for (std::size_t u = 0; u < users; ++u) {
    RawRecord& p = profiles[u];
    p.user_id = "u" + std::to_string(u);
    p.province = kProvinces[u % kProvinces.size()];
    p.city = "city" + std::to_string(u);
    p.gender = u % 2 == 0 ? "F" : "M";
    p.age = static_cast<int>(18 + 7 * u);
    p.marital_status = kStatus[u % kStatus.size()];
    p.description = {"fan", "of", user_word(u)};
    p.common_words = {user_word(u), "!"};
  }

  const std::size_t blogs = (records + users - 1) / users;
  std::vector<RawRecord> out;
  out.reserve(records);
  for (std::size_t b = 0; b < blogs && out.size() < records; ++b) {
    const std::string subject = b < subjects.size() ? subjects[b] : subjects[b % subjects.size()] + std::to_string(b);
    const std::string& verb = verbs[b % verbs.size()];
    for (std::size_t u = 0; u < users && out.size() < records; ++u) {
      RawRecord r = profiles[u];
      r.blog = {"the", subject, verb, "news", "today"};
      r.comment = {user_word(u), subject, "!"};
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace pcgn
