#pragma once

// Referring-expression handling: coarse-tag rule table that splits a sentence
// into static / relational / temporal phrase masks, and the embedding stand-in
// that produces the sentence features and their masked subsets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tqf/core/nn.hpp"

namespace tqf::text {

enum class Tag { kNoun, kAdj, kVerbTrans, kVerbIntrans, kPrep, kDet, kAdv, kOther };

Tag parse_tag(const std::string& name);  // "NOUN", "VERB_TRANS", ...
const char* tag_name(Tag tag);

struct TokenizedExpression {
  std::vector<std::string> tokens;
  std::vector<Tag> tags;

  std::size_t size() const { return tokens.size(); }
  // |tokens| == |tags| >= 1
  void validate() const;
  std::string sentence() const;
};

struct PhraseMasks {
  std::vector<std::uint8_t> m_static;
  std::vector<std::uint8_t> m_relational;
  std::vector<std::uint8_t> m_temporal;
};

/// Rule table over coarse tags:
///  - static: every ADJ, every NOUN directly after a DET, and the head (first) NOUN
///  - relational: each VERB_TRANS plus the PREP tokens after it up to and
///    including the next NOUN (DET/ADJ/ADV are skipped, a verb ends the span)
///  - temporal: every VERB_INTRANS and ADV
PhraseMasks decompose(const TokenizedExpression& expr);

std::vector<std::size_t> mask_indices(const std::vector<std::uint8_t>& mask);

/// Fixed-size open-addressing token table (linear probing over FNV-1a hashes).
/// Unknown tokens are inserted on first sight.
class Vocabulary {
 public:
  static constexpr std::size_t kDefaultSlots = 4096;

  explicit Vocabulary(std::size_t slots = kDefaultSlots) : table_(slots) {}

  std::size_t slot(const std::string& token);
  std::optional<std::size_t> find(const std::string& token) const;
  std::size_t capacity() const { return table_.size(); }
  std::size_t size() const { return used_; }

  // (slot, token) for every occupied slot, ascending by slot.
  std::vector<std::pair<std::size_t, std::string>> entries() const;
  void restore(const std::vector<std::pair<std::size_t, std::string>>& entries);

 private:
  std::vector<std::optional<std::string>> table_;
  std::size_t used_ = 0;
};

template <typename T>
struct TextFeatures {
  Tensor<T> f_l;  // [W x D]
  Tensor<T> f_s;  // [W_s x D], or the static fallback row
  Tensor<T> f_r;
  Tensor<T> f_e;
  std::vector<std::size_t> rows_s, rows_r, rows_e;  // empty when the fallback was used
};

/// Hashed embedding table plus learned positional offsets and one learned
/// fallback row per mask type.
template <typename T>
class TextEncoder {
 public:
  static constexpr std::size_t kMaxWords = 64;

  TextEncoder() = default;
  TextEncoder(ParamStore<T>& store, const std::string& name, std::size_t width,
              std::size_t vocab_slots = Vocabulary::kDefaultSlots);

  TextFeatures<T> embed(const TokenizedExpression& expr, const PhraseMasks& masks, Vocabulary& vocab) const;

  std::size_t width() const { return width_; }
  // Positional offsets are on by default; turning them off makes f_l a pure
  // function of the token multiset order.
  void set_positional(bool on) { positional_ = on; }

 private:
  Tensor<T> subset(const Tensor<T>& f_l, const std::vector<std::uint8_t>& mask, const Tensor<T>& fallback,
                   std::vector<std::size_t>& rows) const;

  std::size_t width_ = 0;
  std::size_t slots_ = 0;
  bool positional_ = true;
  Tensor<T> table_;
  Tensor<T> positions_;
  Tensor<T> fallback_s_, fallback_r_, fallback_e_;
};

/// One JSON-lines record: {"tokens":[...],"tags":[...],"target_id":int}.
struct ExpressionRecord {
  TokenizedExpression expr;
  int target_id = 0;
};

ExpressionRecord parse_expression_line(const std::string& line);
std::string format_expression_line(const ExpressionRecord& record);
std::vector<ExpressionRecord> read_expressions(const std::filesystem::path& path);
void write_expressions(const std::filesystem::path& path, const std::vector<ExpressionRecord>& records);

}  // namespace tqf::text
