#include "tqf/text/decomposer.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tqf::text {

namespace {

constexpr std::pair<Tag, const char*> kTagNames[] = {
    {Tag::kNoun, "NOUN"}, {Tag::kAdj, "ADJ"},   {Tag::kVerbTrans, "VERB_TRANS"}, {Tag::kVerbIntrans, "VERB_INTRANS"},
    {Tag::kPrep, "PREP"}, {Tag::kDet, "DET"},   {Tag::kAdv, "ADV"},              {Tag::kOther, "OTHER"},
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Tag parse_tag(const std::string& name) {
  for (const auto& [tag, text] : kTagNames) {
    if (name == text) return tag;
  }
  throw ValidationError("unknown tag: " + name);
}

const char* tag_name(Tag tag) {
  for (const auto& [t, text] : kTagNames) {
    if (t == tag) return text;
  }
  return "OTHER";
}

void TokenizedExpression::validate() const {
  if (tokens.empty()) throw ValidationError("expression has no tokens");
  if (tokens.size() != tags.size()) {
    throw ValidationError("expression has " + std::to_string(tokens.size()) + " tokens but " +
                          std::to_string(tags.size()) + " tags");
  }
}

std::string TokenizedExpression::sentence() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

PhraseMasks decompose(const TokenizedExpression& expr) {
  expr.validate();
  const std::size_t w = expr.size();
  PhraseMasks m{std::vector<std::uint8_t>(w, 0), std::vector<std::uint8_t>(w, 0), std::vector<std::uint8_t>(w, 0)};
  bool head_seen = false;
  for (std::size_t i = 0; i < w; ++i) {
    const Tag tag = expr.tags[i];
    if (tag == Tag::kAdj) m.m_static[i] = 1;
    if (tag == Tag::kNoun) {
      if (!head_seen || (i > 0 && expr.tags[i - 1] == Tag::kDet)) m.m_static[i] = 1;
      head_seen = true;
    }
    if (tag == Tag::kVerbIntrans || tag == Tag::kAdv) m.m_temporal[i] = 1;
    if (tag == Tag::kVerbTrans) {
      m.m_relational[i] = 1;
      for (std::size_t j = i + 1; j < w; ++j) {
        const Tag next = expr.tags[j];
        if (next == Tag::kVerbTrans || next == Tag::kVerbIntrans) break;
        if (next == Tag::kPrep) m.m_relational[j] = 1;
        if (next == Tag::kNoun) {
          m.m_relational[j] = 1;
          break;
        }
      }
    }
  }
  return m;
}

std::vector<std::size_t> mask_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

std::size_t Vocabulary::slot(const std::string& token) {
  const std::size_t n = table_.size();
  std::size_t s = fnv1a(token) % n;
  for (std::size_t probe = 0; probe < n; ++probe, s = (s + 1) % n) {
    if (!table_[s]) {
      table_[s] = token;
      ++used_;
      return s;
    }
    if (*table_[s] == token) return s;
  }
  throw ValidationError("vocabulary is full (" + std::to_string(n) + " slots)");
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  const std::size_t n = table_.size();
  std::size_t s = fnv1a(token) % n;
  for (std::size_t probe = 0; probe < n; ++probe, s = (s + 1) % n) {
    if (!table_[s]) return std::nullopt;
    if (*table_[s] == token) return s;
  }
  return std::nullopt;
}

std::vector<std::pair<std::size_t, std::string>> Vocabulary::entries() const {
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t s = 0; s < table_.size(); ++s) {
    if (table_[s]) out.emplace_back(s, *table_[s]);
  }
  return out;
}

void Vocabulary::restore(const std::vector<std::pair<std::size_t, std::string>>& entries) {
  std::fill(table_.begin(), table_.end(), std::nullopt);
  used_ = 0;
  for (const auto& [s, token] : entries) {
    if (s >= table_.size()) throw ValidationError("vocabulary slot out of range");
    table_[s] = token;
    ++used_;
  }
}

template <typename T>
TextEncoder<T>::TextEncoder(ParamStore<T>& store, const std::string& name, std::size_t width,
                            std::size_t vocab_slots)
    : width_(width), slots_(vocab_slots) {
  const InitSpec emb{InitSpec::Kind::kUniformFanIn, 0.0, width};
  table_ = store.create(name + ".embedding", {vocab_slots, width}, emb);
  positions_ = store.create(name + ".positions", {kMaxWords, width}, {InitSpec::Kind::kUniform, 0.02, 0});
  fallback_s_ = store.create(name + ".fallback_static", {1, width}, emb);
  fallback_r_ = store.create(name + ".fallback_relational", {1, width}, emb);
  fallback_e_ = store.create(name + ".fallback_temporal", {1, width}, emb);
}

template <typename T>
Tensor<T> TextEncoder<T>::subset(const Tensor<T>& f_l, const std::vector<std::uint8_t>& mask,
                                 const Tensor<T>& fallback, std::vector<std::size_t>& rows) const {
  rows = mask_indices(mask);
  if (rows.empty()) return fallback;
  return ops::gather_rows(f_l, rows);
}

template <typename T>
TextFeatures<T> TextEncoder<T>::embed(const TokenizedExpression& expr, const PhraseMasks& masks,
                                      Vocabulary& vocab) const {
  expr.validate();
  const std::size_t w = expr.size();
  if (w > kMaxWords) throw ValidationError("expression longer than " + std::to_string(kMaxWords) + " words");
  if (vocab.capacity() != slots_) throw ValidationError("vocabulary size does not match the embedding table");
  if (masks.m_static.size() != w || masks.m_relational.size() != w || masks.m_temporal.size() != w) {
    throw ValidationError("phrase masks do not match expression length");
  }
  std::vector<std::size_t> ids(w), pos(w);
  for (std::size_t i = 0; i < w; ++i) {
    ids[i] = vocab.slot(expr.tokens[i]);
    pos[i] = i;
  }
  TextFeatures<T> out;
  out.f_l = ops::gather_rows(table_, ids);
  if (positional_) out.f_l = ops::add(out.f_l, ops::gather_rows(positions_, pos));
  out.f_s = subset(out.f_l, masks.m_static, fallback_s_, out.rows_s);
  out.f_r = subset(out.f_l, masks.m_relational, fallback_r_, out.rows_r);
  out.f_e = subset(out.f_l, masks.m_temporal, fallback_e_, out.rows_e);
  return out;
}

ExpressionRecord parse_expression_line(const std::string& line) {
  ExpressionRecord rec;
  try {
    const auto j = nlohmann::json::parse(line);
    rec.expr.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& t : j.at("tags")) rec.expr.tags.push_back(parse_tag(t.get<std::string>()));
    rec.target_id = j.at("target_id").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad expression record: ") + e.what());
  }
  rec.expr.validate();
  return rec;
}

std::string format_expression_line(const ExpressionRecord& record) {
  nlohmann::json j;
  j["tokens"] = record.expr.tokens;
  std::vector<std::string> tags;
  for (Tag t : record.expr.tags) tags.emplace_back(tag_name(t));
  j["tags"] = tags;
  j["target_id"] = record.target_id;
  return j.dump();
}

std::vector<ExpressionRecord> read_expressions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<ExpressionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_expression_line(line));
  }
  return out;
}

void write_expressions(const std::filesystem::path& path, const std::vector<ExpressionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& r : records) out << format_expression_line(r) << '\n';
}

template class TextEncoder<float>;
template class TextEncoder<double>;

}  // namespace tqf::text
