#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "corrkg/errors.hpp"
#include "corrkg/text.hpp"
#include "corrkg/vocab.hpp"

namespace corrkg {

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  std::vector<std::string> keyphrases;
};

/// One source text with up to max_phrases target phrases. Source OOV words
/// get document-local ids vocab.size() + k, k in first-occurrence order.
struct TrainingInstance {
  std::string doc_id;
  std::vector<std::string> source_tokens;
  std::vector<TokenId> source_ids;      // OOV -> UNK
  std::vector<TokenId> source_ext_ids;  // OOV -> extended id
  std::vector<std::string> oov_words;
  std::vector<std::vector<TokenId>> phrases;  // each ends in EOS

  std::size_t extended_size(const Vocab& vocab) const { return vocab.size() + oov_words.size(); }
};

inline std::vector<std::string> source_tokens(const Document& doc) {
  auto tokens = preprocess_text(doc.title);
  auto rest = preprocess_text(doc.abstract);
  tokens.insert(tokens.end(), rest.begin(), rest.end());
  return tokens;
}

/// Source side only; phrases left empty. Used for prediction.
inline TrainingInstance make_source_instance(const Document& doc, const Vocab& vocab,
                                             std::size_t max_source_len) {
  TrainingInstance inst;
  inst.doc_id = doc.id;
  inst.source_tokens = source_tokens(doc);
  if (inst.source_tokens.size() > max_source_len) inst.source_tokens.resize(max_source_len);
  if (inst.source_tokens.empty()) {
    throw DataError("document '" + doc.id + "': source is empty after preprocessing");
  }
  std::unordered_map<std::string, TokenId> oov;
  for (const auto& tok : inst.source_tokens) {
    if (auto id = vocab.find(tok)) {
      inst.source_ids.push_back(*id);
      inst.source_ext_ids.push_back(*id);
      continue;
    }
    auto [it, inserted] = oov.try_emplace(tok, vocab.size() + inst.oov_words.size());
    if (inserted) inst.oov_words.push_back(tok);
    inst.source_ids.push_back(Vocab::kUnk);
    inst.source_ext_ids.push_back(it->second);
  }
  return inst;
}

/// Maps a phrase onto vocab ids, falling back to the instance's extended ids,
/// then UNK. Appends EOS.
inline std::vector<TokenId> encode_phrase(const std::vector<std::string>& tokens,
                                          const Vocab& vocab, const TrainingInstance& inst) {
  std::vector<TokenId> ids;
  for (const auto& tok : tokens) {
    if (auto id = vocab.find(tok)) {
      ids.push_back(*id);
      continue;
    }
    auto it = std::find(inst.oov_words.begin(), inst.oov_words.end(), tok);
    ids.push_back(it == inst.oov_words.end()
                      ? Vocab::kUnk
                      : vocab.size() + static_cast<TokenId>(it - inst.oov_words.begin()));
  }
  ids.push_back(Vocab::kEos);
  return ids;
}

/// Splits a document's keyphrases into chunks of at most max_phrases, one
/// instance per chunk, preserving phrase order.
inline std::vector<TrainingInstance> make_instances(const Document& doc, const Vocab& vocab,
                                                    std::size_t max_phrases,
                                                    std::size_t max_source_len) {
  if (max_phrases == 0) throw std::invalid_argument("make_instances: max_phrases must be >= 1");
  TrainingInstance base = make_source_instance(doc, vocab, max_source_len);
  std::vector<std::vector<TokenId>> phrases;
  for (const auto& raw : doc.keyphrases) {
    auto tokens = preprocess_text(raw);
    if (tokens.empty()) continue;
    phrases.push_back(encode_phrase(tokens, vocab, base));
  }
  if (phrases.empty()) throw DataError("document '" + doc.id + "': no usable keyphrases");
  std::vector<TrainingInstance> out;
  for (std::size_t start = 0; start < phrases.size(); start += max_phrases) {
    TrainingInstance inst = base;
    const std::size_t end = std::min(phrases.size(), start + max_phrases);
    inst.phrases.assign(phrases.begin() + static_cast<std::ptrdiff_t>(start),
                        phrases.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(inst));
  }
  return out;
}

/// Renders an id (vocab or extended) back to its word.
inline std::string render_token(TokenId id, const Vocab& vocab,
                                const std::vector<std::string>& oov_words) {
  if (id < vocab.size()) return vocab.word(id);
  const std::size_t k = id - vocab.size();
  if (k >= oov_words.size()) throw std::out_of_range("render_token: id past extended vocab");
  return oov_words[k];
}

inline std::vector<std::string> render_tokens(const std::vector<TokenId>& ids, const Vocab& vocab,
                                              const std::vector<std::string>& oov_words) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(render_token(id, vocab, oov_words));
  return out;
}

// ---------------------------------------------------------------------------
// JSONL dataset: {"id"?, "title", "abstract", "keyphrases": [...]}

inline Document parse_document(const std::string& line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  Document doc;
  try {
    doc.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>()
                                                      : j["id"].dump())
                              : std::to_string(line_no);
    doc.title = j.value("title", std::string());
    doc.abstract = j.value("abstract", std::string());
    if (j.contains("keyphrases")) doc.keyphrases = j["keyphrases"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": bad field type (" + e.what() + ")");
  }
  if (doc.id.empty()) throw DataError(where + ": empty id");
  return doc;
}

inline std::vector<Document> read_documents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    docs.push_back(parse_document(line, line_no));
  }
  return docs;
}

inline nlohmann::json document_to_json(const Document& doc) {
  return {{"id", doc.id}, {"title", doc.title}, {"abstract", doc.abstract},
          {"keyphrases", doc.keyphrases}};
}

inline void write_documents(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path);
  for (const auto& d : docs) out << document_to_json(d).dump() << '\n';
}

/// Token streams feeding build_vocab: source then keyphrases, per document.
inline std::vector<std::vector<std::string>> vocab_streams(const std::vector<Document>& docs) {
  std::vector<std::vector<std::string>> streams;
  for (const auto& d : docs) {
    streams.push_back(source_tokens(d));
    for (const auto& k : d.keyphrases) streams.push_back(preprocess_text(k));
  }
  return streams;
}

}  // namespace corrkg
