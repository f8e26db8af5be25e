#include "liatm/rag.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_url.hpp"

namespace liatm::rag {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::Requirements: return "requirements";
    case SourceKind::Design: return "design";
    case SourceKind::PreviousThreatModel: return "previous-threat-model";
    case SourceKind::SensorLog: return "sensor-log";
    case SourceKind::Other: return "other";
  }
  return "other";
}

std::optional<SourceKind> source_kind_from_string(std::string_view s) {
  for (auto k : {SourceKind::Requirements, SourceKind::Design, SourceKind::PreviousThreatModel,
                 SourceKind::SensorLog, SourceKind::Other}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

double default_weight(SourceKind kind) {
  switch (kind) {
    case SourceKind::PreviousThreatModel: return 0.9;
    case SourceKind::Design: return 0.8;
    case SourceKind::Requirements: return 0.7;
    case SourceKind::SensorLog: return 0.5;
    case SourceKind::Other: return 0.5;
  }
  return 0.5;
}

// ---------------------------------------------------------------------------
// Chunking

std::vector<std::string> chunk_text(std::string_view text, std::size_t max_chars,
                                    std::size_t overlap_chars) {
  if (max_chars == 0) throw std::invalid_argument("max_chars must be positive");
  if (overlap_chars >= max_chars) throw std::invalid_argument("overlap_chars must be < max_chars");

  std::vector<std::size_t> starts;  // byte offset of every code point, plus end sentinel
  for (std::size_t i = 0; i < text.size(); ++i)
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
  const std::size_t n = starts.size();
  starts.push_back(text.size());

  auto is_space = [&](std::size_t cp) {
    const char c = text[starts[cp]];
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };

  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = std::min(start + max_chars, n);
    if (end < n) {
      for (std::size_t i = end; i > start + overlap_chars; --i) {
        if (is_space(i - 1)) {
          end = i;
          break;
        }
      }
    }
    out.emplace_back(text.substr(starts[start], starts[end] - starts[start]));
    if (end == n) break;
    start = end - overlap_chars;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding

std::uint64_t stable_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {
void normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) return;
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
}

double norm_of(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}
}  // namespace

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors with different dimensions");
  const double na = norm_of(a), nb = norm_of(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) v[stable_hash(tok) % dim_] += 1.0;
    normalize(v);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<double> embed(std::string_view text) {
  static const HashingEmbedder embedder;
  return embedder.embed_one(std::string(text));
}

std::vector<std::vector<double>> RemoteEmbedder::embed(const std::vector<std::string>& texts) const {
  detail::SplitUrl url;
  try {
    url = detail::split_url(config_.endpoint);
  } catch (const std::invalid_argument& e) {
    throw RemoteEmbedderError(e.what());
  }
  httplib::Client client(url.origin);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  if (!config_.auth_token.empty()) client.set_bearer_token_auth(config_.auth_token);

  const nlohmann::json body = {{"input", texts}};
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) throw RemoteEmbedderError("embedder request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw RemoteEmbedderError("embedder returned HTTP " + std::to_string(res->status));

  std::vector<std::vector<double>> out;
  try {
    auto j = nlohmann::json::parse(res->body);
    out = j.at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw RemoteEmbedderError(std::string("malformed embedder response: ") + e.what());
  }
  if (out.size() != texts.size()) throw RemoteEmbedderError("embedder returned wrong vector count");
  for (auto& v : out) {
    if (v.size() != config_.dimension)
      throw RemoteEmbedderError("embedder returned dimension " + std::to_string(v.size()) +
                                ", expected " + std::to_string(config_.dimension));
    normalize(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index

void VectorIndex::register_document(const SourceDocument& doc) {
  if (!(doc.weight >= 0.0 && doc.weight <= 1.0))
    throw RagError("document '" + doc.id + "' weight must be within [0, 1]");
  if (doc.id.empty()) throw RagError("document id must be non-empty");
  if (!docs_.emplace(doc.id, doc).second) throw RagError("duplicate document id '" + doc.id + "'");
}

std::size_t VectorIndex::add_document(const SourceDocument& doc, const Embedder& embedder,
                                      ChunkingOptions options) {
  if (embedder.dimension() != dim_) throw RagError("embedder dimension does not match the index");
  auto texts = chunk_text(doc.text, options.max_chars, options.overlap_chars);
  auto vectors = texts.empty() ? std::vector<std::vector<double>>{} : embedder.embed(texts);
  register_document(doc);
  for (std::size_t i = 0; i < texts.size(); ++i)
    chunks_.push_back({doc.id, i, std::move(texts[i]), std::move(vectors[i])});
  return texts.size();
}

void VectorIndex::add_chunk(Chunk chunk) {
  if (chunk.vector.size() != dim_) throw RagError("chunk vector dimension does not match the index");
  if (!docs_.count(chunk.doc_id)) throw RagError("chunk references unregistered document '" + chunk.doc_id + "'");
  chunks_.push_back(std::move(chunk));
}

double VectorIndex::weight_of(const std::string& doc_id) const {
  auto it = docs_.find(doc_id);
  return it == docs_.end() ? 0.0 : it->second.weight;
}

std::vector<RetrievalResult> VectorIndex::search(const std::vector<double>& query, std::size_t k) const {
  if (query.size() != dim_) throw RagError("query dimension does not match the index");
  if (k == 0 || norm_of(query) == 0.0) return {};

  std::vector<RetrievalResult> scored;
  scored.reserve(chunks_.size());
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const auto& c = chunks_[i];
    scored.push_back({i, c.doc_id, c.seq, c.text, cosine(query, c.vector)});
  }
  auto better = [this](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.score != b.score) return a.score > b.score;
    const double wa = weight_of(a.doc_id), wb = weight_of(b.doc_id);
    if (wa != wb) return wa > wb;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.seq < b.seq;
  };
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    better);
  scored.resize(take);
  return scored;
}

std::vector<RetrievalResult> retrieve(const VectorIndex& index, const Embedder& embedder,
                                      std::string_view query, std::size_t k) {
  if (embedder.dimension() != index.dimension())
    throw RagError("embedder dimension does not match the index");
  return index.search(embedder.embed_one(std::string(query)), k);
}

SourceDocument load_document_file(const std::filesystem::path& path, std::string id, SourceKind kind,
                                  std::optional<double> weight) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".txt" && ext != ".md" && ext != ".markdown") throw UnsupportedFormat(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RagError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  SourceDocument doc;
  doc.id = std::move(id);
  doc.kind = kind;
  doc.weight = weight.value_or(default_weight(kind));
  doc.title = path.filename().string();
  doc.text = buf.str();
  return doc;
}

}  // namespace liatm::rag
