#pragma once

// Retrieval store: source documents, chunking, embedding and exact top-k
// cosine retrieval.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace liatm::rag {

enum class SourceKind { Requirements, Design, PreviousThreatModel, SensorLog, Other };

std::string_view to_string(SourceKind kind);
std::optional<SourceKind> source_kind_from_string(std::string_view s);
// previous-threat-model 0.9, design 0.8, requirements 0.7, sensor-log 0.5, other 0.5
double default_weight(SourceKind kind);

struct SourceDocument {
  std::string id;
  SourceKind kind = SourceKind::Other;
  double weight = 0.5;
  std::string title;
  std::string text;
};

struct Chunk {
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  std::vector<double> vector;
};

struct RetrievalResult {
  std::size_t chunk_index = 0;  // position in VectorIndex::chunks()
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  double score = 0.0;
};

class RagError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public RagError {
 public:
  explicit UnsupportedFormat(const std::filesystem::path& p)
      : RagError("unsupported document format: " + p.string() + " (expected .txt or .md)") {}
};

class RemoteEmbedderError : public RagError {
 public:
  using RagError::RagError;
};

inline constexpr std::size_t kDefaultMaxChars = 1200;
inline constexpr std::size_t kDefaultOverlapChars = 200;
inline constexpr std::size_t kEmbeddingDimension = 256;

// Splits on code points. Consecutive chunks share exactly `overlap_chars`
// characters; a chunk ends after the last whitespace inside its window when
// that still advances the cursor, otherwise at the window edge. Stops once a
// chunk reaches the end of the text. Requires max_chars >= 1 and
// overlap_chars < max_chars (throws std::invalid_argument otherwise).
std::vector<std::string> chunk_text(std::string_view text, std::size_t max_chars,
                                    std::size_t overlap_chars);

inline std::vector<std::string> chunk_document(const SourceDocument& doc,
                                               std::size_t max_chars = kDefaultMaxChars,
                                               std::size_t overlap_chars = kDefaultOverlapChars) {
  return chunk_text(doc.text, max_chars, overlap_chars);
}

// 64-bit FNV-1a.
std::uint64_t stable_hash(std::string_view bytes);

// Lowercased alphanumeric runs; bytes >= 0x80 count as token characters so
// UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) const = 0;
  [[nodiscard]] std::vector<double> embed_one(const std::string& text) const {
    return embed({text}).front();
  }
};

// Token-hashing bag of words, L2-normalized; empty token set -> zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = kEmbeddingDimension) : dim_(dimension) {}
  [[nodiscard]] std::size_t dimension() const override { return dim_; }
  [[nodiscard]] std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) const override;

 private:
  std::size_t dim_;
};

std::vector<double> embed(std::string_view text);

struct RemoteEmbedderConfig {
  std::string endpoint;  // full URL, e.g. http://host:port/v1/embed
  std::string auth_token;
  std::size_t dimension = kEmbeddingDimension;
  int timeout_seconds = 30;
};

// POST {"input": [...]} -> {"vectors": [[...]]}; vectors are re-normalized.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {}
  [[nodiscard]] std::size_t dimension() const override { return config_.dimension; }
  [[nodiscard]] std::vector<std::vector<double>> embed(
      const std::vector<std::string>& texts) const override;

 private:
  RemoteEmbedderConfig config_;
};

struct ChunkingOptions {
  std::size_t max_chars = kDefaultMaxChars;
  std::size_t overlap_chars = kDefaultOverlapChars;
};

// Exact linear-scan index. Writers must be serialized by the caller; const
// member functions are safe to call concurrently.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dimension = kEmbeddingDimension) : dim_(dimension) {}

  // Returns the number of chunks added. Throws RagError for a duplicate id or
  // a weight outside [0, 1].
  std::size_t add_document(const SourceDocument& doc, const Embedder& embedder,
                           ChunkingOptions options = {});
  // Low-level insertion; the owning document must already be registered.
  void add_chunk(Chunk chunk);
  void register_document(const SourceDocument& doc);

  [[nodiscard]] std::size_t dimension() const { return dim_; }
  [[nodiscard]] const std::vector<Chunk>& chunks() const { return chunks_; }
  [[nodiscard]] const std::map<std::string, SourceDocument>& documents() const { return docs_; }
  [[nodiscard]] double weight_of(const std::string& doc_id) const;

  // Sorted by score descending, then document weight descending, doc id
  // ascending, seq ascending. Zero query vector -> empty.
  [[nodiscard]] std::vector<RetrievalResult> search(const std::vector<double>& query,
                                                    std::size_t k) const;

 private:
  std::size_t dim_;
  std::vector<Chunk> chunks_;
  std::map<std::string, SourceDocument> docs_;
};

std::vector<RetrievalResult> retrieve(const VectorIndex& index, const Embedder& embedder,
                                      std::string_view query, std::size_t k);

// Reads a .txt / .md / .markdown file. Throws UnsupportedFormat otherwise.
SourceDocument load_document_file(const std::filesystem::path& path, std::string id,
                                  SourceKind kind, std::optional<double> weight = std::nullopt);

}  // namespace liatm::rag
