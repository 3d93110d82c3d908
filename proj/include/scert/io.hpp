#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scert/core.hpp"
#include "scert/error.hpp"

namespace scert {

inline constexpr char kEmbeddingMagic[4] = {'S', 'C', 'R', 'T'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IOError("truncated header");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
  const std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

// Binary layout: "SCRT", version u32 LE, count u32 LE, dim u32 LE,
// count*dim float32 LE row-major, count newline-terminated ids.
inline void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IOError("cannot open for write: " + path);
  os.write(kEmbeddingMagic, 4);
  detail::write_u32(os, kEmbeddingVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(set.size()));
  detail::write_u32(os, static_cast<std::uint32_t>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (double x : set.row(i)) {
      detail::write_f32(os, static_cast<float>(x));
    }
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::string& id = set.id(i);
    if (id.find('\n') != std::string::npos) {
      throw ConfigError("id contains newline: " + id);
    }
    os << id << '\n';
  }
  if (!os) throw IOError("write failed: " + path);
}

inline EmbeddingSet load_embeddings_binary(std::istream& is,
                                           const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw IOError("bad magic in " + path);
  }
  const std::uint32_t version = detail::read_u32(is);
  if (version != kEmbeddingVersion) {
    throw IOError("unsupported embedding file version " +
                  std::to_string(version));
  }
  const std::uint32_t count = detail::read_u32(is);
  const std::uint32_t dim = detail::read_u32(is);
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(count) * dim);
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(count) * dim; ++i) {
    data.push_back(static_cast<double>(detail::read_f32(is)));
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  std::string line;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw IOError("missing id rows in " + path);
    ids.push_back(line);
  }
  return EmbeddingSet(dim, std::move(data), std::move(ids));
}

// Text layout: one "id x1 x2 ... xD" per line, whitespace separated.
inline EmbeddingSet load_embeddings_text(std::istream& is,
                                         const std::string& path) {
  std::vector<double> data;
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id)) continue;  // blank line
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) {
      throw IOError(path + ":" + std::to_string(lineno) + ": bad number");
    }
    if (row.empty()) {
      throw IOError(path + ":" + std::to_string(lineno) + ": no coordinates");
    }
    if (dim == 0) {
      dim = row.size();
    } else if (row.size() != dim) {
      throw DimensionError(path + ":" + std::to_string(lineno) +
                           ": expected " + std::to_string(dim) + " values");
    }
    ids.push_back(id);
    data.insert(data.end(), row.begin(), row.end());
  }
  return EmbeddingSet(dim, std::move(data), std::move(ids));
}

// Sniffs the 4 magic bytes to pick binary vs text.
inline EmbeddingSet load_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  const bool binary =
      is.gcount() == 4 && std::memcmp(magic, kEmbeddingMagic, 4) == 0;
  is.clear();
  is.seekg(0);
  return binary ? load_embeddings_binary(is, path)
                : load_embeddings_text(is, path);
}

// ---- TREC qrels / run files -------------------------------------------------

using QrelSet = std::map<std::string, std::set<std::string>>;

// Lines: query_id 0 doc_id rel. Entries with rel <= 0 are ignored.
inline QrelSet load_qrels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot open: " + path);
  QrelSet qrels;
  std::string qid, iter, did;
  int rel;
  while (is >> qid >> iter >> did >> rel) {
    if (rel > 0) qrels[qid].insert(did);
  }
  return qrels;
}

inline void save_qrels(const QrelSet& qrels, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot open for write: " + path);
  for (const auto& [qid, docs] : qrels) {
    for (const auto& did : docs) {
      os << qid << " 0 " << did << " 1\n";
    }
  }
}

struct RunEntry {
  std::string doc_id;
  int rank = 0;
  double score = 0.0;
};

using RunFile = std::map<std::string, std::vector<RunEntry>>;

// Lines: query_id Q0 doc_id rank score tag. Entries kept in rank order.
inline RunFile load_run(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot open: " + path);
  RunFile run;
  std::string qid, q0, did, tag;
  int rank;
  double score;
  while (is >> qid >> q0 >> did >> rank >> score >> tag) {
    run[qid].push_back(RunEntry{did, rank, score});
  }
  for (auto& [k, v] : run) {
    std::stable_sort(v.begin(), v.end(),
                     [](const RunEntry& a, const RunEntry& b) {
                       return a.rank < b.rank;
                     });
  }
  return run;
}

inline std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// ---- digests ---------------------------------------------------------------

// FNV-1a 64 over raw file bytes; used by run manifests.
inline std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IOError("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

}  // namespace scert
