#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairmix/controller.h"

// Persisted memory layout (text, one record per line):
//
//   fairmix-memory
//   version 1
//   schema <16 hex digits>
//   values <n_1> ... <n_A>
//   budget <B>
//   tau <hexfloat>
//   clusters <K>
//   cluster <total> <dim> <centroid hexfloats...> <counts per value...>
//   checksum <16 hex digits>      FNV-1a of every preceding byte

namespace fairmix {
namespace {

constexpr const char* kMagic = "fairmix-memory";
constexpr int kVersion = 1;

std::string hexfloat(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size())
    throw MemoryError("corrupt memory file: bad number '" + tok + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& tok, int base = 10) {
  char* end = nullptr;
  const auto v = std::strtoull(tok.c_str(), &end, base);
  if (tok.empty() || tok[0] == '-' || end != tok.c_str() + tok.size())
    throw MemoryError("corrupt memory file: bad integer '" + tok + "'");
  return v;
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::string> expect(std::istringstream& in, const char* key,
                                std::size_t min_args) {
  std::string line;
  if (!std::getline(in, line))
    throw MemoryError(std::string("corrupt memory file: missing '") + key + "'");
  auto tok = words(line);
  if (tok.empty() || tok[0] != key || tok.size() < min_args + 1)
    throw MemoryError(std::string("corrupt memory file: expected '") + key + "'");
  return tok;
}

}  // namespace

std::string MemoryModule::serialize() const {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "version " << kVersion << "\n";
  out << "schema " << hex64(schema_hash_) << "\n";
  out << "values";
  for (auto n : value_counts_) out << " " << n;
  out << "\n";
  out << "budget " << budget_ << "\n";
  out << "tau " << hexfloat(tau_) << "\n";
  out << "clusters " << clusters_.size() << "\n";
  for (const auto& c : clusters_) {
    out << "cluster " << c.total << " " << c.centroid.size();
    for (Eigen::Index i = 0; i < c.centroid.size(); ++i)
      out << " " << hexfloat(c.centroid[i]);
    for (const auto& row : c.counts)
      for (auto n : row) out << " " << n;
    out << "\n";
  }
  std::string body = out.str();
  body += "checksum " + hex64(fnv1a(body)) + "\n";
  return body;
}

MemoryModule MemoryModule::deserialize(std::string_view text,
                                       const AttributeSchema& schema) {
  // Verify the checksum before interpreting anything.
  const std::string all(text);
  const auto pos = all.rfind("checksum ");
  if (pos == std::string::npos || (pos > 0 && all[pos - 1] != '\n'))
    throw MemoryError("corrupt memory file: missing checksum");
  const auto tail = words(all.substr(pos));
  if (tail.size() != 2 || all.back() != '\n')
    throw MemoryError("corrupt memory file: truncated checksum");
  const std::string body = all.substr(0, pos);
  if (parse_uint(tail[1], 16) != fnv1a(body))
    throw MemoryError("corrupt memory file: checksum mismatch");

  std::istringstream in(body);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw MemoryError("not a memory file (bad magic)");
  auto tok = expect(in, "version", 1);
  if (parse_uint(tok[1]) != kVersion)
    throw MemoryError("unsupported memory file version " + tok[1]);

  MemoryModule m;
  m.schema_hash_ = parse_uint(expect(in, "schema", 1)[1], 16);
  if (m.schema_hash_ != schema.hash())
    throw MemoryError("memory file was written for a different attribute schema");
  tok = expect(in, "values", 0);
  for (std::size_t i = 1; i < tok.size(); ++i)
    m.value_counts_.push_back(parse_uint(tok[i]));
  if (m.value_counts_.size() != schema.size())
    throw MemoryError("corrupt memory file: value layout mismatch");
  for (std::size_t a = 0; a < schema.size(); ++a)
    if (m.value_counts_[a] != schema[a].values.size())
      throw MemoryError("corrupt memory file: value layout mismatch");
  m.budget_ = parse_uint(expect(in, "budget", 1)[1]);
  m.tau_ = parse_real(expect(in, "tau", 1)[1]);
  if (m.budget_ < 1 || !(m.tau_ > 0.0))
    throw MemoryError("corrupt memory file: invalid budget or tau");
  const auto k = parse_uint(expect(in, "clusters", 1)[1]);
  if (k > m.budget_) throw MemoryError("corrupt memory file: over budget");

  std::size_t cells = 0;
  for (auto n : m.value_counts_) cells += n;
  for (std::uint64_t i = 0; i < k; ++i) {
    tok = expect(in, "cluster", 2);
    Cluster c;
    c.total = parse_uint(tok[1]);
    const auto dim = parse_uint(tok[2]);
    if (tok.size() != 3 + dim + cells)
      throw MemoryError("corrupt memory file: malformed cluster record");
    c.centroid.resize(static_cast<Eigen::Index>(dim));
    for (std::uint64_t j = 0; j < dim; ++j)
      c.centroid[static_cast<Eigen::Index>(j)] = parse_real(tok[3 + j]);
    if (!c.centroid.allFinite())
      throw MemoryError("corrupt memory file: non-finite centroid");
    std::size_t at = 3 + dim;
    for (auto n : m.value_counts_) {
      std::vector<std::uint64_t> row;
      std::uint64_t sum = 0;
      for (std::size_t v = 0; v < n; ++v) {
        row.push_back(parse_uint(tok[at++]));
        sum += row.back();
      }
      if (sum != c.total)
        throw MemoryError("corrupt memory file: counts do not sum to total");
      c.counts.push_back(std::move(row));
    }
    if (!m.clusters_.empty() &&
        m.clusters_.front().centroid.size() != c.centroid.size())
      throw MemoryError("corrupt memory file: mixed centroid dimensions");
    m.clusters_.push_back(std::move(c));
  }
  if (std::getline(in, line))
    throw MemoryError("corrupt memory file: trailing records");
  return m;
}

void MemoryModule::snapshot(const std::string& path) const {
  // Write to a sibling temp file and rename so readers never see a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw MemoryError("cannot write memory file '" + path + "'");
    out << serialize();
    if (!out) throw MemoryError("failed writing memory file '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

MemoryModule MemoryModule::restore(const std::string& path,
                                   const AttributeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MemoryError("cannot read memory file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str(), schema);
}

}  // namespace fairmix
