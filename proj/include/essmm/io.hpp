#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "essmm/csr.hpp"
#include "essmm/error.hpp"

namespace essmm {

struct EdgeList {
  index_t n_nodes = 0;
  std::vector<std::pair<index_t, index_t>> edges;
};

struct EdgeListOptions {
  std::optional<index_t> n_nodes;
  bool symmetrize = false;
  bool add_self_loops = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Splits on spaces/tabs.
inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class Int>
std::optional<Int> parse_int(std::string_view tok) {
  Int v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  return out;
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace detail

// Text edge list: "src dst" per line, '#' comments, optional leading
// "n <count>" line declaring the node count.
inline EdgeList read_edge_list(std::istream& in, const std::string& source = "<stream>") {
  EdgeList el;
  std::optional<index_t> declared;
  bool seen_content = false;
  index_t max_index = -1;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto toks = detail::split_ws(body);
    if (!seen_content && toks.size() == 2 && toks[0] == "n") {
      seen_content = true;
      auto n = detail::parse_int<index_t>(toks[1]);
      if (!n || *n < 0) throw ParseError(source, lineno, "bad node count '" + std::string(toks[1]) + "'");
      declared = *n;
      continue;
    }
    seen_content = true;
    if (toks.size() != 2) {
      throw ParseError(source, lineno, "expected two indices, got " + std::to_string(toks.size()) + " fields");
    }
    auto src = detail::parse_int<index_t>(toks[0]);
    auto dst = detail::parse_int<index_t>(toks[1]);
    if (!src || !dst || *src < 0 || *dst < 0) {
      throw ParseError(source, lineno, "bad edge '" + std::string(body) + "'");
    }
    if (declared && (*src >= *declared || *dst >= *declared)) {
      throw ParseError(source, lineno,
                       "edge (" + std::to_string(*src) + ", " + std::to_string(*dst) +
                           ") exceeds declared node count " + std::to_string(*declared));
    }
    max_index = std::max({max_index, *src, *dst});
    el.edges.emplace_back(*src, *dst);
  }
  el.n_nodes = declared ? *declared : max_index + 1;
  return el;
}

// Unweighted adjacency: every stored value is 1.0 and repeated edges
// collapse to one entry.
inline CsrMatrix edge_list_to_csr(const EdgeList& el, const EdgeListOptions& opt = {}) {
  const index_t n = opt.n_nodes ? *opt.n_nodes : el.n_nodes;
  std::vector<CooEntry> coo;
  coo.reserve(el.edges.size() * (opt.symmetrize ? 2 : 1) + (opt.add_self_loops ? n : 0));
  for (const auto& [s, d] : el.edges) {
    if (s >= n || d >= n) {
      throw Error(ErrorKind::OutOfRange, "edge (" + std::to_string(s) + ", " + std::to_string(d) +
                                             ") exceeds node count " + std::to_string(n));
    }
    coo.push_back({s, d, 1.0f});
    if (opt.symmetrize) coo.push_back({d, s, 1.0f});
  }
  if (opt.add_self_loops) {
    for (index_t i = 0; i < n; ++i) coo.push_back({i, i, 1.0f});
  }
  CsrMatrix summed = from_coo(n, n, coo);
  std::vector<float> ones(static_cast<std::size_t>(summed.nnz()), 1.0f);
  return CsrMatrix::from_parts_unchecked(
      n, n, {summed.row_ptr().begin(), summed.row_ptr().end()},
      {summed.col_ind().begin(), summed.col_ind().end()}, std::move(ones));
}

inline CsrMatrix load_edge_list(const std::string& path, const EdgeListOptions& opt = {}) {
  auto in = detail::open_in(path);
  EdgeList el = read_edge_list(in, path);
  if (opt.n_nodes) {
    for (std::size_t k = 0; k < el.edges.size(); ++k) {
      const auto [s, d] = el.edges[k];
      if (s >= *opt.n_nodes || d >= *opt.n_nodes) {
        throw Error(ErrorKind::OutOfRange,
                    path + ": edge #" + std::to_string(k) + " (" + std::to_string(s) + ", " +
                        std::to_string(d) + ") exceeds node count " + std::to_string(*opt.n_nodes));
      }
    }
  }
  return edge_list_to_csr(el, opt);
}

// Writes the sparsity pattern; values are not preserved.
inline void write_edge_list(std::ostream& os, const CsrMatrix& m) {
  os << "n " << m.n_rows() << '\n';
  for (index_t i = 0; i < m.n_rows(); ++i) {
    for (index_t c : m.row_cols(i)) os << i << ' ' << c << '\n';
  }
}

inline void save_edge_list(const std::string& path, const CsrMatrix& m) {
  auto out = detail::open_out(path);
  write_edge_list(out, m);
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

// Dense binary: "ESMM", u32 version (1), u32 rows, u32 cols, then rows*cols
// little-endian IEEE-754 binary32, row-major.
inline constexpr std::array<char, 4> kDenseMagic{'E', 'S', 'M', 'M'};
inline constexpr std::uint32_t kDenseVersion = 1;

inline void write_dense(std::ostream& os, const DenseMatrix& m) {
  os.write(kDenseMagic.data(), kDenseMagic.size());
  detail::put_u32(os, kDenseVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (float v : m.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline DenseMatrix read_dense(std::istream& in, const std::string& source = "<stream>") {
  std::array<unsigned char, 16> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw Error(ErrorKind::Parse, source + ": truncated dense header");
  }
  if (std::memcmp(header.data(), kDenseMagic.data(), 4) != 0) {
    throw Error(ErrorKind::Parse, source + ": bad magic, expected ESMM");
  }
  if (auto version = detail::get_u32(header.data() + 4); version != kDenseVersion) {
    throw Error(ErrorKind::Parse, source + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t rows = detail::get_u32(header.data() + 8);
  const std::uint32_t cols = detail::get_u32(header.data() + 12);
  if (rows > INT32_MAX || cols > INT32_MAX) {
    throw Error(ErrorKind::Parse, source + ": dimensions too large");
  }
  const std::size_t count = std::size_t{rows} * cols;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorKind::Parse, source + ": truncated payload, expected " + std::to_string(count) +
                                      " values");
  }
  std::vector<float> data(count);
  for (std::size_t k = 0; k < count; ++k) {
    data[k] = std::bit_cast<float>(detail::get_u32(raw.data() + 4 * k));
  }
  return DenseMatrix(static_cast<index_t>(rows), static_cast<index_t>(cols), std::move(data));
}

inline DenseMatrix load_dense(const std::string& path) {
  auto in = detail::open_in(path, std::ios::binary);
  return read_dense(in, path);
}

inline void save_dense(const std::string& path, const DenseMatrix& m) {
  auto out = detail::open_out(path, std::ios::binary);
  write_dense(out, m);
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

// Labels CSV "node_id,label"; an optional non-numeric header row is skipped.
// Every node in [0, n_nodes) must be labelled exactly once.
inline std::vector<index_t> read_labels(std::istream& in, index_t n_nodes,
                                        const std::string& source = "<stream>") {
  std::vector<index_t> labels(static_cast<std::size_t>(n_nodes), -1);
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto comma = body.find(',');
    if (comma == std::string_view::npos) throw ParseError(source, lineno, "expected 'node_id,label'");
    auto node = detail::parse_int<index_t>(detail::trim(body.substr(0, comma)));
    auto label = detail::parse_int<index_t>(detail::trim(body.substr(comma + 1)));
    if (first && (!node || !label)) {
      first = false;
      continue;  // header
    }
    first = false;
    if (!node || !label || *label < 0) throw ParseError(source, lineno, "bad row '" + std::string(body) + "'");
    if (*node < 0 || *node >= n_nodes) {
      throw ParseError(source, lineno, "node " + std::to_string(*node) + " outside graph of " +
                                           std::to_string(n_nodes) + " nodes");
    }
    if (labels[*node] != -1) throw ParseError(source, lineno, "duplicate node " + std::to_string(*node));
    labels[*node] = *label;
  }
  for (index_t i = 0; i < n_nodes; ++i) {
    if (labels[i] < 0) throw Error(ErrorKind::Parse, source + ": node " + std::to_string(i) + " has no label");
  }
  return labels;
}

inline std::vector<index_t> load_labels(const std::string& path, index_t n_nodes) {
  auto in = detail::open_in(path);
  return read_labels(in, n_nodes, path);
}

inline void save_labels(const std::string& path, std::span<const index_t> labels) {
  auto out = detail::open_out(path);
  out << "node_id,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

// Mask: one node id per line. Returned sorted and de-duplicated.
inline std::vector<index_t> read_mask(std::istream& in, index_t n_nodes,
                                      const std::string& source = "<stream>") {
  std::vector<index_t> mask;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    auto node = detail::parse_int<index_t>(body);
    if (!node || *node < 0 || *node >= n_nodes) {
      throw ParseError(source, lineno, "bad node id '" + std::string(body) + "'");
    }
    mask.push_back(*node);
  }
  std::sort(mask.begin(), mask.end());
  mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  return mask;
}

inline std::vector<index_t> load_mask(const std::string& path, index_t n_nodes) {
  auto in = detail::open_in(path);
  return read_mask(in, n_nodes, path);
}

inline void save_mask(const std::string& path, std::span<const index_t> mask) {
  auto out = detail::open_out(path);
  for (index_t v : mask) out << v << '\n';
}

}  // namespace essmm
