// SPDX-License-Identifier: Apache-2.0
#include "svrattn/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <system_error>
#include <vector>

#include "svrattn/errors.hpp"

namespace svrattn {
namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
  const char* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && p == end;
}

}  // namespace

Matrix parse_matrix(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t lineno = 0;
  std::size_t rows = 0, cols = 0;
  bool have_header = false;
  std::vector<double> data;
  std::size_t got = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto toks = split_ws(line);
    if (!have_header) {
      if (toks.size() != 2 || !parse_number(toks[0], rows) || !parse_number(toks[1], cols)) {
        throw ParseError(name, lineno, "expected header `N D`");
      }
      have_header = true;
      data.reserve(rows * cols);
      continue;
    }
    if (got == rows) throw ParseError(name, lineno, "more than the " + std::to_string(rows) + " rows in the header");
    if (toks.size() != cols) {
      throw ParseError(name, lineno, "expected " + std::to_string(cols) + " values, found " + std::to_string(toks.size()));
    }
    for (auto tok : toks) {
      double x = 0.0;
      if (!parse_number(tok, x)) throw ParseError(name, lineno, "not a number: `" + std::string(tok) + "`");
      if (!std::isfinite(x)) throw ParseError(name, lineno, "non-finite value `" + std::string(tok) + "`");
      data.push_back(x);
    }
    ++got;
  }
  if (!have_header) throw ParseError(name, lineno + 1, "missing header `N D`");
  if (got != rows) {
    throw ParseError(name, lineno + 1, "expected " + std::to_string(rows) + " rows, found " + std::to_string(got));
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix load_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return parse_matrix(in, path.string());
}

std::string format_double(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, p);
}

std::string format_matrix(const Matrix& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ' ';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::random_device rd;
  const fs::path tmp = dir / (path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot rename onto " + path.string());
  }
}

void save_matrix(const Matrix& m, const fs::path& path) { write_file_atomic(path, format_matrix(m)); }

const std::string& Manifest::get(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw ParameterError("manifest: missing key `" + key + "`");
  return it->second;
}

fs::path Manifest::path_of(const std::string& key) const {
  fs::path p(get(key));
  return p.is_absolute() ? p : dir / p;
}

Manifest parse_manifest(std::istream& in, const std::string& name, const fs::path& dir) {
  Manifest m;
  m.source = name;
  m.dir = dir;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skippable(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name, lineno, "expected `key = value`");
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    const std::string value(trim(std::string_view(line).substr(eq + 1)));
    if (key.empty() || value.empty()) throw ParseError(name, lineno, "empty key or value");
    const auto dot = key.find('.');
    const std::string stem = key.substr(0, dot);
    const bool indexed = stem == "wq" || stem == "wk" || stem == "wv" || stem == "wo" || stem == "scale" || stem == "variant";
    std::size_t idx = 0;
    const bool ok = indexed ? dot != std::string::npos && parse_number(std::string_view(key).substr(dot + 1), idx)
                            : (key == "beta" || key == "eps");
    if (!ok) throw ParseError(name, lineno, "unknown key `" + key + "`");
    if (m.entries.count(key)) throw ParseError(name, lineno, "duplicate key `" + key + "`");
    m.entries[key] = value;
    m.lines[key] = lineno;
  }
  return m;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return parse_manifest(in, path.string(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

HeadVariant parse_head_variant(std::string_view name, std::size_t dim, double beta, double eps) {
  if (name == "softmax") return SoftmaxSpec{};
  if (name == "bn") return BnSpec{BnMode::FullBN, beta, eps};
  if (name == "bn-recenter") return BnSpec{BnMode::RecenterOnly, beta, eps};
  if (name == "linear-elu") return LinearSpec{FeatureMapSpec::elu_plus_one(dim)};
  if (name.substr(0, 11) == "linear-exp:") {
    std::size_t t = 0;
    if (!parse_number(name.substr(11), t)) throw ParameterError("bad degree in `" + std::string(name) + "`");
    return LinearSpec{FeatureMapSpec::exp_truncated(t, dim)};
  }
  throw ParameterError("unknown head variant `" + std::string(name) + "`");
}

HeadConfig load_head_config(const Manifest& m) {
  double beta = 1.0, eps = kDefaultEpsBn;
  auto number = [&](const std::string& key, double& out) {
    if (!m.has(key)) return;
    if (!parse_number(std::string_view(m.get(key)), out)) {
      throw ParseError(m.source, m.lines.at(key), "`" + key + "` is not a number");
    }
  };
  number("beta", beta);
  number("eps", eps);

  HeadConfig cfg;
  for (std::size_t i = 0;; ++i) {
    const std::string s = std::to_string(i);
    if (!m.has("wq." + s)) break;
    HeadParams h;
    h.w_q = load_matrix(m.path_of("wq." + s));
    h.w_k = load_matrix(m.path_of("wk." + s));
    h.w_v = load_matrix(m.path_of("wv." + s));
    h.w_o = load_matrix(m.path_of("wo." + s));
    if (m.has("scale." + s) && !parse_number(std::string_view(m.get("scale." + s)), h.scale)) {
      throw ParseError(m.source, m.lines.at("scale." + s), "scale must be a positive integer");
    }
    if (h.scale == 0) throw ParameterError("manifest: scale." + s + " must be >= 1");
    if (m.has("variant." + s)) {
      try {
        h.variant = parse_head_variant(m.get("variant." + s), h.w_q.rows(), beta, eps);
      } catch (const ParameterError& e) {
        throw ParseError(m.source, m.lines.at("variant." + s), e.what());
      }
    }
    cfg.heads.push_back(std::move(h));
  }
  if (cfg.heads.empty()) throw ParameterError("manifest: no heads (expected wq.0)");
  for (const auto& [key, line] : m.lines) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    if (std::stoul(key.substr(dot + 1)) >= cfg.heads.size()) {
      throw ParseError(m.source, line, "`" + key + "` refers to a head without wq");
    }
  }
  return cfg;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace svrattn
