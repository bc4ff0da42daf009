// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <string_view>

#include "svrattn/multihead.hpp"
#include "svrattn/tensor.hpp"

namespace svrattn {

/// Text matrices: a header line `N D`, then N lines of D numbers separated
/// by spaces. Lines starting with '#' are skipped anywhere in the file.
Matrix parse_matrix(std::istream& in, const std::string& name);
Matrix load_matrix(const std::filesystem::path& path);

/// Shortest decimal string that reads back as exactly the same double.
std::string format_double(double x);
std::string format_matrix(const Matrix& m);

/// Writes to a temporary file in the same directory, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void save_matrix(const Matrix& m, const std::filesystem::path& path);

/// `key = value` lines; '#' comments and blank lines skipped.
struct Manifest {
  std::string source;         // file name for error messages
  std::filesystem::path dir;  // paths in values are relative to this
  std::map<std::string, std::string> entries;
  std::map<std::string, std::size_t> lines;  // key -> line number, for errors

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::filesystem::path path_of(const std::string& key) const;
};

Manifest parse_manifest(std::istream& in, const std::string& name, const std::filesystem::path& dir);
Manifest load_manifest(const std::filesystem::path& path);

/// Builds heads 0, 1, ... from keys wq.N, wk.N, wv.N, wo.N (matrix files),
/// scale.N (default 1) and variant.N (softmax, bn, bn-recenter, linear-elu,
/// linear-exp:T; default softmax). `beta` and `eps` apply to every BN head.
/// All matrix files are loaded before anything is returned.
HeadConfig load_head_config(const Manifest& manifest);

/// Parses a head variant name as used in manifests and on the command line.
HeadVariant parse_head_variant(std::string_view name, std::size_t dim, double beta, double eps);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

}  // namespace svrattn
