#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lqmkv/matrix_path.hpp"

namespace lqmkv {

/// CSV writer with fixed 17-significant-digit formatting so identical runs
/// produce byte-identical files.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void header(const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  static std::string format(double v);

 private:
  struct Impl;
  Impl* impl_;
};

/// Dumps a matrix path as t plus row-major entries; `name` prefixes the
/// entry columns (name_r_c).
void write_path_csv(const std::string& path, const std::string& name, const MatrixPath& p,
                    const std::vector<double>& grid);

/// FNV-1a hash of a file's bytes, hex-encoded; used in run manifests.
std::string file_hash(const std::string& path);

/// Writes a small JSON manifest (inputs, hash, seed, version, command line).
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    std::uint64_t seed, const std::vector<std::string>& argv);

}  // namespace lqmkv
