#include "lqmkv/csv.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lqmkv/errors.hpp"

namespace lqmkv {

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  if (!impl_->out) {
    delete impl_;
    throw ConfigError("cannot open output file: " + path);
  }
}

CsvWriter::~CsvWriter() { delete impl_; }

std::string CsvWriter::format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void CsvWriter::header(const std::vector<std::string>& columns) {
  for (std::size_t i = 0; i < columns.size(); ++i)
    impl_->out << (i ? "," : "") << columns[i];
  impl_->out << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i)
    impl_->out << (i ? "," : "") << format(values[i]);
  impl_->out << "\n";
}

void write_path_csv(const std::string& path, const std::string& name, const MatrixPath& p,
                    const std::vector<double>& grid) {
  CsvWriter w(path);
  std::vector<std::string> cols{"t"};
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      cols.push_back(name + "_" + std::to_string(r) + "_" + std::to_string(c));
  w.header(cols);
  for (double t : grid) {
    const Eigen::MatrixXd v = p.at_clamped(t);
    std::vector<double> row{t};
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) row.push_back(v(r, c));
    w.row(row);
  }
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    std::uint64_t seed, const std::vector<std::string>& argv) {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = seed;
  j["version"] = "lqmkv 1.0";
  j["argv"] = argv;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, hash] : inputs) in[name] = hash;
  j["inputs"] = std::move(in);
  std::ofstream out(out_dir + "/manifest.json");
  if (!out) throw ConfigError("cannot write manifest in " + out_dir);
  out << j.dump(2) << "\n";
}

}  // namespace lqmkv
