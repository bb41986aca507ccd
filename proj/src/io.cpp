#include "odedyn/io.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#ifndef ODEDYN_VERSION
#define ODEDYN_VERSION "0.0.0+unknown"
#endif

namespace odedyn {

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), res.ptr);
}

std::string format_number(std::int64_t value) { return std::to_string(value); }

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  if (header.empty()) throw std::invalid_argument("CSV header must not be empty");
  add_row(header);
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw std::invalid_argument("CSV row has " + std::to_string(cells.size()) +
                                " cells, header has " + std::to_string(columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
}

void CsvWriter::add_row(std::initializer_list<double> values) {
  add_row(std::vector<double>(values));
}

void CsvWriter::add_row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  add_row(cells);
}

std::string ode_trajectory_csv(const OdeTrajectory& traj) {
  const bool with_states = !traj.states.empty();
  std::vector<std::string> header{"t", "risk"};
  int p = 0;
  int k = 0;
  if (with_states) {
    p = traj.states.front().p();
    k = traj.states.front().k();
    for (int j = 0; j < p; ++j) {
      for (int l = j; l < p; ++l) header.push_back("q_" + std::to_string(j) + "_" + std::to_string(l));
    }
    for (int j = 0; j < p; ++j) {
      for (int r = 0; r < k; ++r) header.push_back("m_" + std::to_string(j) + "_" + std::to_string(r));
    }
  }
  CsvWriter csv(std::move(header));
  std::vector<double> row;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    row.assign({traj.times[i], traj.risks[i]});
    if (with_states) {
      const auto& s = traj.states[i];
      for (int j = 0; j < p; ++j) {
        for (int l = j; l < p; ++l) row.push_back(s.Q(j, l));
      }
      for (int j = 0; j < p; ++j) {
        for (int r = 0; r < k; ++r) row.push_back(s.M(j, r));
      }
    }
    csv.add_row(row);
  }
  return csv.str();
}

std::string sgd_trajectory_csv(const SgdTrajectory& traj) {
  CsvWriter csv({"step", "t", "risk"});
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    csv.add_row({format_number(traj.steps[i]), format_number(traj.times[i]),
                 format_number(traj.risks[i])});
  }
  return csv.str();
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw std::invalid_argument("expected a non-empty array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::invalid_argument("ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json snapshot_json(double t, const OverlapState& state) {
  return Json{{"t", t}, {"Q", matrix_json(state.Q)}, {"M", matrix_json(state.M)}};
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " +
                               ec.message());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string version_string() { return ODEDYN_VERSION; }

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace odedyn
