#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "odedyn/ode.hpp"
#include "odedyn/sgd.hpp"

namespace odedyn {

using Json = nlohmann::json;

/// Shortest decimal string that parses back to the same double.
std::string format_number(double value);
std::string format_number(std::int64_t value);

/// CSV with ',' separator, '.' decimal point, a header row and LF endings.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(const std::vector<std::string>& cells);
  void add_row(std::initializer_list<double> values);
  void add_row(const std::vector<double>& values);

  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

/// Columns t, risk, then q_j_l (j <= l) and m_j_r when states were recorded.
std::string ode_trajectory_csv(const OdeTrajectory& traj);

/// Columns step, t, risk.
std::string sgd_trajectory_csv(const SgdTrajectory& traj);

/// {"t": .., "Q": [[..]], "M": [[..]]}
Json snapshot_json(double t, const OverlapState& state);
Json matrix_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

/// Writes `content` to `path`, creating parent directories. Errors name the path.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Library version with the git description of the build tree.
std::string version_string();

/// 64-bit FNV-1a of `data`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace odedyn
