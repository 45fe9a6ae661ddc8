#pragma once

#include "scdm/numkit/matrix.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace scdm::io {

using Json = nlohmann::json;

// Shortest representation that round-trips to the same double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::string read_text(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text(const std::filesystem::path& path, std::string_view text);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

Json matrix_to_json(const numkit::ConstMatrixRef& m);
numkit::Matrix matrix_from_json(const Json& j);
Json vector_to_json(const numkit::Vector& v);
numkit::Vector vector_from_json(const Json& j);

}  // namespace scdm::io
