#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace medbma::io {

// 17 significant digits, locale independent, shortest exponent form.
std::string format_double(double value);

std::vector<std::string_view> split_csv_line(std::string_view line);
std::string_view trim(std::string_view s);

// Strict numeric parsing of the whole field; nullopt on any trailing junk.
std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Parses comma separated reals, e.g. "0.1,0.5,1".
std::vector<double> parse_real_list(std::string_view text);

}  // namespace medbma::io
