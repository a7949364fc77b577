#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Locale-independent number formatting and parsing shared by every file
// format in the project.
namespace mkl::text {

// Shortest decimal text with 17 significant digits; parses back bit-exact.
std::string format_real(double value);

// Parses a real written by format_real (or any plain decimal / exponent
// form, plus "inf", "-inf", "nan"). Throws IoError on trailing garbage.
double parse_real(std::string_view token);

long long parse_int(std::string_view token);

// Splits on runs of ASCII whitespace.
std::vector<std::string_view> split_ws(std::string_view line);

// Whole-file helpers. write_atomic writes to a sibling temporary and renames
// it into place, so readers never observe a partial file.
std::string read_file(const std::filesystem::path& path);
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mkl::text
