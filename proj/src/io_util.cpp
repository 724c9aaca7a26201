#include "io_util.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dbmt/error.hpp"

namespace dbmt::detail {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t\r");
    const auto e = tok.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : tok.substr(b, e - b + 1));
  }
  return out;
}

bool parse_number(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace

std::vector<std::vector<double>> read_csv_numbers(const std::filesystem::path& path,
                                                  std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto tokens = split(line);
    std::vector<double> row(tokens.size());
    bool numeric = true;
    for (std::size_t k = 0; k < tokens.size(); ++k) numeric = numeric && parse_number(tokens[k], row[k]);
    if (!numeric) {
      if (first) {
        if (header) *header = tokens;
        first = false;
        continue;
      }
      throw ConfigError("non-numeric value in CSV file " + path.string() + ": " + line);
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dbmt::detail
