#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lsnet {

/// Monospace table renderer for the human-readable report flavor.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> cells);
  void add_rule();
  std::string str() const;

 private:
  std::vector<std::vector<std::string>> rows_;
  std::vector<bool> rules_;
};

/// Line-oriented machine format shared by all reports: one record per line,
/// whitespace-separated tokens, '#' starts a comment. The first line is
/// always "lsnet-report <version> <kind>".
class KvWriter {
 public:
  KvWriter(const std::string& kind, int version = 1);
  void add(std::initializer_list<std::string> tokens);
  std::string str() const { return out_; }

 private:
  std::string out_;
};

std::string format_count(std::uint64_t v);          // 12,345,678
std::string format_millions(double v);              // 1.2346
std::string format_float(double v, int precision);

}  // namespace lsnet
