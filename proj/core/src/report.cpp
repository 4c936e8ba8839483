#include "lsnet/report.hpp"

#include <algorithm>
#include <cstdio>

namespace lsnet {

TextTable::TextTable(std::vector<std::string> header) {
  rows_.push_back(std::move(header));
  rules_.push_back(true);
}

void TextTable::add_row(std::vector<std::string> cells) {
  rows_.push_back(std::move(cells));
  rules_.push_back(false);
}

void TextTable::add_rule() {
  if (!rules_.empty()) rules_.back() = true;
}

std::string TextTable::str() const {
  std::vector<std::size_t> widths;
  for (const auto& row : rows_) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      widths[i] = std::max(widths[i], row[i].size());
    }
  }
  std::string out;
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    for (std::size_t i = 0; i < rows_[r].size(); ++i) {
      const std::string& cell = rows_[r][i];
      // First column left-aligned, the rest right-aligned.
      if (i == 0) {
        out += cell;
        out.append(widths[i] - cell.size(), ' ');
      } else {
        out.append(widths[i] - cell.size(), ' ');
        out += cell;
      }
      if (i + 1 < rows_[r].size()) out += "  ";
    }
    out += '\n';
    if (rules_[r]) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < widths.size(); ++i) total += widths[i] + (i ? 2 : 0);
      out.append(total, '-');
      out += '\n';
    }
  }
  return out;
}

KvWriter::KvWriter(const std::string& kind, int version) {
  out_ = "lsnet-report " + std::to_string(version) + " " + kind + "\n";
}

void KvWriter::add(std::initializer_list<std::string> tokens) {
  bool first = true;
  for (const auto& t : tokens) {
    if (!first) out_ += ' ';
    out_ += t;
    first = false;
  }
  out_ += '\n';
}

std::string format_count(std::uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  int count = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (count > 0 && count % 3 == 0) out += ',';
    out += *it;
    ++count;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string format_millions(double v) { return format_float(v / 1e6, 4); }

std::string format_float(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

}  // namespace lsnet
