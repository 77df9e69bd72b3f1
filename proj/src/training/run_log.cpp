#include "l2g/run_log.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "l2g/errors.hpp"

namespace l2g {

namespace {

constexpr std::string_view kHeader = "episode,meta_loss,inner_loss,lr,val_accuracy";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

[[noreturn]] void bad_line(std::size_t line_no, const std::string& msg) {
  throw FormatError("log.csv line " + std::to_string(line_no) + ": " + msg);
}

double parse_double(std::string_view s, std::size_t line_no, const char* column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    bad_line(line_no, std::string("cannot parse ") + column + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void RunLog::append(const LogRecord& record) {
  if (!records_.empty() && record.episode <= records_.back().episode) {
    throw ContractViolation("run log: episode " + std::to_string(record.episode) + " does not follow " +
                            std::to_string(records_.back().episode));
  }
  records_.push_back(record);
}

std::string RunLog::to_csv() const {
  std::ostringstream out;
  out << kHeader << "\n";
  for (const auto& r : records_) {
    out << r.episode << ',' << format_double(r.meta_loss) << ','
        << (r.inner_loss ? format_double(*r.inner_loss) : "") << ',' << format_double(r.lr) << ','
        << (r.val_accuracy ? format_double(*r.val_accuracy) : "") << "\n";
  }
  return out.str();
}

RunLog RunLog::from_csv(std::string_view text) {
  RunLog log;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kHeader) bad_line(line_no, "expected header '" + std::string(kHeader) + "'");
      saw_header = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 5) bad_line(line_no, "expected 5 fields, found " + std::to_string(fields.size()));
    LogRecord r;
    std::size_t episode = 0;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), episode);
    if (ec != std::errc() || ptr != fields[0].data() + fields[0].size() || fields[0].empty()) {
      bad_line(line_no, "cannot parse episode '" + std::string(fields[0]) + "'");
    }
    r.episode = episode;
    r.meta_loss = parse_double(fields[1], line_no, "meta_loss");
    if (!fields[2].empty()) r.inner_loss = parse_double(fields[2], line_no, "inner_loss");
    r.lr = parse_double(fields[3], line_no, "lr");
    if (!fields[4].empty()) r.val_accuracy = parse_double(fields[4], line_no, "val_accuracy");
    try {
      log.append(r);
    } catch (const ContractViolation& e) {
      bad_line(line_no, e.what());
    }
  }
  if (!saw_header) throw FormatError("log.csv line 1: missing header");
  return log;
}

}  // namespace l2g
