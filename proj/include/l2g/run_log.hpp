#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace l2g {

struct LogRecord {
  std::size_t episode = 0;
  double meta_loss = 0.0;
  std::optional<double> inner_loss;
  double lr = 0.0;
  std::optional<double> val_accuracy;
};

// Training trace written as log.csv with columns
// episode,meta_loss,inner_loss,lr,val_accuracy (blank when absent).
class RunLog {
 public:
  // Throws ContractViolation unless episode indices strictly increase.
  void append(const LogRecord& record);

  const std::vector<LogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::string to_csv() const;
  // Throws FormatError naming the offending line.
  static RunLog from_csv(std::string_view text);

 private:
  std::vector<LogRecord> records_;
};

}  // namespace l2g
