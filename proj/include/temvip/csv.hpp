#ifndef TEMVIP_CSV_HPP
#define TEMVIP_CSV_HPP

#include "temvip/data.hpp"
#include "temvip/estimators.hpp"
#include "temvip/sim.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace temvip {

enum class OutcomeType { Auto, Continuous, Binary, Survival };

std::string to_string(OutcomeType t);
OutcomeType parse_outcome_type(const std::string& name);

struct ColumnRoles {
  std::string treatment = "A";
  std::string outcome = "Y";  // continuous or binary outcome
  std::string time;           // survival: observed time
  std::string censor;         // survival: 1 = censored, 0 = event
  std::vector<std::string> include;  // empty = every unassigned column
  std::vector<std::string> exclude;
  OutcomeType outcome_type = OutcomeType::Auto;
  double bin_width = 0.0;  // required for survival data
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180: comma separated, optional double quotes with "" escapes, LF or CRLF.
CsvTable read_csv(std::istream& in);

/// Maps columns by name. Empty or NA cells raise ParseError naming the data row
/// (1 = first row after the header) and the column.
ObservedDataset parse_csv(const std::string& path, const ColumnRoles& roles);
ObservedDataset parse_csv(std::istream& in, const ColumnRoles& roles);

/// 17 significant digits; NaN prints as NA.
std::string format_double(double x);

void write_result_csv(std::ostream& out, const TemVipResult& result);
void write_tidy_csv(std::ostream& out, const std::vector<TidyRow>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// Writes a dataset in the layout parse_csv reads back (A, Y or time/censor, covariates).
void write_dataset_csv(std::ostream& out, const ObservedDataset& d);

}  // namespace temvip

#endif  // TEMVIP_CSV_HPP
