#include "temvip/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace temvip {

std::string to_string(OutcomeType t) {
  switch (t) {
    case OutcomeType::Auto: return "auto";
    case OutcomeType::Continuous: return "continuous";
    case OutcomeType::Binary: return "binary";
    case OutcomeType::Survival: return "survival";
  }
  return "auto";
}

OutcomeType parse_outcome_type(const std::string& name) {
  if (name == "auto") return OutcomeType::Auto;
  if (name == "continuous") return OutcomeType::Continuous;
  if (name == "binary") return OutcomeType::Binary;
  if (name == "survival") return OutcomeType::Survival;
  throw Error(ErrorCode::InvalidArgument, "unknown outcome type '" + name + "'");
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false, any = false;
  std::size_t line = 1;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (table.header.empty())
      table.header = std::move(record);
    else if (!(record.size() == 1 && record[0].empty()))  // skip blank lines
      table.rows.push_back(std::move(record));
    record.clear();
  };
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (in.peek() != '\n') field.push_back(c);
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::ParseError, "unterminated quoted field near line " + std::to_string(line));
  if (!field.empty() || !record.empty() || field_started) end_record();
  if (!any || table.header.empty()) throw Error(ErrorCode::ParseError, "empty CSV input; a header row is required");
  return table;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null")
    throw Error(ErrorCode::ParseError, "ParseError(row " + std::to_string(row) + ", column '" + col + "'): missing value");
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCode::ParseError,
                "ParseError(row " + std::to_string(row) + ", column '" + col + "'): not a number: '" + s + "'");
  if (!std::isfinite(v))
    throw Error(ErrorCode::NonFinite, "non-finite value in row " + std::to_string(row) + ", column '" + col + "'");
  return v;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name, const char* role) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw Error(ErrorCode::MissingColumn, std::string(role) + " column '" + name + "' not found in the header");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

ObservedDataset parse_csv(std::istream& in, const ColumnRoles& roles) {
  CsvTable table = read_csv(in);
  for (auto& h : table.header) h = trim(h);
  const auto& header = table.header;
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw Error(ErrorCode::ParseError, "duplicate column name '" + h + "'");
  }
  bool survival = roles.outcome_type == OutcomeType::Survival ||
                  (roles.outcome_type == OutcomeType::Auto && (!roles.time.empty() || !roles.censor.empty()));
  std::set<std::size_t> assigned;
  const std::size_t a_col = find_column(header, roles.treatment, "treatment");
  assigned.insert(a_col);
  std::size_t y_col = 0, t_col = 0, c_col = 0;
  if (survival) {
    if (roles.time.empty()) throw Error(ErrorCode::MissingColumn, "survival data needs a time column");
    if (roles.censor.empty()) throw Error(ErrorCode::MissingColumn, "survival data needs a censor column");
    t_col = find_column(header, roles.time, "time");
    c_col = find_column(header, roles.censor, "censor");
    assigned.insert(t_col);
    assigned.insert(c_col);
  } else {
    y_col = find_column(header, roles.outcome, "outcome");
    assigned.insert(y_col);
  }

  std::vector<std::size_t> cov_cols;
  if (!roles.include.empty()) {
    for (const auto& name : roles.include) {
      const std::size_t c = find_column(header, name, "covariate");
      if (!assigned.count(c)) cov_cols.push_back(c);
    }
  } else {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (!assigned.count(c)) cov_cols.push_back(c);
  }
  for (const auto& name : roles.exclude) find_column(header, name, "excluded");
  std::erase_if(cov_cols, [&](std::size_t c) {
    return std::find(roles.exclude.begin(), roles.exclude.end(), header[c]) != roles.exclude.end();
  });
  if (cov_cols.empty()) throw Error(ErrorCode::NoCovariates, "no covariate columns remain after role assignment");

  const std::size_t n = table.rows.size();
  if (n == 0) throw Error(ErrorCode::EmptyData, "CSV has a header but no data rows");
  for (std::size_t r = 0; r < n; ++r)
    if (table.rows[r].size() != header.size())
      throw Error(ErrorCode::ParseError, "ParseError(row " + std::to_string(r + 1) + "): expected " +
                                             std::to_string(header.size()) + " fields, found " +
                                             std::to_string(table.rows[r].size()));

  ObservedDataset d;
  const auto ni = static_cast<Eigen::Index>(n);
  d.covariates.resize(ni, static_cast<Eigen::Index>(cov_cols.size()));
  d.treatment.resize(ni);
  for (std::size_t c : cov_cols) d.covariate_names.push_back(header[c]);
  std::vector<double> y(n), times(n), censor(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const auto ri = static_cast<Eigen::Index>(r);
    d.treatment[ri] = parse_cell(row[a_col], r + 1, header[a_col]);
    for (std::size_t k = 0; k < cov_cols.size(); ++k)
      d.covariates(ri, static_cast<Eigen::Index>(k)) = parse_cell(row[cov_cols[k]], r + 1, header[cov_cols[k]]);
    if (survival) {
      times[r] = parse_cell(row[t_col], r + 1, header[t_col]);
      censor[r] = parse_cell(row[c_col], r + 1, header[c_col]);
    } else {
      y[r] = parse_cell(row[y_col], r + 1, header[y_col]);
    }
  }

  if (survival) {
    if (!(roles.bin_width > 0.0))
      throw Error(ErrorCode::InvalidArgument, "survival data needs a positive bin width for time discretization");
    auto [bins, grid] = discretize_times(times, roles.bin_width);
    SurvivalOutcome s;
    s.t_tilde = std::move(bins);
    s.t_max = grid.t_max;
    for (std::size_t r = 0; r < n; ++r) {
      if (censor[r] != 0.0 && censor[r] != 1.0)
        throw Error(ErrorCode::ParseError, "ParseError(row " + std::to_string(r + 1) + ", column '" + header[c_col] +
                                               "'): censor indicator must be 0 or 1");
      s.delta.push_back(static_cast<int>(censor[r]));
    }
    d.outcome = std::move(s);
  } else {
    Vector yv = Eigen::Map<Vector>(y.data(), ni);
    bool binary = roles.outcome_type == OutcomeType::Binary;
    if (roles.outcome_type == OutcomeType::Auto)
      binary = std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
    if (binary)
      d.outcome = BinaryOutcome{std::move(yv)};
    else
      d.outcome = ContinuousOutcome{std::move(yv)};
  }
  return d;
}

ObservedDataset parse_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return parse_csv(in, roles);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_result_csv(std::ostream& out, const TemVipResult& result) {
  out << "covariate,estimate,std_err,ci_lower,ci_upper,p_value,p_adj,tem_flag\n";
  for (const auto& r : result.rows)
    out << quote(r.covariate) << ',' << format_double(r.estimate) << ',' << format_double(r.std_err) << ','
        << format_double(r.ci_lower) << ',' << format_double(r.ci_upper) << ',' << format_double(r.p_value) << ','
        << format_double(r.p_adj) << ',' << (r.tem ? 1 : 0) << '\n';
}

void write_tidy_csv(std::ostream& out, const std::vector<TidyRow>& rows) {
  out << "scenario,n,rep,estimator,covariate,estimate,std_err,p_adj,truth\n";
  for (const auto& r : rows)
    out << r.scenario << ',' << r.n << ',' << r.rep << ',' << r.estimator << ',' << quote(r.covariate) << ','
        << format_double(r.estimate) << ',' << format_double(r.std_err) << ',' << format_double(r.p_adj) << ','
        << format_double(r.truth) << '\n';
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "scenario,n,estimator,reps,failures,bias_tem,bias_nontem,var_tem,var_nontem,se2_tem,fdr,tnr,tpr\n";
  for (const auto& m : rows)
    out << m.scenario << ',' << m.n << ',' << m.estimator << ',' << m.reps << ',' << m.failures << ','
        << format_double(m.bias_tem) << ',' << format_double(m.bias_nontem) << ',' << format_double(m.var_tem) << ','
        << format_double(m.var_nontem) << ',' << format_double(m.se2_tem) << ',' << format_double(m.fdr) << ','
        << format_double(m.tnr) << ',' << format_double(m.tpr) << '\n';
}

void write_dataset_csv(std::ostream& out, const ObservedDataset& d) {
  const bool surv = d.family() == OutcomeFamily::Survival;
  out << "A," << (surv ? "time,censor" : "Y");
  for (std::size_t j = 0; j < d.p(); ++j)
    out << ',' << quote(j < d.covariate_names.size() ? d.covariate_names[j] : "W" + std::to_string(j + 1));
  out << '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << format_double(d.treatment[ii]) << ',';
    if (surv)
      out << d.survival().t_tilde[i] << ',' << d.survival().delta[i];
    else
      out << format_double(d.y()[ii]);
    for (std::size_t j = 0; j < d.p(); ++j) out << ',' << format_double(d.covariates(ii, static_cast<Eigen::Index>(j)));
    out << '\n';
  }
}

}  // namespace temvip
