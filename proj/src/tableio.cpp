#include "dsr/tableio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dsr {

ColumnRole role_from_name(std::string_view name) {
  if (name == "continuous") return ColumnRole::continuous;
  if (name == "categorical") return ColumnRole::categorical;
  if (name == "binary") return ColumnRole::binary;
  if (name == "treatment") return ColumnRole::treatment;
  if (name == "outcome") return ColumnRole::outcome;
  if (name == "soft_label") return ColumnRole::soft_label;
  if (name == "ignore") return ColumnRole::ignore;
  throw DataError("unknown column role: " + std::string(name));
}

const char* role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::continuous: return "continuous";
    case ColumnRole::categorical: return "categorical";
    case ColumnRole::binary: return "binary";
    case ColumnRole::treatment: return "treatment";
    case ColumnRole::outcome: return "outcome";
    case ColumnRole::soft_label: return "soft_label";
    case ColumnRole::ignore: return "ignore";
  }
  return "ignore";
}

MissingPolicy policy_from_name(std::string_view name) {
  if (name == "drop_row") return MissingPolicy::drop_row;
  if (name == "fill_mean") return MissingPolicy::fill_mean;
  if (name == "fill_mode") return MissingPolicy::fill_mode;
  throw DataError("unknown missing policy: " + std::string(name));
}

const char* policy_name(MissingPolicy policy) {
  switch (policy) {
    case MissingPolicy::drop_row: return "drop_row";
    case MissingPolicy::fill_mean: return "fill_mean";
    case MissingPolicy::fill_mode: return "fill_mode";
  }
  return "drop_row";
}

namespace {

bool role_is_numeric(ColumnRole role) {
  return role == ColumnRole::continuous || role == ColumnRole::binary ||
         role == ColumnRole::treatment || role == ColumnRole::outcome ||
         role == ColumnRole::soft_label;
}

std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_missing_cell(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" ||
         cell == "nan" || cell == "?";
}

double parse_cell_double(const std::string& cell, std::size_t row,
                         const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError("unparseable numeric cell at row " + std::to_string(row) +
                    ", column " + column + ": '" + cell + "'");
  return value;
}

// RFC-4180 field splitter; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool any_char = false;
  char c;
  while (in.get(c)) {
    any_char = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        break;
      case '\r': break;
      case '\n':
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        break;
      default: field.push_back(c);
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field at end of file");
  if (any_char && (!field.empty() || !record.empty())) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace

void SchemaSpec::validate() const {
  if (columns.empty()) throw DataError("schema has no columns");
  std::size_t treatments = 0, outcomes = 0, soft = 0, feature_columns = 0;
  std::set<std::string> seen;
  for (const SchemaColumn& col : columns) {
    if (col.name.empty()) throw DataError("schema column with empty name");
    if (!seen.insert(col.name).second)
      throw DataError("duplicate schema column: " + col.name);
    switch (col.role) {
      case ColumnRole::treatment: ++treatments; break;
      case ColumnRole::outcome: ++outcomes; break;
      case ColumnRole::soft_label: ++soft; break;
      case ColumnRole::continuous:
      case ColumnRole::categorical:
      case ColumnRole::binary: ++feature_columns; break;
      case ColumnRole::ignore: break;
    }
    if ((col.role == ColumnRole::treatment || col.role == ColumnRole::outcome ||
         col.role == ColumnRole::soft_label) &&
        col.missing != MissingPolicy::drop_row)
      throw DataError("column " + col.name +
                      ": treatment/outcome/soft_label support only drop_row");
    if (col.role == ColumnRole::categorical &&
        col.missing == MissingPolicy::fill_mean)
      throw DataError("column " + col.name +
                      ": categorical columns cannot fill_mean");
    if (role_is_numeric(col.role) && col.role != ColumnRole::binary &&
        col.missing == MissingPolicy::fill_mode)
      throw DataError("column " + col.name +
                      ": continuous columns cannot fill_mode");
  }
  if (treatments != 1) throw DataError("schema needs exactly one treatment column");
  if (outcomes != 1) throw DataError("schema needs exactly one outcome column");
  if (soft > 1) throw DataError("schema allows at most one soft_label column");
  if (feature_columns == 0) throw DataError("schema needs at least one feature column");
}

SchemaSpec load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file: " + path.string());
  SchemaSpec schema;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trimmed(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::vector<std::string> parts;
    std::stringstream ss(stripped);
    std::string part;
    while (std::getline(ss, part, ',')) parts.push_back(trimmed(part));
    if (parts.size() < 2 || parts.size() > 3)
      throw DataError("schema line " + std::to_string(line_no) +
                      ": expected name,role[,missing_policy]");
    SchemaColumn col;
    col.name = parts[0];
    col.role = role_from_name(parts[1]);
    if (parts.size() == 3) col.missing = policy_from_name(parts[2]);
    schema.columns.push_back(std::move(col));
  }
  schema.validate();
  return schema;
}

TypedTable load_csv(const std::filesystem::path& path, const SchemaSpec& schema) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file: " + path.string());
  const auto records = parse_csv_records(in);
  if (records.empty()) throw DataError("empty data file: " + path.string());

  const std::vector<std::string>& header = records.front();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position[trimmed(header[i])] = i;

  struct Bound {
    const SchemaColumn* schema_col;
    std::size_t csv_pos;
  };
  std::vector<Bound> bound;
  for (const SchemaColumn& col : schema.columns) {
    if (col.role == ColumnRole::ignore) continue;
    const auto it = position.find(col.name);
    if (it == position.end())
      throw DataError("data file is missing schema column: " + col.name);
    bound.push_back({&col, it->second});
  }

  // Pass 1: collect cells, mark missing, drop rows where a drop_row column
  // is missing.
  const std::size_t data_rows = records.size() - 1;
  std::vector<bool> keep(data_rows, true);
  for (std::size_t r = 0; r < data_rows; ++r) {
    const auto& rec = records[r + 1];
    if (rec.size() != header.size())
      throw DataError("row " + std::to_string(r + 2) + " has " +
                      std::to_string(rec.size()) + " fields, expected " +
                      std::to_string(header.size()));
    for (const Bound& b : bound) {
      if (b.schema_col->missing == MissingPolicy::drop_row &&
          is_missing_cell(trimmed(rec[b.csv_pos])))
        keep[r] = false;
    }
  }

  TypedTable table;
  for (const Bound& b : bound) {
    TypedColumn col;
    col.name = b.schema_col->name;
    col.role = b.schema_col->role;
    col.numeric = role_is_numeric(col.role);
    std::vector<bool> missing;
    for (std::size_t r = 0; r < data_rows; ++r) {
      if (!keep[r]) continue;
      const std::string cell = trimmed(records[r + 1][b.csv_pos]);
      const bool is_missing = is_missing_cell(cell);
      missing.push_back(is_missing);
      if (col.numeric)
        col.nums.push_back(is_missing ? 0.0 : parse_cell_double(cell, r + 2, col.name));
      else
        col.strs.push_back(is_missing ? std::string() : cell);
    }

    if (b.schema_col->missing == MissingPolicy::fill_mean) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < col.nums.size(); ++i)
        if (!missing[i]) {
          sum += col.nums[i];
          ++count;
        }
      if (count == 0 && !col.nums.empty())
        throw DataError("column " + col.name + " has no observed values to fill from");
      const double fill = count ? sum / static_cast<double>(count) : 0.0;
      for (std::size_t i = 0; i < col.nums.size(); ++i)
        if (missing[i]) col.nums[i] = fill;
    } else if (b.schema_col->missing == MissingPolicy::fill_mode) {
      std::map<std::string, std::size_t> counts;
      std::map<double, std::size_t> num_counts;
      for (std::size_t i = 0; i < missing.size(); ++i) {
        if (missing[i]) continue;
        if (col.numeric)
          ++num_counts[col.nums[i]];
        else
          ++counts[col.strs[i]];
      }
      if (counts.empty() && num_counts.empty() && !missing.empty())
        throw DataError("column " + col.name + " has no observed values to fill from");
      if (col.numeric) {
        double mode = 0.0;
        std::size_t best = 0;
        for (const auto& [v, c] : num_counts)
          if (c > best) {
            best = c;
            mode = v;
          }
        for (std::size_t i = 0; i < missing.size(); ++i)
          if (missing[i]) col.nums[i] = mode;
      } else {
        std::string mode;
        std::size_t best = 0;
        for (const auto& [v, c] : counts)
          if (c > best) {
            best = c;
            mode = v;
          }
        for (std::size_t i = 0; i < missing.size(); ++i)
          if (missing[i]) col.strs[i] = mode;
      }
    }
    table.columns.push_back(std::move(col));
  }

  table.row_count = 0;
  for (std::size_t r = 0; r < data_rows; ++r)
    if (keep[r]) ++table.row_count;
  table.dropped_rows = data_rows - table.row_count;
  if (table.row_count == 0) throw DataError("no rows left after missing-row drops");
  return table;
}

namespace {

const TypedColumn* find_column(const TypedTable& table, const std::string& name) {
  for (const TypedColumn& col : table.columns)
    if (col.name == name) return &col;
  return nullptr;
}

void append_feature_block(const TypedTable& table, const TransformRecord& record,
                          Dataset& out, std::vector<std::string>* warnings) {
  const std::size_t n = table.row_count;
  out.features = Matrix(n, record.feature_names.size());
  std::size_t at = 0;
  for (const ColumnTransform& tr : record.columns) {
    if (tr.role == ColumnRole::continuous) {
      if (tr.dropped) continue;
      const TypedColumn* col = find_column(table, tr.name);
      if (!col) throw DataError("table is missing column: " + tr.name);
      for (std::size_t i = 0; i < n; ++i)
        out.features(i, at) = (col->nums[i] - tr.mean) / tr.sd;
      ++at;
    } else if (tr.role == ColumnRole::binary) {
      const TypedColumn* col = find_column(table, tr.name);
      if (!col) throw DataError("table is missing column: " + tr.name);
      for (std::size_t i = 0; i < n; ++i) {
        const double v = col->nums[i];
        if (v != 0.0 && v != 1.0)
          throw DataError("binary column " + tr.name + " has value outside {0,1}");
        out.features(i, at) = v;
      }
      ++at;
    } else if (tr.role == ColumnRole::categorical) {
      const TypedColumn* col = find_column(table, tr.name);
      if (!col) throw DataError("table is missing column: " + tr.name);
      const std::size_t block = tr.levels.size() - 1;  // first level dropped
      for (std::size_t i = 0; i < n; ++i) {
        const std::string& v = col->strs[i];
        const auto it = std::find(tr.levels.begin(), tr.levels.end(), v);
        if (it == tr.levels.end()) {
          if (warnings)
            warnings->push_back("unseen category '" + v + "' in column " +
                                tr.name + "; encoded as all zeros");
          continue;  // all-zeros block
        }
        const std::size_t level = static_cast<std::size_t>(it - tr.levels.begin());
        if (level > 0) out.features(i, at + level - 1) = 1.0;
      }
      at += block;
    }
  }
  out.feature_names = record.feature_names;
}

void fill_special_columns(const TypedTable& table, Dataset& out) {
  const std::size_t n = table.row_count;
  for (const TypedColumn& col : table.columns) {
    if (col.role == ColumnRole::treatment) {
      out.treatment = col.nums;
    } else if (col.role == ColumnRole::outcome) {
      out.hard_labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (col.nums[i] != 0.0 && col.nums[i] != 1.0)
          throw DataError("outcome column " + col.name + " has value outside {0,1}");
        out.hard_labels[i] = col.nums[i] != 0.0 ? 1 : 0;
      }
    } else if (col.role == ColumnRole::soft_label) {
      out.soft_probs = col.nums;
      for (double v : out.soft_probs)
        if (!(v >= 0.0 && v <= 1.0))
          throw DataError("soft_label column " + col.name + " outside [0,1]");
    }
  }
}

}  // namespace

std::pair<Dataset, TransformRecord> preprocess(const TypedTable& table,
                                               const SchemaSpec& schema) {
  TransformRecord record;
  for (const SchemaColumn& spec : schema.columns) {
    if (spec.role != ColumnRole::continuous &&
        spec.role != ColumnRole::categorical && spec.role != ColumnRole::binary)
      continue;
    const TypedColumn* col = find_column(table, spec.name);
    if (!col) throw DataError("table is missing column: " + spec.name);
    ColumnTransform tr;
    tr.name = spec.name;
    tr.role = spec.role;
    if (spec.role == ColumnRole::continuous) {
      tr.mean = mean(col->nums);
      tr.sd = sample_sd(col->nums);
      if (!(tr.sd > 0.0)) {
        tr.dropped = true;
        tr.sd = 1.0;
        record.warnings.push_back("dropped zero-variance column " + spec.name);
      } else {
        record.feature_names.push_back(spec.name);
      }
    } else if (spec.role == ColumnRole::binary) {
      record.feature_names.push_back(spec.name);
    } else {
      std::set<std::string> levels(col->strs.begin(), col->strs.end());
      if (levels.size() < 2)
        throw DataError("categorical column " + spec.name + " has fewer than 2 levels");
      tr.levels.assign(levels.begin(), levels.end());
      for (std::size_t l = 1; l < tr.levels.size(); ++l)
        record.feature_names.push_back(spec.name + "=" + tr.levels[l]);
    }
    record.columns.push_back(std::move(tr));
  }

  Dataset dataset = apply_transform(table, record, &record.warnings);
  return {std::move(dataset), std::move(record)};
}

Dataset apply_transform(const TypedTable& table, const TransformRecord& record,
                        std::vector<std::string>* warnings) {
  Dataset out;
  append_feature_block(table, record, out, warnings);
  fill_special_columns(table, out);
  if (out.treatment.empty())
    throw DataError("table has no treatment column");
  if (out.hard_labels.empty() && out.soft_probs.empty())
    throw DataError("table has neither outcome nor soft_label values");
  if (out.hard_labels.empty()) out.hard_labels.clear();
  out.validate();
  return out;
}

}  // namespace dsr
