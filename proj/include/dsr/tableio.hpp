#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsr/model.hpp"

namespace dsr {

enum class ColumnRole {
  continuous,
  categorical,
  binary,
  treatment,
  outcome,     // hard binary outcome
  soft_label,  // optional probability column, lets simulated data round-trip
  ignore
};

enum class MissingPolicy { drop_row, fill_mean, fill_mode };

ColumnRole role_from_name(std::string_view name);
const char* role_name(ColumnRole role);
MissingPolicy policy_from_name(std::string_view name);
const char* policy_name(MissingPolicy policy);

struct SchemaColumn {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  MissingPolicy missing = MissingPolicy::drop_row;
};

struct SchemaSpec {
  std::vector<SchemaColumn> columns;
  void validate() const;
};

// Schema file: one "name,role[,missing_policy]" line per column,
// # comments and blank lines allowed.
SchemaSpec load_schema(const std::filesystem::path& path);

struct TypedColumn {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  bool numeric = false;
  std::vector<double> nums;
  std::vector<std::string> strs;
};

struct TypedTable {
  std::vector<TypedColumn> columns;
  std::size_t row_count = 0;
  std::size_t dropped_rows = 0;
};

// RFC-4180-style CSV: quoted fields may contain commas, doubled quotes and
// newlines. Cells that are empty or NA/NaN/? are missing and handled per
// the column's policy; unparseable numeric cells report row and column.
TypedTable load_csv(const std::filesystem::path& path, const SchemaSpec& schema);

struct ColumnTransform {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  double mean = 0.0;
  double sd = 1.0;
  std::vector<std::string> levels;  // categorical, first level dropped
  bool dropped = false;             // zero-variance continuous column
};

struct TransformRecord {
  std::vector<ColumnTransform> columns;
  std::vector<std::string> feature_names;
  std::vector<std::string> warnings;
};

// Standardizes continuous columns (sample sd), one-hot encodes categorical
// ones with the first level dropped, passes binaries through, and records
// the statistics for test-time reuse.
std::pair<Dataset, TransformRecord> preprocess(const TypedTable& table,
                                               const SchemaSpec& schema);

// Applies a stored transform to new rows; unseen categories encode as
// all-zeros with a warning appended to *warnings when given.
Dataset apply_transform(const TypedTable& table, const TransformRecord& record,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace dsr
