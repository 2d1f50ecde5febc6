#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dsr/tableio.hpp"

using namespace dsr;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "dsr_tableio_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = test_dir() / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

SchemaColumn make_column(std::string name, ColumnRole role,
                         MissingPolicy missing = MissingPolicy::drop_row) {
  SchemaColumn col;
  col.name = std::move(name);
  col.role = role;
  col.missing = missing;
  return col;
}

// Minimal valid schema: one continuous feature plus the required treatment
// and outcome columns.
SchemaSpec xty_schema(MissingPolicy x_policy = MissingPolicy::drop_row) {
  SchemaSpec schema;
  schema.columns.push_back(make_column("x", ColumnRole::continuous, x_policy));
  schema.columns.push_back(make_column("tau", ColumnRole::treatment));
  schema.columns.push_back(make_column("y", ColumnRole::outcome));
  return schema;
}

const TypedColumn& column_named(const TypedTable& table, const std::string& name) {
  for (const TypedColumn& col : table.columns)
    if (col.name == name) return col;
  throw std::runtime_error("test fixture lacks column " + name);
}

}  // namespace

TEST_CASE("schema files parse roles, policies and comments") {
  const fs::path path = write_file("schema_basic.txt",
                                   "# cohort schema\n"
                                   "age, continuous, fill_mean\n"
                                   "\n"
                                   "sex, binary\n"
                                   "dose, treatment\n"
                                   "inr_ok, outcome\n"
                                   "note, ignore\n");
  const SchemaSpec schema = load_schema(path);
  REQUIRE(schema.columns.size() == 5);
  CHECK(schema.columns[0].name == "age");
  CHECK(schema.columns[0].role == ColumnRole::continuous);
  CHECK(schema.columns[0].missing == MissingPolicy::fill_mean);
  CHECK(schema.columns[1].role == ColumnRole::binary);
  CHECK(schema.columns[1].missing == MissingPolicy::drop_row);
  CHECK(schema.columns[2].role == ColumnRole::treatment);
  CHECK(schema.columns[3].role == ColumnRole::outcome);
  CHECK(schema.columns[4].role == ColumnRole::ignore);

  CHECK(role_from_name(role_name(ColumnRole::categorical)) ==
        ColumnRole::categorical);
  CHECK(policy_from_name(policy_name(MissingPolicy::fill_mode)) ==
        MissingPolicy::fill_mode);
  CHECK_THROWS_WITH_AS(role_from_name("float"), doctest::Contains("unknown"),
                       DataError);
  CHECK_THROWS_WITH_AS(policy_from_name("zero"), doctest::Contains("unknown"),
                       DataError);

  const fs::path bad = write_file("schema_bad.txt", "age\n");
  CHECK_THROWS_WITH_AS(load_schema(bad), doctest::Contains("expected name,role"),
                       DataError);
  CHECK_THROWS_AS(load_schema(test_dir() / "no_such_schema.txt"), DataError);
}

TEST_CASE("schema validation enforces structural rules") {
  SchemaSpec schema = xty_schema();
  CHECK_NOTHROW(schema.validate());

  SUBCASE("exactly one treatment") {
    schema.columns[1].role = ColumnRole::continuous;
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("exactly one treatment"), DataError);
    schema = xty_schema();
    schema.columns.push_back(make_column("tau2", ColumnRole::treatment));
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("exactly one treatment"), DataError);
  }
  SUBCASE("exactly one outcome") {
    schema.columns[2].role = ColumnRole::ignore;
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("exactly one outcome"), DataError);
  }
  SUBCASE("at least one feature") {
    schema.columns[0].role = ColumnRole::ignore;
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("at least one feature"), DataError);
  }
  SUBCASE("duplicate names") {
    schema.columns.push_back(make_column("x", ColumnRole::binary));
    CHECK_THROWS_WITH_AS(schema.validate(), doctest::Contains("duplicate"),
                         DataError);
  }
  SUBCASE("policy restrictions") {
    schema.columns[1].missing = MissingPolicy::fill_mean;
    CHECK_THROWS_WITH_AS(schema.validate(), doctest::Contains("only drop_row"),
                         DataError);
    schema = xty_schema();
    schema.columns.push_back(
        make_column("cat", ColumnRole::categorical, MissingPolicy::fill_mean));
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("cannot fill_mean"), DataError);
    schema = xty_schema(MissingPolicy::fill_mode);
    CHECK_THROWS_WITH_AS(schema.validate(),
                         doctest::Contains("cannot fill_mode"), DataError);
  }
}

TEST_CASE("csv parsing honors quoting, escapes and embedded newlines") {
  SchemaSpec schema;
  schema.columns.push_back(make_column("name", ColumnRole::categorical));
  schema.columns.push_back(make_column("x", ColumnRole::continuous));
  schema.columns.push_back(make_column("tau", ColumnRole::treatment));
  schema.columns.push_back(make_column("y", ColumnRole::outcome));

  const fs::path path = write_file("quoted.csv",
                                   "name,x,tau,y\n"
                                   "\"Doe, Jane\",1.5,0.2,1\n"
                                   "\"quote \"\"here\"\"\",2.5,0.4,0\n"
                                   "\"multi\nline\",3.5,0.6,1\n");
  const TypedTable table = load_csv(path, schema);
  CHECK(table.row_count == 3);
  CHECK(table.dropped_rows == 0);
  const TypedColumn& names = column_named(table, "name");
  CHECK(names.strs[0] == "Doe, Jane");
  CHECK(names.strs[1] == "quote \"here\"");
  CHECK(names.strs[2] == "multi\nline");
  const TypedColumn& x = column_named(table, "x");
  CHECK(x.nums == std::vector<double>{1.5, 2.5, 3.5});

  const fs::path open_quote =
      write_file("open_quote.csv", "name,x,tau,y\n\"oops,1.0,0.2,1\n");
  CHECK_THROWS_WITH_AS(load_csv(open_quote, schema),
                       doctest::Contains("unterminated"), DataError);
}

TEST_CASE("missing cells follow the column policy") {
  SUBCASE("fill_mean uses the mean of the observed cells") {
    const fs::path path = write_file("fill_mean.csv",
                                     "x,tau,y\n"
                                     "1.0,0.1,0\n"
                                     "NA,0.2,1\n"
                                     "3.0,0.3,0\n");
    const TypedTable table = load_csv(path, xty_schema(MissingPolicy::fill_mean));
    CHECK(table.row_count == 3);
    CHECK(column_named(table, "x").nums == std::vector<double>{1.0, 2.0, 3.0});
  }
  SUBCASE("fill_mode picks the most frequent level") {
    SchemaSpec schema = xty_schema();
    schema.columns.push_back(
        make_column("cat", ColumnRole::categorical, MissingPolicy::fill_mode));
    const fs::path path = write_file("fill_mode.csv",
                                     "x,tau,y,cat\n"
                                     "1.0,0.1,0,A\n"
                                     "2.0,0.2,1,?\n"
                                     "3.0,0.3,0,A\n"
                                     "4.0,0.4,1,B\n");
    const TypedTable table = load_csv(path, schema);
    CHECK(column_named(table, "cat").strs ==
          std::vector<std::string>{"A", "A", "A", "B"});
  }
  SUBCASE("fill_mode works on binary columns") {
    SchemaSpec schema = xty_schema();
    schema.columns.push_back(
        make_column("flag", ColumnRole::binary, MissingPolicy::fill_mode));
    const fs::path path = write_file("fill_mode_bin.csv",
                                     "x,tau,y,flag\n"
                                     "1.0,0.1,0,1\n"
                                     "2.0,0.2,1,NA\n"
                                     "3.0,0.3,0,1\n"
                                     "4.0,0.4,1,0\n");
    const TypedTable table = load_csv(path, schema);
    CHECK(column_named(table, "flag").nums ==
          std::vector<double>{1.0, 1.0, 1.0, 0.0});
  }
  SUBCASE("drop_row removes the affected rows") {
    const fs::path path = write_file("drop_row.csv",
                                     "x,tau,y\n"
                                     "1.0,0.1,0\n"
                                     "2.0,,1\n"
                                     "3.0,0.3,0\n");
    const TypedTable table = load_csv(path, xty_schema());
    CHECK(table.row_count == 2);
    CHECK(table.dropped_rows == 1);
    CHECK(column_named(table, "x").nums == std::vector<double>{1.0, 3.0});
    CHECK(column_named(table, "tau").nums == std::vector<double>{0.1, 0.3});
  }
  SUBCASE("dropping every row is an error") {
    const fs::path path = write_file("drop_all.csv",
                                     "x,tau,y\n"
                                     "1.0,NA,0\n"
                                     "2.0,?,1\n");
    CHECK_THROWS_WITH_AS(load_csv(path, xty_schema()),
                         doctest::Contains("no rows left"), DataError);
  }
  SUBCASE("a fully missing fill column has nothing to fill from") {
    const fs::path path = write_file("fill_empty.csv",
                                     "x,tau,y\n"
                                     "NA,0.1,0\n"
                                     "nan,0.2,1\n");
    CHECK_THROWS_WITH_AS(load_csv(path, xty_schema(MissingPolicy::fill_mean)),
                         doctest::Contains("no observed values"), DataError);
  }
}

TEST_CASE("csv loading reports precise error coordinates") {
  const fs::path bad_cell = write_file("bad_cell.csv",
                                       "x,tau,y\n"
                                       "1.0,0.1,0\n"
                                       "abc,0.2,1\n");
  CHECK_THROWS_WITH_AS(load_csv(bad_cell, xty_schema()),
                       doctest::Contains("row 3, column x"), DataError);

  SchemaSpec schema = xty_schema();
  schema.columns[1].name = "dose";
  const fs::path no_dose = write_file("no_dose.csv", "x,tau,y\n1.0,0.1,0\n");
  CHECK_THROWS_WITH_AS(load_csv(no_dose, schema), doctest::Contains("dose"),
                       DataError);

  const fs::path ragged = write_file("ragged.csv",
                                     "x,tau,y\n"
                                     "1.0,0.1,0\n"
                                     "2.0,0.2\n");
  CHECK_THROWS_WITH_AS(load_csv(ragged, xty_schema()),
                       doctest::Contains("fields"), DataError);

  const fs::path empty = write_file("empty.csv", "");
  CHECK_THROWS_WITH_AS(load_csv(empty, xty_schema()), doctest::Contains("empty"),
                       DataError);
}

TEST_CASE("standardization maps a simple column to unit scale") {
  const fs::path path = write_file("standardize.csv",
                                   "x,tau,y\n"
                                   "1,0.1,0\n"
                                   "2,0.2,1\n"
                                   "3,0.3,0\n");
  const SchemaSpec schema = xty_schema();
  const TypedTable table = load_csv(path, schema);
  const auto [data, record] = preprocess(table, schema);
  REQUIRE(data.p() == 1);
  // Sample sd of (1, 2, 3) is exactly 1, so the column lands on (-1, 0, 1).
  CHECK(data.features(0, 0) == -1.0);
  CHECK(data.features(1, 0) == 0.0);
  CHECK(data.features(2, 0) == 1.0);
  CHECK(record.columns[0].mean == 2.0);
  CHECK(record.columns[0].sd == 1.0);
  CHECK(data.treatment == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(data.hard_labels == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(data.feature_names == std::vector<std::string>{"x"});
}

TEST_CASE("categorical encoding drops the first level") {
  SchemaSpec schema;
  schema.columns.push_back(make_column("cat", ColumnRole::categorical));
  schema.columns.push_back(make_column("tau", ColumnRole::treatment));
  schema.columns.push_back(make_column("y", ColumnRole::outcome));

  SUBCASE("three levels emit two indicators") {
    const fs::path path = write_file("cat3.csv",
                                     "cat,tau,y\n"
                                     "B,0.1,0\n"
                                     "A,0.2,1\n"
                                     "C,0.3,0\n"
                                     "A,0.4,1\n"
                                     "B,0.5,1\n");
    const TypedTable table = load_csv(path, schema);
    const auto [data, record] = preprocess(table, schema);
    CHECK(record.columns[0].levels ==
          std::vector<std::string>{"A", "B", "C"});
    REQUIRE(data.p() == 2);
    CHECK(data.feature_names == std::vector<std::string>{"cat=B", "cat=C"});
    const double expect[5][2] = {
        {1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}, {1.0, 0.0}};
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(data.features(i, j) == expect[i][j]);
  }
  SUBCASE("two levels emit a single indicator") {
    const fs::path path = write_file("cat2.csv",
                                     "cat,tau,y\n"
                                     "A,0.1,0\n"
                                     "B,0.2,1\n"
                                     "A,0.3,0\n");
    const TypedTable table = load_csv(path, schema);
    const auto [data, record] = preprocess(table, schema);
    REQUIRE(data.p() == 1);
    CHECK(data.feature_names == std::vector<std::string>{"cat=B"});
    CHECK(data.features(0, 0) == 0.0);
    CHECK(data.features(1, 0) == 1.0);
    CHECK(data.features(2, 0) == 0.0);
  }
  SUBCASE("a single level cannot be encoded") {
    const fs::path path = write_file("cat1.csv",
                                     "cat,tau,y\n"
                                     "A,0.1,0\n"
                                     "A,0.2,1\n");
    const TypedTable table = load_csv(path, schema);
    CHECK_THROWS_WITH_AS(preprocess(table, schema),
                         doctest::Contains("fewer than 2 levels"), DataError);
  }
}

TEST_CASE("zero-variance columns are dropped with a warning") {
  SchemaSpec schema = xty_schema();
  schema.columns.push_back(make_column("flat", ColumnRole::continuous));
  const fs::path path = write_file("flat.csv",
                                   "x,tau,y,flat\n"
                                   "1,0.1,0,5\n"
                                   "2,0.2,1,5\n"
                                   "3,0.3,0,5\n");
  const TypedTable table = load_csv(path, schema);
  const auto [data, record] = preprocess(table, schema);
  CHECK(data.p() == 1);
  CHECK(data.feature_names == std::vector<std::string>{"x"});
  REQUIRE(record.warnings.size() == 1);
  CHECK(record.warnings[0] ==
        "dropped zero-variance column flat");
}

TEST_CASE("binary columns pass through unchanged") {
  SchemaSpec schema = xty_schema();
  schema.columns.push_back(make_column("flag", ColumnRole::binary));
  const fs::path path = write_file("binary.csv",
                                   "x,tau,y,flag\n"
                                   "1,0.1,0,1\n"
                                   "2,0.2,1,0\n"
                                   "3,0.3,0,1\n");
  const TypedTable table = load_csv(path, schema);
  const auto [data, record] = preprocess(table, schema);
  REQUIRE(data.p() == 2);
  CHECK(data.features(0, 1) == 1.0);
  CHECK(data.features(1, 1) == 0.0);
  CHECK(data.features(2, 1) == 1.0);

  const fs::path bad = write_file("binary_bad.csv",
                                  "x,tau,y,flag\n"
                                  "1,0.1,0,2\n"
                                  "2,0.2,1,0\n");
  const TypedTable bad_table = load_csv(bad, schema);
  CHECK_THROWS_WITH_AS(preprocess(bad_table, schema),
                       doctest::Contains("outside {0,1}"), DataError);
}

TEST_CASE("stored transforms replay on new rows") {
  SchemaSpec schema;
  schema.columns.push_back(make_column("x", ColumnRole::continuous));
  schema.columns.push_back(make_column("cat", ColumnRole::categorical));
  schema.columns.push_back(make_column("tau", ColumnRole::treatment));
  schema.columns.push_back(make_column("y", ColumnRole::outcome));

  const fs::path train_path = write_file("replay_train.csv",
                                         "x,cat,tau,y\n"
                                         "1,A,0.1,0\n"
                                         "2,B,0.2,1\n"
                                         "3,A,0.3,0\n"
                                         "4,C,0.4,1\n"
                                         "5,B,0.5,1\n");
  const TypedTable train = load_csv(train_path, schema);
  const auto [train_data, record] = preprocess(train, schema);
  REQUIRE(train_data.p() == 3);

  const fs::path test_path = write_file("replay_test.csv",
                                        "x,cat,tau,y\n"
                                        "4,Z,0.9,1\n"
                                        "3,A,0.8,0\n");
  const TypedTable test = load_csv(test_path, schema);
  std::vector<std::string> warnings;
  const Dataset out = apply_transform(test, record, &warnings);

  // Test rows are scaled with the training statistics, not their own.
  CHECK(out.features(0, 0) == (4.0 - 3.0) / std::sqrt(2.5));
  CHECK(out.features(1, 0) == 0.0);
  // Unseen category encodes as all zeros and warns; level A is the dropped
  // reference level, also all zeros.
  CHECK(out.features(0, 1) == 0.0);
  CHECK(out.features(0, 2) == 0.0);
  CHECK(out.features(1, 1) == 0.0);
  CHECK(out.features(1, 2) == 0.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0] == "unseen category 'Z' in column cat; encoded as all zeros");

  // Replaying the same transform on the same rows is exact.
  const Dataset again = apply_transform(test, record, nullptr);
  for (std::size_t i = 0; i < out.n(); ++i)
    for (std::size_t j = 0; j < out.p(); ++j)
      CHECK(out.features(i, j) == again.features(i, j));
  CHECK(out.treatment == again.treatment);

  // A table lacking a transformed column is rejected by name.
  const fs::path missing_path = write_file("replay_missing.csv",
                                           "x,tau,y\n"
                                           "1,0.1,0\n"
                                           "2,0.2,1\n");
  const TypedTable missing = load_csv(missing_path, xty_schema());
  CHECK_THROWS_WITH_AS(apply_transform(missing, record, nullptr),
                       doctest::Contains("missing column: cat"), DataError);
}

TEST_CASE("special columns populate the dataset") {
  SchemaSpec schema = xty_schema();
  schema.columns.push_back(make_column("p", ColumnRole::soft_label));

  SUBCASE("soft labels ride along when present") {
    const fs::path path = write_file("soft.csv",
                                     "x,tau,y,p\n"
                                     "1,0.1,0,0.3\n"
                                     "2,0.2,1,0.7\n");
    const TypedTable table = load_csv(path, schema);
    const auto [data, record] = preprocess(table, schema);
    CHECK(data.soft_probs == std::vector<double>{0.3, 0.7});
    CHECK(data.hard_labels == std::vector<std::uint8_t>{0, 1});
  }
  SUBCASE("out-of-range probabilities are rejected") {
    const fs::path path = write_file("soft_bad.csv",
                                     "x,tau,y,p\n"
                                     "1,0.1,0,1.5\n"
                                     "2,0.2,1,0.7\n");
    const TypedTable table = load_csv(path, schema);
    CHECK_THROWS_WITH_AS(preprocess(table, schema),
                         doctest::Contains("outside [0,1]"), DataError);
  }
  SUBCASE("outcome cells must be 0 or 1") {
    const fs::path path = write_file("outcome_bad.csv",
                                     "x,tau,y\n"
                                     "1,0.1,2\n"
                                     "2,0.2,1\n");
    const TypedTable table = load_csv(path, xty_schema());
    CHECK_THROWS_WITH_AS(preprocess(table, xty_schema()),
                         doctest::Contains("outside {0,1}"), DataError);
  }
}
